#include "tokenrl/dataset.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "tokenrl/rng.hpp"

namespace tokenrl {

namespace {

using Words = std::vector<std::string>;

// --------------------------- sentiment grammar ---------------------------

const Words kDets = {"the", "this", "that", "every"};
const Words kNouns = {
    "movie",    "film",     "plot",     "story",    "acting",   "cast",
    "script",   "ending",   "music",    "pacing",   "dialogue", "scene",
    "direction", "camera",  "lighting", "humor",    "tone",     "drama",
    "romance",  "action",   "mystery",  "finale",   "performance", "sequel",
    "soundtrack", "narration", "costumes", "editing", "chemistry", "climax"};
const Words kLinks = {"was",     "is",      "felt",   "seemed", "looked",
                      "sounded", "stayed",  "turned", "remained", "appeared"};
const Words kAdvs = {"really", "quite",    "very",   "truly", "rather",
                     "honestly", "mostly", "fairly", "deeply", "plainly"};
const Words kConns = {"and", "but", "while", "though", "yet", "plus"};

const Words kPositive = {
    "great",     "wonderful", "amazing",  "brilliant", "superb",
    "delightful", "charming", "stunning", "excellent", "uplifting",
    "captivating", "flawless", "inspired", "joyful",   "graceful",
    "vivid",     "heartfelt", "dazzling", "fresh",     "crisp",
    "elegant",   "gripping",  "luminous", "masterful", "memorable",
    "moving",    "polished",  "radiant",  "rich",      "sharp",
    "sincere",   "smart",     "tender",   "thrilling", "warm",
    "lovely"};
const Words kNegative = {
    "terrible", "awful",   "boring",   "dreadful", "bland",
    "clumsy",   "tedious", "painful",  "shallow",  "messy",
    "dull",     "grating", "lifeless", "weak",     "broken",
    "hollow",   "flat",    "stale",    "sloppy",   "tired",
    "crude",    "forced",  "muddled",  "noisy",    "numb",
    "pale",     "plodding", "pointless", "rough",  "shaky",
    "sour",     "stiff",   "strained", "thin",     "vapid",
    "wooden"};
const Words kNeutralAdjs = {"fine",     "plain",   "ordinary", "modest",
                            "familiar", "simple",  "standard", "usual",
                            "common",   "average", "routine",  "typical"};

// --------------------------- concept grammar -----------------------------

const Words kConcepts = {
    "dog",    "ball",   "park",   "river",  "tree",   "car",    "song",
    "rain",   "book",   "fire",   "bird",   "cloud",  "road",   "bridge",
    "garden", "train",  "window", "mountain", "lake", "beach",  "snow",
    "wind",   "door",   "table",  "chair",  "phone",  "letter", "coffee",
    "market", "street", "forest", "island", "boat",   "kite",   "lamp",
    "clock",  "mirror", "stone",  "flower", "bread"};
const Words kConceptVerbs = {"plays", "rests",  "waits",  "runs",
                             "sits",  "stands", "drifts", "glows"};
const Words kPreps = {"near", "under", "over", "by", "beside", "across"};

// --------------------------- key-value grammar ---------------------------

const Words kAnimals = {"cat",  "dog",  "fox",  "owl",  "hare",
                        "wolf", "crow", "seal", "deer", "hen"};
const Words kColors = {"red",    "blue", "green",  "amber", "violet",
                       "gray",   "golden", "pale", "silver", "brown"};
const Words kSizes = {"small", "large", "tiny", "huge", "narrow", "wide"};
const Words kPlaces = {"park",   "river",  "barn",  "cave",  "harbor",
                       "meadow", "tower",  "bridge", "field", "dock"};
const Words kKvVerbs = {"rests", "waits", "sleeps", "stands"};

const std::string& pick(const Words& w, Rng& rng) {
  return w[rng.next_below(w.size())];
}

struct RawExample {
  Words prompt;
  Words reference;  // without the trailing EOS marker
  nlohmann::json meta;
};

// Sentiment adjective with the given positive/neutral/negative mix.
const std::string& sentiment_adj(Rng& rng, double p_pos, double p_neu) {
  const double u = rng.next_double();
  if (u < p_pos) return pick(kPositive, rng);
  if (u < p_pos + p_neu) return pick(kNeutralAdjs, rng);
  return pick(kNegative, rng);
}

void append_clause_head(Words& out, Rng& rng) {
  out.push_back(pick(kDets, rng));
  out.push_back(pick(kNouns, rng));
  out.push_back(pick(kLinks, rng));
}

// Prompt: one full clause of mixed sentiment, a connector, and the head of a
// second clause left open right where an adjective is expected.
Words sentiment_prompt(Rng& rng) {
  Words p;
  append_clause_head(p, rng);
  if (rng.next_double() < 0.5) p.push_back(pick(kAdvs, rng));
  p.push_back(sentiment_adj(rng, 0.4, 0.2));
  p.push_back(pick(kConns, rng));
  append_clause_head(p, rng);
  return p;
}

// Continuation with an adjective mix supplied by the caller. The first
// adjective slot closes the clause opened by the prompt.
Words sentiment_continuation(Rng& rng, double p_pos, double p_neu,
                             bool force_first_positive) {
  Words r;
  if (rng.next_double() < 0.5) r.push_back(pick(kAdvs, rng));
  r.push_back(force_first_positive ? pick(kPositive, rng)
                                   : sentiment_adj(rng, p_pos, p_neu));
  r.push_back(pick(kConns, rng));
  append_clause_head(r, rng);
  if (rng.next_double() < 0.5) r.push_back(pick(kAdvs, rng));
  r.push_back(sentiment_adj(rng, p_pos, p_neu));
  if (rng.next_double() < 0.5) {
    r.push_back(pick(kConns, rng));
    append_clause_head(r, rng);
    r.push_back(sentiment_adj(rng, p_pos, p_neu));
  }
  return r;
}

Words concept_prompt(const Words& concepts) {
  Words p = concepts;
  std::sort(p.begin(), p.end());
  return p;
}

Words concept_sentence(const Words& concepts, Rng& rng) {
  Words r = {"the", concepts[0], pick(kConceptVerbs, rng), "with",
             "the", concepts[1], pick(kPreps, rng), "the", concepts[2]};
  if (concepts.size() >= 4) {
    r.push_back("and");
    r.push_back("the");
    r.push_back(concepts[3]);
  }
  if (concepts.size() >= 5) {
    r.push_back(pick(kPreps, rng));
    r.push_back("the");
    r.push_back(concepts[4]);
  }
  return r;
}

struct KvRecord {
  std::string animal, color, size, place;  // size/place may be empty
};

KvRecord kv_record(Rng& rng) {
  KvRecord rec;
  rec.animal = pick(kAnimals, rng);
  rec.color = pick(kColors, rng);
  if (rng.next_double() < 0.6) rec.size = pick(kSizes, rng);
  if (rng.next_double() < 0.6) rec.place = pick(kPlaces, rng);
  return rec;
}

Words kv_prompt(const KvRecord& rec) {
  Words p = {"animal", ":", rec.animal, ";", "color", ":", rec.color};
  if (!rec.size.empty()) {
    p.insert(p.end(), {";", "size", ":", rec.size});
  }
  if (!rec.place.empty()) {
    p.insert(p.end(), {";", "place", ":", rec.place});
  }
  return p;
}

Words kv_verbalization(const KvRecord& rec, Rng& rng) {
  Words r = {"the"};
  if (!rec.size.empty()) r.push_back(rec.size);
  r.push_back(rec.color);
  r.push_back(rec.animal);
  r.push_back(pick(kKvVerbs, rng));
  if (!rec.place.empty()) {
    r.insert(r.end(), {"near", "the", rec.place});
  }
  return r;
}

nlohmann::json kv_meta(const KvRecord& rec) {
  nlohmann::json rec_json;
  rec_json["animal"] = rec.animal;
  rec_json["color"] = rec.color;
  if (!rec.size.empty()) rec_json["size"] = rec.size;
  if (!rec.place.empty()) rec_json["place"] = rec.place;
  return nlohmann::json{{"record", rec_json}};
}

int lexicon_majority(const Words& tokens) {
  int score = 0;
  for (const auto& t : tokens) {
    if (std::find(kPositive.begin(), kPositive.end(), t) != kPositive.end()) {
      ++score;
    } else if (std::find(kNegative.begin(), kNegative.end(), t) !=
               kNegative.end()) {
      --score;
    }
  }
  return score;
}

// Draws examples with pairwise-distinct prompts. The generation order fixes
// the split assignment, so a given (task, seed, sizes) is byte-stable.
std::vector<RawExample> unique_prompt_pool(TaskKind task, Rng& rng, int count,
                                           int max_prompt_len) {
  std::vector<RawExample> pool;
  std::set<Words> seen;
  int attempts = 0;
  const int max_attempts = count * 200 + 10000;
  while (static_cast<int>(pool.size()) < count) {
    if (++attempts > max_attempts) {
      throw std::runtime_error(
          "generate_task_dataset: could not draw enough distinct prompts");
    }
    RawExample ex;
    switch (task) {
      case TaskKind::SentimentContinuation: {
        ex.prompt = sentiment_prompt(rng);
        ex.reference = sentiment_continuation(rng, 0.8, 0.2, true);
        Words full = ex.prompt;
        full.insert(full.end(), ex.reference.begin(), ex.reference.end());
        ex.meta = {{"label", lexicon_majority(full) > 0 ? "positive"
                                                        : "negative"}};
        break;
      }
      case TaskKind::ConceptCoverage: {
        const int k = 3 + static_cast<int>(rng.next_below(3));
        Words concepts;
        std::set<std::string> used;
        while (static_cast<int>(concepts.size()) < k) {
          const auto& c = pick(kConcepts, rng);
          if (used.insert(c).second) concepts.push_back(c);
        }
        // Reference slots follow prompt order, so filling slot t means
        // reading prompt position t.
        std::sort(concepts.begin(), concepts.end());
        ex.prompt = concept_prompt(concepts);
        ex.reference = concept_sentence(concepts, rng);
        ex.meta = {{"concepts", ex.prompt}};
        break;
      }
      case TaskKind::KeyValueVerbalization: {
        const KvRecord rec = kv_record(rng);
        ex.prompt = kv_prompt(rec);
        ex.reference = kv_verbalization(rec, rng);
        ex.meta = kv_meta(rec);
        break;
      }
    }
    if (static_cast<int>(ex.prompt.size()) > max_prompt_len) continue;
    if (!seen.insert(ex.prompt).second) continue;
    pool.push_back(std::move(ex));
  }
  return pool;
}

// Generic continuation for the base-LM slice: same grammar, no sentiment
// skew, so the base model carries fluency but no task preference.
Words generic_reference(TaskKind task, const RawExample& ex, Rng& rng) {
  switch (task) {
    case TaskKind::SentimentContinuation:
      return sentiment_continuation(rng, 0.30, 0.40, false);
    case TaskKind::ConceptCoverage:
    case TaskKind::KeyValueVerbalization:
      return ex.reference;  // structure is the signal for these tasks
  }
  return ex.reference;
}

Example finalize(const Vocabulary& v, const RawExample& raw) {
  Example ex;
  ex.prompt = v.encode(raw.prompt);
  ex.reference = v.encode(raw.reference);
  ex.reference.push_back(v.eos_id());
  ex.meta = raw.meta;
  return ex;
}

}  // namespace

std::string task_kind_name(TaskKind k) {
  switch (k) {
    case TaskKind::SentimentContinuation: return "sentiment_continuation";
    case TaskKind::ConceptCoverage: return "concept_coverage";
    case TaskKind::KeyValueVerbalization: return "key_value_verbalization";
  }
  throw std::logic_error("task_kind_name: bad enum");
}

TaskKind task_kind_from_name(const std::string& name) {
  if (name == "sentiment_continuation") return TaskKind::SentimentContinuation;
  if (name == "concept_coverage") return TaskKind::ConceptCoverage;
  if (name == "key_value_verbalization")
    return TaskKind::KeyValueVerbalization;
  throw std::invalid_argument("unknown task kind: \"" + name + "\"");
}

const std::vector<std::string>& positive_lexicon() { return kPositive; }
const std::vector<std::string>& negative_lexicon() { return kNegative; }

int sentiment_lexicon_score(const Vocabulary& v, std::span<const int> ids) {
  Words tokens;
  tokens.reserve(ids.size());
  for (int id : ids) tokens.push_back(v.token_of(id));
  return lexicon_majority(tokens);
}

Dataset generate_task_dataset(TaskKind task, std::uint64_t seed,
                              SplitSizes sizes, DatasetExtras extras) {
  if (sizes.train < 1 || sizes.val < 1 || sizes.test < 1) {
    throw std::invalid_argument("generate_task_dataset: sizes must be >= 1");
  }
  Rng rng = Rng::stream(seed, "dataset", static_cast<std::uint64_t>(task));

  const int total = sizes.train + sizes.val + sizes.test + extras.base_corpus;
  auto pool = unique_prompt_pool(task, rng, total, extras.max_prompt_len);

  // Base-slice continuations are redrawn with a neutral mix.
  for (int i = sizes.train + sizes.val + sizes.test; i < total; ++i) {
    pool[i].reference = generic_reference(task, pool[i], rng);
  }

  std::vector<LabeledSequence> raw_labeled;
  std::vector<Words> labeled_tokens;
  if (task == TaskKind::SentimentContinuation) {
    for (int i = 0; i < extras.labeled; ++i) {
      const bool positive = (i % 2) == 0;
      Words seq;
      append_clause_head(seq, rng);
      const int clauses = 3 + static_cast<int>(rng.next_below(2));
      for (int c = 0; c < clauses; ++c) {
        if (c > 0) {
          seq.push_back(pick(kConns, rng));
          append_clause_head(seq, rng);
        }
        if (rng.next_double() < 0.5) seq.push_back(pick(kAdvs, rng));
        seq.push_back(positive ? sentiment_adj(rng, 0.85, 0.10)
                               : sentiment_adj(rng, 0.05, 0.10));
      }
      labeled_tokens.push_back(seq);
      raw_labeled.push_back({{}, positive ? 1 : 0});
    }
  }

  std::vector<std::vector<std::string>> corpus;
  for (const auto& ex : pool) {
    corpus.push_back(ex.prompt);
    corpus.push_back(ex.reference);
  }
  for (const auto& seq : labeled_tokens) corpus.push_back(seq);

  Dataset ds;
  ds.task = task;
  ds.seed = seed;
  ds.vocab = Vocabulary::build(corpus);

  int idx = 0;
  for (int i = 0; i < sizes.train; ++i) ds.train.push_back(finalize(ds.vocab, pool[idx++]));
  for (int i = 0; i < sizes.val; ++i) ds.val.push_back(finalize(ds.vocab, pool[idx++]));
  for (int i = 0; i < sizes.test; ++i) ds.test.push_back(finalize(ds.vocab, pool[idx++]));
  for (int i = 0; i < extras.base_corpus; ++i) {
    ds.base_corpus.push_back(finalize(ds.vocab, pool[idx++]));
  }
  for (std::size_t i = 0; i < labeled_tokens.size(); ++i) {
    raw_labeled[i].tokens = ds.vocab.encode(labeled_tokens[i]);
    ds.labeled.push_back(std::move(raw_labeled[i]));
  }
  return ds;
}

void write_examples_jsonl(std::ostream& os, const Vocabulary& v,
                          const std::vector<Example>& examples) {
  for (const auto& ex : examples) {
    nlohmann::json line;
    line["prompt"] = v.decode(ex.prompt);
    line["reference"] = v.decode(ex.reference);
    line["meta"] = ex.meta;
    os << line.dump() << "\n";
  }
}

std::vector<Example> read_examples_jsonl(std::istream& is,
                                         const Vocabulary& v) {
  std::vector<Example> out;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto j = nlohmann::json::parse(line);
    Example ex;
    ex.prompt = v.encode(j.at("prompt").get<std::vector<std::string>>());
    ex.reference = v.encode(j.at("reference").get<std::vector<std::string>>());
    ex.meta = j.value("meta", nlohmann::json::object());
    out.push_back(std::move(ex));
  }
  return out;
}

void write_dataset_dir(const std::string& dir, const Dataset& ds) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  const auto write_split = [&](const std::string& name,
                               const std::vector<Example>& ex) {
    std::ofstream os(fs::path(dir) / (name + ".jsonl"));
    write_examples_jsonl(os, ds.vocab, ex);
  };
  write_split("train", ds.train);
  write_split("val", ds.val);
  write_split("test", ds.test);
  write_split("base", ds.base_corpus);

  {
    std::ofstream os(fs::path(dir) / "labeled.jsonl");
    for (const auto& seq : ds.labeled) {
      nlohmann::json line;
      line["tokens"] = ds.vocab.decode(seq.tokens);
      line["label"] = seq.label == 1 ? "positive" : "negative";
      os << line.dump() << "\n";
    }
  }
  {
    nlohmann::json meta;
    meta["task"] = task_kind_name(ds.task);
    meta["seed"] = ds.seed;
    meta["vocab"] = ds.vocab.tokens();
    std::ofstream os(fs::path(dir) / "vocab.json");
    os << meta.dump(2) << "\n";
  }
}

}  // namespace tokenrl
