#include <doctest.h>

#include <set>
#include <sstream>

#include "tokenrl/dataset.hpp"
#include "tokenrl/vocab.hpp"

using namespace tokenrl;

TEST_CASE("vocabulary orders tokens by frequency then lexicographically") {
  const Vocabulary v = Vocabulary::build({{"a", "b"}, {"b"}});
  CHECK(v.size() == 5);
  CHECK(v.token_of(0) == Vocabulary::kPad);
  CHECK(v.token_of(1) == Vocabulary::kBos);
  CHECK(v.token_of(2) == Vocabulary::kEos);
  CHECK(v.token_of(3) == "b");  // freq 2 beats freq 1
  CHECK(v.token_of(4) == "a");
}

TEST_CASE("vocabulary build is deterministic") {
  const std::vector<std::vector<std::string>> corpus = {
      {"x", "y", "z"}, {"y", "z"}, {"z"}};
  CHECK(Vocabulary::build(corpus) == Vocabulary::build(corpus));
}

TEST_CASE("empty corpus is rejected") {
  CHECK_THROWS_AS(Vocabulary::build({}), std::invalid_argument);
}

TEST_CASE("encode/decode are inverse on valid input") {
  const Vocabulary v = Vocabulary::build({{"x"}});
  const std::vector<std::string> text = {"x"};
  CHECK(v.decode(v.encode(text)) == text);

  const std::vector<int> ids = {2, 3, 3};
  CHECK(v.encode(v.decode(ids)) == ids);

  CHECK(v.encode(std::vector<std::string>{}).empty());
  CHECK(v.decode(std::vector<int>{}).empty());
}

TEST_CASE("unknown tokens are rejected by name") {
  const Vocabulary v = Vocabulary::build({{"x"}});
  try {
    v.encode(std::vector<std::string>{"nope"});
    FAIL("expected UnknownTokenError");
  } catch (const UnknownTokenError& e) {
    CHECK(e.token == "nope");
  }
}

TEST_CASE("vocabulary ids are dense and bijective for generated datasets") {
  for (const TaskKind task :
       {TaskKind::SentimentContinuation, TaskKind::ConceptCoverage,
        TaskKind::KeyValueVerbalization}) {
    const Dataset ds = generate_task_dataset(task, 11, {30, 10, 10},
                                             {120, 30, 12});
    const auto& v = ds.vocab;
    std::set<std::string> seen;
    for (int id = 0; id < v.size(); ++id) {
      const auto& tok = v.token_of(id);
      CHECK(v.id_of(tok) == id);
      CHECK(seen.insert(tok).second);
    }
    CHECK(v.pad_id() != v.bos_id());
    CHECK(v.bos_id() != v.eos_id());
  }
}

TEST_CASE("dataset generation is a pure function of task, seed, sizes") {
  const auto a = generate_task_dataset(TaskKind::ConceptCoverage, 7,
                                       {40, 10, 10}, {0, 20, 12});
  const auto b = generate_task_dataset(TaskKind::ConceptCoverage, 7,
                                       {40, 10, 10}, {0, 20, 12});
  REQUIRE(a.train.size() == b.train.size());
  for (std::size_t i = 0; i < a.train.size(); ++i) {
    CHECK(a.train[i].prompt == b.train[i].prompt);
    CHECK(a.train[i].reference == b.train[i].reference);
    CHECK(a.train[i].meta == b.train[i].meta);
  }
  CHECK(a.vocab == b.vocab);

  const auto c = generate_task_dataset(TaskKind::ConceptCoverage, 8,
                                       {40, 10, 10}, {0, 20, 12});
  bool differs = false;
  for (std::size_t i = 0; i < a.train.size(); ++i) {
    if (a.train[i].prompt != c.train[i].prompt) differs = true;
  }
  CHECK(differs);
}

TEST_CASE("splits have pairwise-disjoint prompts and well-formed examples") {
  for (const TaskKind task :
       {TaskKind::SentimentContinuation, TaskKind::ConceptCoverage,
        TaskKind::KeyValueVerbalization}) {
    const Dataset ds =
        generate_task_dataset(task, 3, {50, 15, 15}, {100, 40, 12});
    std::set<std::vector<int>> prompts;
    const auto check_split = [&](const std::vector<Example>& split) {
      for (const auto& ex : split) {
        CHECK(prompts.insert(ex.prompt).second);  // disjoint across splits
        CHECK(ex.prompt.size() <= 12);
        REQUIRE(!ex.reference.empty());
        CHECK(ex.reference.back() == ds.vocab.eos_id());
      }
    };
    check_split(ds.train);
    check_split(ds.val);
    check_split(ds.test);
    CHECK(ds.train.size() == 50);
    CHECK(ds.val.size() == 15);
    CHECK(ds.test.size() == 15);
  }
}

TEST_CASE("concept references contain every prompted concept") {
  const Dataset ds = generate_task_dataset(TaskKind::ConceptCoverage, 7,
                                           {100, 20, 20}, {0, 30, 12});
  for (const auto& ex : ds.train) {
    const std::set<int> ref_tokens(ex.reference.begin(), ex.reference.end());
    for (int concept_id : ex.prompt) {
      CHECK(ref_tokens.count(concept_id) == 1);
    }
  }
}

TEST_CASE("sentiment references are positive by lexicon majority") {
  for (const std::uint64_t seed : {1ULL, 5ULL, 99ULL}) {
    const Dataset ds = generate_task_dataset(TaskKind::SentimentContinuation,
                                             seed, {140, 20, 20}, {60, 40, 12});
    int positive = 0;
    for (const auto& ex : ds.train) {
      if (sentiment_lexicon_score(ds.vocab, ex.reference) > 0) ++positive;
    }
    CHECK(static_cast<double>(positive) / ds.train.size() >= 0.95);
  }
}

TEST_CASE("sentiment labeled corpus is balanced and label-consistent") {
  const Dataset ds = generate_task_dataset(TaskKind::SentimentContinuation, 2,
                                           {30, 10, 10}, {300, 30, 12});
  REQUIRE(ds.labeled.size() == 300);
  int positive = 0, majority_matches = 0;
  for (const auto& seq : ds.labeled) {
    positive += seq.label;
    const int score = sentiment_lexicon_score(ds.vocab, seq.tokens);
    if ((score > 0) == (seq.label == 1)) ++majority_matches;
  }
  CHECK(positive == 150);
  CHECK(majority_matches >= 285);  // small adjective noise is expected
}

TEST_CASE("examples round-trip through line-delimited JSON") {
  const Dataset ds = generate_task_dataset(TaskKind::KeyValueVerbalization, 4,
                                           {20, 5, 5}, {0, 10, 12});
  std::stringstream ss;
  write_examples_jsonl(ss, ds.vocab, ds.train);
  const auto back = read_examples_jsonl(ss, ds.vocab);
  REQUIRE(back.size() == ds.train.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    CHECK(back[i].prompt == ds.train[i].prompt);
    CHECK(back[i].reference == ds.train[i].reference);
    CHECK(back[i].meta == ds.train[i].meta);
  }
}

TEST_CASE("unknown task name is rejected") {
  CHECK_THROWS_AS(task_kind_from_name("unknown"), std::invalid_argument);
  CHECK_THROWS_AS(
      generate_task_dataset(TaskKind::SentimentContinuation, 1, {0, 1, 1}),
      std::invalid_argument);
}
