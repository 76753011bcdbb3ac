#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "tokenrl/vocab.hpp"

namespace tokenrl {

enum class TaskKind {
  SentimentContinuation,
  ConceptCoverage,
  KeyValueVerbalization,
};

std::string task_kind_name(TaskKind k);
TaskKind task_kind_from_name(const std::string& name);

// One supervised pair: prompt ids, reference ids (reference ends with EOS),
// plus a task-specific payload (sentiment label, concept list, record, ...).
struct Example {
  std::vector<int> prompt;
  std::vector<int> reference;
  nlohmann::json meta;
};

// Labeled full sequence for reward-classifier training. label: 1 = positive.
struct LabeledSequence {
  std::vector<int> tokens;
  int label = 0;
};

struct SplitSizes {
  int train = 0;
  int val = 0;
  int test = 0;
};

struct DatasetExtras {
  int labeled = 600;      // classifier corpus size (sentiment task)
  int base_corpus = 300;  // held-out generic slice for base-LM pretraining
  int max_prompt_len = 12;
};

struct Dataset {
  TaskKind task = TaskKind::SentimentContinuation;
  std::uint64_t seed = 0;
  Vocabulary vocab;
  std::vector<Example> train;
  std::vector<Example> val;
  std::vector<Example> test;
  // Generic continuations over held-out prompts; the base LM trains on these.
  std::vector<Example> base_corpus;
  // Balanced positive/negative sequences (sentiment task only).
  std::vector<LabeledSequence> labeled;
};

// Deterministic pure function of (task_kind, seed, sizes, extras).
Dataset generate_task_dataset(TaskKind task, std::uint64_t seed,
                              SplitSizes sizes,
                              DatasetExtras extras = DatasetExtras{});

// Sentiment lexicon introspection (used by reward sanity checks and tests).
const std::vector<std::string>& positive_lexicon();
const std::vector<std::string>& negative_lexicon();

// Counts positive minus negative lexicon tokens; > 0 means positive majority.
int sentiment_lexicon_score(const Vocabulary& v, std::span<const int> ids);

// Line-delimited JSON, one {"prompt": [...], "reference": [...], "meta": {}}
// object per example, tokens as strings.
void write_examples_jsonl(std::ostream& os, const Vocabulary& v,
                          const std::vector<Example>& examples);
std::vector<Example> read_examples_jsonl(std::istream& is,
                                         const Vocabulary& v);

void write_dataset_dir(const std::string& dir, const Dataset& ds);

}  // namespace tokenrl
