#pragma once

#include <cstdint>
#include <string>

#include <json.hpp>

#include "tokenrl/algos.hpp"
#include "tokenrl/dataset.hpp"
#include "tokenrl/model.hpp"

namespace tokenrl {

enum class Algorithm {
  ZeroShot,
  Supervised,
  Ppo,
  Nlpo,
  A2c,
  SupervisedPpo,
  SupervisedNlpo,
};

std::string algorithm_name(Algorithm a);
Algorithm algorithm_from_name(const std::string& name);

bool algorithm_is_rl(Algorithm a);
bool algorithm_uses_warm_start(Algorithm a);
bool algorithm_uses_mask(Algorithm a);

struct DataConfig {
  std::uint64_t seed = 1234;
  int train = 400;
  int val = 48;
  int test = 48;
  int labeled = 600;
  int base_corpus = 300;
  int max_prompt_len = 12;
};

struct KlConfig {
  double target = 0.05;  // +inf disables the penalty
  double initial_beta = 0.01;
  double gain = 0.1;
  double clip = 0.2;
  double max_beta = 10.0;
};

struct NlpoConfig {
  double top_p = 0.9;
  int mu = 5;
};

struct PretrainConfig {
  int base_epochs = 12;
  int warm_epochs = 10;
  int batch = 16;
  double lr = 3e-4;
};

struct RewardConfig {
  double classifier_fraction = 1.0;
  double coverage_rouge_weight = 0.0;
};

struct EvalConfig {
  int interval = 10;
};

struct RunConfig {
  int checkpoint_interval = 50;
  int rollout_workers = 1;
  bool allow_dropout_in_rl = false;
};

struct TrainConfig {
  TaskKind task = TaskKind::SentimentContinuation;
  Algorithm algorithm = Algorithm::Ppo;
  std::uint64_t seed = 0;
  DataConfig data;
  ModelConfig model;  // vocab_size/seed resolved from the dataset at runtime
  AlgoHp algo;
  KlConfig kl;
  NlpoConfig nlpo;
  DecodeConfig decode;
  PretrainConfig pretrain;
  RewardConfig reward;
  EvalConfig eval;
  RunConfig run;

  void validate() const;
  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
};

// Parses "a.b.c=value" and sets the key in the config tree. Values parse as
// JSON where possible ("0.5", "true", "inf") and fall back to strings.
void apply_override(nlohmann::json& config, const std::string& dotted_kv);

TrainConfig load_config_file(const std::string& path,
                             const std::vector<std::string>& overrides,
                             nlohmann::json* resolved = nullptr);

}  // namespace tokenrl
