#pragma once

#include <optional>
#include <string>

#include "tokenrl/algos.hpp"
#include "tokenrl/config.hpp"
#include "tokenrl/reward.hpp"

namespace tokenrl {

// Everything mutable about a training run. The RNG streams are derived from
// (cfg.seed, update_index), so storing those two pins all randomness.
struct TrainState {
  TrainConfig cfg;
  ModelConfig model_cfg;  // resolved (includes vocab_size)
  PolicyModel policy;
  PolicyModel ref;
  std::optional<MaskState> mask;
  AdamState opt;
  KLControllerState kl;
  int update_index = 0;
};

void save_checkpoint(const std::string& path, const TrainState& state);
TrainState load_checkpoint(const std::string& path);

}  // namespace tokenrl
