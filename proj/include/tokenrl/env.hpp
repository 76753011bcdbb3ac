#pragma once

#include <functional>
#include <span>
#include <vector>

#include "tokenrl/dataset.hpp"
#include "tokenrl/rng.hpp"

namespace tokenrl {

// State of one generation episode: the sampled prompt plus the actions taken
// so far. The observation is always prompt ++ actions.
struct EnvState {
  std::vector<int> prompt;
  std::vector<int> actions;
  int t = 0;
  bool done = false;
  int horizon = 0;

  std::vector<int> observation() const {
    std::vector<int> obs = prompt;
    obs.insert(obs.end(), actions.begin(), actions.end());
    return obs;
  }
};

struct StepResult {
  EnvState state;
  double reward = 0.0;  // nonzero only at episode end
  bool done = false;
};

// Terminal scorer: (final state, reference example) -> task reward.
using RewardFn =
    std::function<double(const EnvState&, const Example&)>;

// Token-appending MDP over a dataset split. Episodes start from a uniformly
// sampled example's prompt and end on EOS or after `horizon` actions. The
// sampled example (with its reference) stays private to the env; observations
// never include it.
class Env {
 public:
  Env(const std::vector<Example>* examples, int horizon, int eos_id,
      int vocab_size, RewardFn reward_fn);

  const EnvState& reset(Rng& rng);
  StepResult step(int action);

  const EnvState& state() const { return state_; }
  // Index of the example backing the current episode.
  int example_index() const { return example_index_; }

 private:
  const std::vector<Example>* examples_;
  int horizon_;
  int eos_id_;
  int vocab_size_;
  RewardFn reward_fn_;
  EnvState state_;
  int example_index_ = -1;
};

}  // namespace tokenrl
