#include "tokenrl/env.hpp"

#include <stdexcept>

namespace tokenrl {

Env::Env(const std::vector<Example>* examples, int horizon, int eos_id,
         int vocab_size, RewardFn reward_fn)
    : examples_(examples),
      horizon_(horizon),
      eos_id_(eos_id),
      vocab_size_(vocab_size),
      reward_fn_(std::move(reward_fn)) {
  if (!examples_ || examples_->empty()) {
    throw std::invalid_argument("Env: empty dataset");
  }
  if (horizon_ < 1) throw std::invalid_argument("Env: horizon must be >= 1");
}

const EnvState& Env::reset(Rng& rng) {
  example_index_ = static_cast<int>(rng.next_below(examples_->size()));
  const Example& ex = (*examples_)[example_index_];
  state_ = EnvState{};
  state_.prompt = ex.prompt;
  state_.horizon = horizon_;
  return state_;
}

StepResult Env::step(int action) {
  if (example_index_ < 0) throw std::logic_error("Env::step before reset");
  if (state_.done) throw std::logic_error("Env::step on a finished episode");
  if (action < 0 || action >= vocab_size_) {
    throw std::invalid_argument("Env::step: action out of range");
  }
  state_.actions.push_back(action);
  ++state_.t;
  state_.done = (action == eos_id_) || (state_.t >= state_.horizon);

  StepResult result;
  result.done = state_.done;
  result.reward =
      state_.done ? reward_fn_(state_, (*examples_)[example_index_]) : 0.0;
  result.state = state_;
  return result;
}

}  // namespace tokenrl
