#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "tokenrl/dataset.hpp"
#include "tokenrl/env.hpp"

namespace tokenrl {

// Adaptive coefficient for the per-token divergence penalty. An infinite
// target disables the penalty entirely (beta pinned to 0).
struct KLControllerState {
  double beta = 0.01;
  double target_kl = 0.05;  // +inf allowed
  double gain = 0.1;
  double clip = 0.2;
  // Anti-windup bound. Once a policy saturates its reward, measured KL stops
  // responding to beta and an uncapped controller diverges, dragging the
  // value targets (which scale with beta) along with it.
  double max_beta = 10.0;

  bool penalty_disabled() const { return std::isinf(target_kl); }
};

KLControllerState make_kl_controller(double target_kl, double initial_beta,
                                     double gain, double clip,
                                     double max_beta = 10.0);

// Proportional update: beta *= 1 + gain * clip((measured - target)/target),
// bounded above by max_beta. Small negative measurements from sampling noise
// are clamped to 0.
KLControllerState kl_controller_update(KLControllerState state,
                                       double measured_kl);

// Per-step shaped rewards: task reward at the terminal step minus
// beta * (log pi(a_t) - log ref(a_t)) at every step.
std::vector<double> kl_regularized_rewards(
    std::span<const double> policy_log_probs,
    std::span<const double> ref_log_probs, double terminal_task_reward,
    double beta);

// Logistic regression on unigram + bigram counts; the learned stand-in for a
// sentiment reward model. Scores are sigmoid outputs in (0, 1).
class ClassifierReward {
 public:
  double score(std::span<const int> tokens) const;

  double train_fraction() const { return train_fraction_; }
  double accuracy() const { return accuracy_; }

  nlohmann::json to_json(const Vocabulary& v) const;

  friend ClassifierReward train_reward_classifier(
      const std::vector<LabeledSequence>& labeled, double train_fraction,
      std::uint64_t seed);

 private:
  std::map<int, double> unigram_w_;
  std::map<std::pair<int, int>, double> bigram_w_;
  double bias_ = 0.0;
  double train_fraction_ = 1.0;
  double accuracy_ = 0.0;
};

// Trains on a seeded subsample of `train_fraction` of the labeled data
// (after holding out a fixed validation share) and records held-out accuracy.
ClassifierReward train_reward_classifier(
    const std::vector<LabeledSequence>& labeled, double train_fraction,
    std::uint64_t seed);

struct TaskRewardConfig {
  // Weight on ROUGE-L F1 blended into the coverage reward (0 = pure coverage).
  double coverage_rouge_weight = 0.0;
};

// Terminal task reward in [0, 1] for a finished episode. `scorer` is required
// for the sentiment task and ignored otherwise.
double task_reward(TaskKind task, const EnvState& final_state,
                   const Example& example, const ClassifierReward* scorer,
                   int eos_id, const TaskRewardConfig& cfg = {});

// Concept ids for a coverage example (resolved from its meta payload).
std::vector<int> concept_ids(const Vocabulary& v, const Example& example);

}  // namespace tokenrl
