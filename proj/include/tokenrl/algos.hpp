#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "tokenrl/env.hpp"
#include "tokenrl/model.hpp"

namespace tokenrl {

// One completed episode with everything the update needs, recorded at
// sampling time. act_log_probs are under the distribution actually sampled
// from (masked for NLPO); policy_log_probs are under the unmasked policy and
// feed the divergence penalty.
struct EpisodeRollout {
  int example_index = -1;
  std::vector<int> prompt;
  std::vector<int> actions;
  std::vector<double> act_log_probs;
  std::vector<double> policy_log_probs;
  std::vector<double> ref_log_probs;
  std::vector<double> values;
  std::vector<double> kl_exact;  // full-vocabulary KL(policy || ref) per step
  std::vector<std::vector<std::uint8_t>> masks;  // per-step keep sets; may be empty
  std::vector<double> shaped_rewards;
  double task_reward = 0.0;
  double entropy_sum = 0.0;
  std::uint64_t policy_version = 0;

  int steps() const { return static_cast<int>(actions.size()); }
};

struct AdvantageEstimate {
  std::vector<double> advantages;
  std::vector<double> returns;  // advantage + value
};

// delta_t = r_t + gamma * V_{t+1} - V_t with V_{T} = 0 past the end;
// A_t = delta_t + gamma * lambda * A_{t+1}.
AdvantageEstimate compute_gae(std::span<const double> rewards,
                              std::span<const double> values, double gamma,
                              double lam);

// Fills shaped_rewards on every episode from its recorded log-prob gap and
// terminal task reward.
void shape_rewards(std::vector<EpisodeRollout>& rollouts, double beta);

struct AlgoHp {
  double gamma = 0.95;
  double lam = 0.95;
  double eps_clip = 0.2;
  double vf_coef = 0.5;
  double ent_coef = 0.0;
  double max_grad_norm = 0.5;
  double lr = 3e-4;
  int epochs = 5;
  int minibatch_steps = 64;
  int episodes_per_update = 64;
  int updates = 200;
};

struct LossTerms {
  double total = 0.0;
  double policy = 0.0;
  double value = 0.0;
  double entropy = 0.0;
};

// Clipped-ratio surrogate plus value MSE minus entropy bonus, averaged over
// steps. Advantages are assumed already normalized. `entropies` may be empty
// when no entropy bonus is used.
LossTerms ppo_loss(std::span<const double> old_log_probs,
                   std::span<const double> new_log_probs,
                   std::span<const double> advantages,
                   std::span<const double> returns,
                   std::span<const double> new_values, double eps_clip,
                   double vf_coef, double ent_coef,
                   std::span<const double> entropies = {});

// (mean - 0)/(std + 1e-8) over the span, in place.
void normalize_advantages(std::span<double> advantages);

// Loss and parameter gradient of one minibatch holding every given episode
// (advantages normalized across all steps). This is the same code path the
// updates run; exposed so gradients can be verified externally.
LossTerms actor_critic_minibatch_loss(const PolicyModel& m,
                                      const std::vector<EpisodeRollout>& rollouts,
                                      const AlgoHp& hp, bool clipped_ratio,
                                      std::span<double> grad);

struct UpdateStats {
  double mean_kl = 0.0;  // exact per-token KL to the reference model
  double clip_fraction = 0.0;
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double total_loss = 0.0;
  double grad_norm = 0.0;
  double mean_task_reward = 0.0;
  double mean_shaped_reward = 0.0;
  double mean_episode_len = 0.0;
};

// Multi-epoch clipped-ratio update over episode-grouped minibatches. Rollouts
// must carry the current policy version and shaped rewards.
UpdateStats ppo_update(PolicyModel& m, const std::vector<EpisodeRollout>& rollouts,
                       const AlgoHp& hp, AdamState& opt, Rng& shuffle_rng,
                       Rng* dropout_rng = nullptr);

// Single-pass advantage actor-critic: no ratio clipping, policy term is
// -mean(log_prob * advantage).
UpdateStats a2c_update(PolicyModel& m, const std::vector<EpisodeRollout>& rollouts,
                       const AlgoHp& hp, AdamState& opt, Rng& shuffle_rng,
                       Rng* dropout_rng = nullptr);

// Frozen policy snapshot that prunes the action set: at each step only the
// nucleus of the snapshot's distribution is sampleable. Synced from the live
// policy every `mu` updates.
struct MaskState {
  PolicyModel snapshot;
  double top_p = 0.9;
  int mu = 5;
  int counter = 0;
};

MaskState make_mask_state(const PolicyModel& m, double top_p, int mu);

// Call once per policy update.
void nlpo_sync(MaskState& mask, const PolicyModel& m);

struct NlpoSample {
  int action = -1;
  double log_prob = 0.0;           // under the masked distribution
  double unmasked_log_prob = 0.0;  // under the raw policy
  std::vector<std::uint8_t> kept;
};

NlpoSample nlpo_step_policy(const PolicyModel& m, const MaskState& mask,
                            std::span<const int> window,
                            const DecodeConfig& dc, int generated_len,
                            int eos_id, Rng& rng);

struct SupervisedHp {
  double lr = 3e-4;
  double max_grad_norm = 0.5;
};

// Mean token cross-entropy over the batch and its parameter gradient;
// prompt positions are excluded from the loss.
double supervised_loss_and_grad(const PolicyModel& m,
                                std::span<const Example* const> batch,
                                std::span<double> grad,
                                Rng* dropout_rng = nullptr);

// One gradient step of teacher-forced next-token cross-entropy over the
// batch; prompt positions are excluded from the loss. Returns mean token CE.
double supervised_update(PolicyModel& m,
                         std::span<const Example* const> batch,
                         const SupervisedHp& hp, AdamState& opt,
                         Rng* dropout_rng = nullptr);

double supervised_loss(const PolicyModel& m,
                       std::span<const Example* const> batch);

// ---- rollout collection ----

struct RolloutContext {
  const PolicyModel* policy = nullptr;
  const PolicyModel* ref = nullptr;
  const MaskState* mask = nullptr;  // null disables action masking
  DecodeConfig decode;
  int eos_id = 2;
};

EpisodeRollout collect_episode(Env& env, const RolloutContext& ctx, Rng& rng);

struct RolloutBatchConfig {
  int episodes = 64;
  std::uint64_t run_seed = 0;
  std::uint64_t update_index = 0;
  int workers = 1;
};

// Episode i draws from its own stream (run_seed, "rollout", update, i), so
// results are identical for any worker count.
std::vector<EpisodeRollout> collect_rollouts(const std::vector<Example>& examples,
                                             int horizon, int vocab_size,
                                             const RewardFn& reward_fn,
                                             const RolloutContext& ctx,
                                             const RolloutBatchConfig& batch);

}  // namespace tokenrl
