#include "tokenrl/algos.hpp"

#include "tokenrl/reward.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <thread>

namespace tokenrl {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

std::span<const std::uint8_t> step_mask(const EpisodeRollout& ep, int t) {
  if (ep.masks.empty()) return {};
  return ep.masks[static_cast<std::size_t>(t)];
}

struct FlatStep {
  int episode = 0;
  int t = 0;
  double advantage = 0.0;
  double ret = 0.0;
};

enum class PolicyObjective { ClippedRatio, LogProbTimesAdvantage };

struct EpochPlan {
  // Episode order for this epoch, chunked into minibatches of roughly
  // minibatch_steps steps (episodes stay whole).
  std::vector<std::vector<int>> minibatches;
};

EpochPlan plan_epoch(const std::vector<EpisodeRollout>& rollouts,
                     int minibatch_steps, Rng& rng) {
  std::vector<int> order(rollouts.size());
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t i = order.size() - 1; i > 0; --i) {
    std::swap(order[i], order[rng.next_below(i + 1)]);
  }
  EpochPlan plan;
  std::vector<int> current;
  int steps = 0;
  for (int ep : order) {
    current.push_back(ep);
    steps += rollouts[ep].steps();
    if (steps >= minibatch_steps) {
      plan.minibatches.push_back(std::move(current));
      current.clear();
      steps = 0;
    }
  }
  if (!current.empty()) plan.minibatches.push_back(std::move(current));
  return plan;
}

struct MinibatchOutcome {
  double total = 0.0, policy = 0.0, value = 0.0, entropy = 0.0;
  long clip_hits = 0, clip_total = 0;
};

// One gradient evaluation over an episode-grouped minibatch. Advantages are
// normalized across the minibatch's steps; each step's policy/value/entropy
// terms land on its own logits row.
MinibatchOutcome minibatch_loss_and_grad(
    const PolicyModel& m, const std::vector<EpisodeRollout>& rollouts,
    const std::vector<int>& mb, const std::vector<AdvantageEstimate>& gae,
    const AlgoHp& hp, PolicyObjective objective, std::span<double> grad,
    Rng* dropout_rng) {
  std::vector<FlatStep> steps;
  for (int e : mb) {
    for (int t = 0; t < rollouts[e].steps(); ++t) {
      steps.push_back({e, t, gae[e].advantages[t], gae[e].returns[t]});
    }
  }
  std::vector<double> adv(steps.size());
  for (std::size_t i = 0; i < steps.size(); ++i) adv[i] = steps[i].advantage;
  normalize_advantages(adv);
  const double inv_n = 1.0 / static_cast<double>(steps.size());

  std::vector<GradWindow> windows(mb.size());
  std::vector<std::vector<std::size_t>> step_of_window(mb.size());
  for (std::size_t wi = 0; wi < mb.size(); ++wi) {
    const auto& ep = rollouts[mb[wi]];
    auto& w = windows[wi];
    w.tokens = ep.prompt;
    w.tokens.insert(w.tokens.end(), ep.actions.begin(), ep.actions.end());
    const int prompt_len = static_cast<int>(ep.prompt.size());
    w.row_begin = prompt_len - 1;
    w.row_end = prompt_len - 1 + ep.steps();
  }
  for (std::size_t i = 0; i < steps.size(); ++i) {
    for (std::size_t wi = 0; wi < mb.size(); ++wi) {
      if (mb[wi] == steps[i].episode) {
        step_of_window[wi].push_back(i);
        break;
      }
    }
  }

  MinibatchOutcome out;
  const WindowLossFn fn = [&](std::size_t wi, const SeqOutputs& model_out,
                              OutputGrads& og) -> double {
    const auto& ep = rollouts[mb[wi]];
    const int prompt_len = static_cast<int>(ep.prompt.size());
    const int vocab = model_out.vocab;
    double loss = 0.0;
    for (std::size_t si : step_of_window[wi]) {
      const FlatStep& st = steps[si];
      const int t = st.t;
      const int row = prompt_len - 1 + t;
      const int action = ep.actions[t];
      const double a_norm = adv[si];

      const auto logits = model_out.logits_row(row);
      const auto lsm = masked_log_softmax(logits, step_mask(ep, t));
      const double lp_new = lsm[action];
      const double lp_old = ep.act_log_probs[t];

      double policy_coeff = 0.0;  // d(policy term)/d(lp_new)
      double policy_term = 0.0;
      if (objective == PolicyObjective::ClippedRatio) {
        const double ratio = std::exp(lp_new - lp_old);
        if (!std::isfinite(ratio)) {
          throw std::runtime_error("update: non-finite probability ratio");
        }
        const double clipped =
            std::clamp(ratio, 1.0 - hp.eps_clip, 1.0 + hp.eps_clip);
        const double unclipped_obj = ratio * a_norm;
        const double clipped_obj = clipped * a_norm;
        policy_term = -std::min(unclipped_obj, clipped_obj);
        if (unclipped_obj <= clipped_obj) {
          policy_coeff = -a_norm * ratio;
        }
        ++out.clip_total;
        if (std::abs(ratio - 1.0) > hp.eps_clip) ++out.clip_hits;
      } else {
        policy_term = -lp_new * a_norm;
        policy_coeff = -a_norm;
      }

      const double v_new = model_out.value_at(row);
      const double v_err = v_new - st.ret;
      const double value_term = v_err * v_err;
      const double ent = entropy_from_log_softmax(lsm);

      out.policy += policy_term * inv_n;
      out.value += value_term * inv_n;
      out.entropy += ent * inv_n;
      loss += (policy_term + hp.vf_coef * value_term - hp.ent_coef * ent) *
              inv_n;

      // d(loss)/d(logit_j) through the (masked) log-softmax.
      double* dl =
          og.dlogits.data() + static_cast<std::size_t>(row) * vocab;
      const double w_policy = policy_coeff * inv_n;
      for (int j = 0; j < vocab; ++j) {
        if (lsm[j] == kNegInf) continue;
        const double p_j = std::exp(lsm[j]);
        double g = w_policy * ((j == action ? 1.0 : 0.0) - p_j);
        if (hp.ent_coef != 0.0) {
          // dH/dz_j = -p_j (log p_j + H)
          g += (-hp.ent_coef * inv_n) * (-p_j * (lsm[j] + ent));
        }
        dl[j] += g;
      }
      og.dvalues[row] += hp.vf_coef * inv_n * 2.0 * v_err;
    }
    return loss;
  };

  out.total = loss_and_gradient(m, windows, fn, grad, dropout_rng);
  return out;
}

std::vector<AdvantageEstimate> gae_for_rollouts(
    const std::vector<EpisodeRollout>& rollouts, const AlgoHp& hp) {
  std::vector<AdvantageEstimate> gae(rollouts.size());
  for (std::size_t e = 0; e < rollouts.size(); ++e) {
    gae[e] = compute_gae(rollouts[e].shaped_rewards, rollouts[e].values,
                         hp.gamma, hp.lam);
  }
  return gae;
}

UpdateStats actor_critic_update(PolicyModel& m,
                                const std::vector<EpisodeRollout>& rollouts,
                                const AlgoHp& hp, AdamState& opt,
                                Rng& shuffle_rng, PolicyObjective objective,
                                int epochs, Rng* dropout_rng) {
  if (rollouts.empty()) {
    throw std::invalid_argument("update: empty rollout batch");
  }
  for (const auto& ep : rollouts) {
    if (ep.policy_version != m.version()) {
      throw std::logic_error(
          "update: rollout policy version is stale; collect fresh rollouts");
    }
    if (ep.steps() == 0 ||
        ep.shaped_rewards.size() != static_cast<std::size_t>(ep.steps())) {
      throw std::invalid_argument("update: rollout missing shaped rewards");
    }
  }

  const auto gae = gae_for_rollouts(rollouts, hp);

  UpdateStats stats;
  long total_steps = 0;
  for (const auto& ep : rollouts) {
    stats.mean_task_reward += ep.task_reward;
    stats.mean_episode_len += ep.steps();
    for (double r : ep.shaped_rewards) stats.mean_shaped_reward += r;
    for (double k : ep.kl_exact) stats.mean_kl += k;
    total_steps += ep.steps();
  }
  stats.mean_task_reward /= static_cast<double>(rollouts.size());
  stats.mean_episode_len /= static_cast<double>(rollouts.size());
  stats.mean_shaped_reward /= static_cast<double>(rollouts.size());
  stats.mean_kl /= static_cast<double>(total_steps);

  const AdamConfig adam_cfg{hp.lr, 0.9, 0.999, 1e-8};
  std::vector<double> grad(m.param_count());
  long minibatch_count = 0;
  long clip_hits = 0, clip_total = 0;

  for (int epoch = 0; epoch < epochs; ++epoch) {
    const EpochPlan plan =
        plan_epoch(rollouts, hp.minibatch_steps, shuffle_rng);
    for (const auto& mb : plan.minibatches) {
      std::fill(grad.begin(), grad.end(), 0.0);
      const MinibatchOutcome mo = minibatch_loss_and_grad(
          m, rollouts, mb, gae, hp, objective, grad, dropout_rng);
      stats.grad_norm += clip_grad_norm(grad, hp.max_grad_norm);
      adam_step(m.params_mut(), grad, opt, adam_cfg);

      stats.policy_loss += mo.policy;
      stats.value_loss += mo.value;
      stats.entropy += mo.entropy;
      stats.total_loss += mo.total;
      clip_hits += mo.clip_hits;
      clip_total += mo.clip_total;
      ++minibatch_count;
    }
  }

  if (minibatch_count > 0) {
    stats.policy_loss /= minibatch_count;
    stats.value_loss /= minibatch_count;
    stats.entropy /= minibatch_count;
    stats.total_loss /= minibatch_count;
    stats.grad_norm /= minibatch_count;
  }
  stats.clip_fraction =
      clip_total > 0 ? static_cast<double>(clip_hits) / clip_total : 0.0;
  m.bump_version();
  return stats;
}

}  // namespace

AdvantageEstimate compute_gae(std::span<const double> rewards,
                              std::span<const double> values, double gamma,
                              double lam) {
  if (rewards.size() != values.size()) {
    throw std::invalid_argument("compute_gae: length mismatch");
  }
  const int n = static_cast<int>(rewards.size());
  AdvantageEstimate est;
  est.advantages.assign(n, 0.0);
  est.returns.assign(n, 0.0);
  double next_adv = 0.0;
  for (int t = n - 1; t >= 0; --t) {
    const double next_value = t + 1 < n ? values[t + 1] : 0.0;
    const double delta = rewards[t] + gamma * next_value - values[t];
    next_adv = delta + gamma * lam * next_adv;
    est.advantages[t] = next_adv;
    est.returns[t] = next_adv + values[t];
  }
  return est;
}

void shape_rewards(std::vector<EpisodeRollout>& rollouts, double beta) {
  for (auto& ep : rollouts) {
    ep.shaped_rewards = kl_regularized_rewards(
        ep.policy_log_probs, ep.ref_log_probs, ep.task_reward, beta);
  }
}

void normalize_advantages(std::span<double> advantages) {
  if (advantages.empty()) return;
  double mean = 0.0;
  for (double a : advantages) mean += a;
  mean /= static_cast<double>(advantages.size());
  double var = 0.0;
  for (double a : advantages) var += (a - mean) * (a - mean);
  var /= static_cast<double>(advantages.size());
  const double denom = std::sqrt(var) + 1e-8;
  for (double& a : advantages) a = (a - mean) / denom;
}

LossTerms ppo_loss(std::span<const double> old_log_probs,
                   std::span<const double> new_log_probs,
                   std::span<const double> advantages,
                   std::span<const double> returns,
                   std::span<const double> new_values, double eps_clip,
                   double vf_coef, double ent_coef,
                   std::span<const double> entropies) {
  const std::size_t n = old_log_probs.size();
  if (new_log_probs.size() != n || advantages.size() != n ||
      returns.size() != n || new_values.size() != n ||
      (!entropies.empty() && entropies.size() != n)) {
    throw std::invalid_argument("ppo_loss: length mismatch");
  }
  if (n == 0) throw std::invalid_argument("ppo_loss: empty batch");

  LossTerms terms;
  for (std::size_t i = 0; i < n; ++i) {
    const double ratio = std::exp(new_log_probs[i] - old_log_probs[i]);
    if (!std::isfinite(ratio)) {
      throw std::runtime_error("ppo_loss: non-finite probability ratio");
    }
    const double clipped = std::clamp(ratio, 1.0 - eps_clip, 1.0 + eps_clip);
    terms.policy -= std::min(ratio * advantages[i], clipped * advantages[i]);
    const double v_err = new_values[i] - returns[i];
    terms.value += v_err * v_err;
    if (!entropies.empty()) terms.entropy += entropies[i];
  }
  terms.policy /= static_cast<double>(n);
  terms.value /= static_cast<double>(n);
  terms.entropy /= static_cast<double>(n);
  terms.total = terms.policy + vf_coef * terms.value - ent_coef * terms.entropy;
  return terms;
}

LossTerms actor_critic_minibatch_loss(
    const PolicyModel& m, const std::vector<EpisodeRollout>& rollouts,
    const AlgoHp& hp, bool clipped_ratio, std::span<double> grad) {
  if (rollouts.empty()) {
    throw std::invalid_argument("minibatch loss: empty rollout batch");
  }
  const auto gae = gae_for_rollouts(rollouts, hp);
  std::vector<int> all(rollouts.size());
  std::iota(all.begin(), all.end(), 0);
  const MinibatchOutcome mo = minibatch_loss_and_grad(
      m, rollouts, all, gae, hp,
      clipped_ratio ? PolicyObjective::ClippedRatio
                    : PolicyObjective::LogProbTimesAdvantage,
      grad, nullptr);
  LossTerms terms;
  terms.total = mo.total;
  terms.policy = mo.policy;
  terms.value = mo.value;
  terms.entropy = mo.entropy;
  return terms;
}

UpdateStats ppo_update(PolicyModel& m,
                       const std::vector<EpisodeRollout>& rollouts,
                       const AlgoHp& hp, AdamState& opt, Rng& shuffle_rng,
                       Rng* dropout_rng) {
  return actor_critic_update(m, rollouts, hp, opt, shuffle_rng,
                             PolicyObjective::ClippedRatio, hp.epochs,
                             dropout_rng);
}

UpdateStats a2c_update(PolicyModel& m,
                       const std::vector<EpisodeRollout>& rollouts,
                       const AlgoHp& hp, AdamState& opt, Rng& shuffle_rng,
                       Rng* dropout_rng) {
  return actor_critic_update(m, rollouts, hp, opt, shuffle_rng,
                             PolicyObjective::LogProbTimesAdvantage, 1,
                             dropout_rng);
}

MaskState make_mask_state(const PolicyModel& m, double top_p, int mu) {
  if (top_p <= 0.0 || top_p > 1.0) {
    throw std::invalid_argument("mask: top_p must be in (0, 1]");
  }
  if (mu < 1) throw std::invalid_argument("mask: mu must be >= 1");
  MaskState mask;
  mask.snapshot = m;
  mask.top_p = top_p;
  mask.mu = mu;
  mask.counter = 0;
  return mask;
}

void nlpo_sync(MaskState& mask, const PolicyModel& m) {
  ++mask.counter;
  if (mask.counter >= mask.mu) {
    mask.snapshot = m;
    mask.counter = 0;
  }
}

NlpoSample nlpo_step_policy(const PolicyModel& m, const MaskState& mask,
                            std::span<const int> window,
                            const DecodeConfig& dc, int generated_len,
                            int eos_id, Rng& rng) {
  const auto mask_last = mask.snapshot.forward_last(window);
  const auto mask_lsm = log_softmax(mask_last.logits);
  std::vector<double> probs(mask_lsm.size());
  for (std::size_t i = 0; i < probs.size(); ++i) probs[i] = std::exp(mask_lsm[i]);
  const auto kept = top_p_mask(probs, mask.top_p);

  const auto last = m.forward_last(window);
  const auto outcome =
      sample_from_logits(last.logits, dc, generated_len, kept, eos_id, rng);

  NlpoSample sample;
  sample.action = outcome.action;
  sample.log_prob = outcome.log_prob;
  sample.unmasked_log_prob = log_softmax_at(last.logits, outcome.action);
  sample.kept = kept;
  return sample;
}

double supervised_loss(const PolicyModel& m,
                       std::span<const Example* const> batch) {
  long total_tokens = 0;
  for (const auto* ex : batch) total_tokens += ex->reference.size();
  if (total_tokens == 0) {
    throw std::invalid_argument("supervised: empty batch");
  }
  double nll = 0.0;
  for (const auto* ex : batch) {
    std::vector<int> window = ex->prompt;
    window.insert(window.end(), ex->reference.begin(), ex->reference.end());
    const int prompt_len = static_cast<int>(ex->prompt.size());
    const auto out = m.forward_seq(window, prompt_len - 1,
                                   static_cast<int>(window.size()) - 1);
    for (std::size_t t = 0; t < ex->reference.size(); ++t) {
      const int row = prompt_len - 1 + static_cast<int>(t);
      nll -= log_softmax_at(out.logits_row(row), ex->reference[t]);
    }
  }
  return nll / static_cast<double>(total_tokens);
}

double supervised_loss_and_grad(const PolicyModel& m,
                                 std::span<const Example* const> batch,
                                 std::span<double> grad, Rng* dropout_rng) {
  long total_tokens = 0;
  for (const auto* ex : batch) total_tokens += ex->reference.size();
  if (total_tokens == 0) {
    throw std::invalid_argument("supervised: empty batch");
  }
  const double inv_n = 1.0 / static_cast<double>(total_tokens);

  std::vector<GradWindow> windows(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto* ex = batch[i];
    auto& w = windows[i];
    w.tokens = ex->prompt;
    w.tokens.insert(w.tokens.end(), ex->reference.begin(),
                    ex->reference.end());
    const int prompt_len = static_cast<int>(ex->prompt.size());
    w.row_begin = prompt_len - 1;
    w.row_end = static_cast<int>(w.tokens.size()) - 1;
  }

  const WindowLossFn fn = [&](std::size_t i, const SeqOutputs& out,
                              OutputGrads& og) -> double {
    const auto* ex = batch[i];
    const int prompt_len = static_cast<int>(ex->prompt.size());
    const int vocab = out.vocab;
    double loss = 0.0;
    for (std::size_t t = 0; t < ex->reference.size(); ++t) {
      const int row = prompt_len - 1 + static_cast<int>(t);
      const int target = ex->reference[t];
      const auto lsm = masked_log_softmax(out.logits_row(row), {});
      loss -= lsm[target] * inv_n;
      double* dl = og.dlogits.data() + static_cast<std::size_t>(row) * vocab;
      for (int j = 0; j < vocab; ++j) {
        dl[j] += inv_n * (std::exp(lsm[j]) - (j == target ? 1.0 : 0.0));
      }
    }
    return loss;
  };
  return loss_and_gradient(m, windows, fn, grad, dropout_rng);
}

double supervised_update(PolicyModel& m,
                         std::span<const Example* const> batch,
                         const SupervisedHp& hp, AdamState& opt,
                         Rng* dropout_rng) {
  std::vector<double> grad(m.param_count(), 0.0);
  const double loss = supervised_loss_and_grad(m, batch, grad, dropout_rng);
  clip_grad_norm(grad, hp.max_grad_norm);
  const AdamConfig adam_cfg{hp.lr, 0.9, 0.999, 1e-8};
  adam_step(m.params_mut(), grad, opt, adam_cfg);
  m.bump_version();
  return loss;
}

EpisodeRollout collect_episode(Env& env, const RolloutContext& ctx, Rng& rng) {
  const PolicyModel& policy = *ctx.policy;
  const PolicyModel& ref = *ctx.ref;
  EpisodeRollout ep;
  env.reset(rng);
  ep.example_index = env.example_index();
  ep.prompt = env.state().prompt;
  ep.policy_version = policy.version();

  std::vector<std::vector<double>> policy_rows;  // full log-softmax per step
  bool done = false;
  double terminal_reward = 0.0;
  while (!done) {
    const auto window = env.state().observation();
    const int generated = env.state().t;

    const auto last = policy.forward_last(window);
    std::span<const std::uint8_t> keep{};
    if (ctx.mask) {
      const auto mask_last = ctx.mask->snapshot.forward_last(window);
      const auto mask_lsm = log_softmax(mask_last.logits);
      std::vector<double> probs(mask_lsm.size());
      for (std::size_t i = 0; i < probs.size(); ++i) {
        probs[i] = std::exp(mask_lsm[i]);
      }
      ep.masks.push_back(top_p_mask(probs, ctx.mask->top_p));
      keep = ep.masks.back();
    }
    const auto outcome = sample_from_logits(last.logits, ctx.decode, generated,
                                            keep, ctx.eos_id, rng);
    const auto policy_lsm = log_softmax(last.logits);
    const auto acting_lsm = masked_log_softmax(last.logits, keep);

    ep.actions.push_back(outcome.action);
    ep.act_log_probs.push_back(outcome.log_prob);
    ep.policy_log_probs.push_back(policy_lsm[outcome.action]);
    ep.values.push_back(last.value);
    ep.entropy_sum += entropy_from_log_softmax(acting_lsm);
    policy_rows.push_back(policy_lsm);

    const auto result = env.step(outcome.action);
    done = result.done;
    if (done) terminal_reward = result.reward;
  }
  ep.task_reward = terminal_reward;

  // Reference log-probs for the realized sequence come from one pass.
  std::vector<int> seq = ep.prompt;
  seq.insert(seq.end(), ep.actions.begin(), ep.actions.end());
  const int prompt_len = static_cast<int>(ep.prompt.size());
  const auto ref_out = ref.forward_seq(seq, prompt_len - 1,
                                       static_cast<int>(seq.size()) - 1);
  for (int t = 0; t < ep.steps(); ++t) {
    const auto ref_lsm = log_softmax(ref_out.logits_row(prompt_len - 1 + t));
    ep.ref_log_probs.push_back(ref_lsm[ep.actions[t]]);
    ep.kl_exact.push_back(kl_from_log_softmax(policy_rows[t], ref_lsm));
  }
  return ep;
}

std::vector<EpisodeRollout> collect_rollouts(const std::vector<Example>& examples,
                                             int horizon, int vocab_size,
                                             const RewardFn& reward_fn,
                                             const RolloutContext& ctx,
                                             const RolloutBatchConfig& batch) {
  if (batch.episodes < 1) {
    throw std::invalid_argument("collect_rollouts: episodes must be >= 1");
  }
  std::vector<EpisodeRollout> out(batch.episodes);
  const auto run_range = [&](int begin, int end) {
    Env env(&examples, horizon, ctx.eos_id, vocab_size, reward_fn);
    for (int e = begin; e < end; ++e) {
      Rng rng = Rng::stream(batch.run_seed, "rollout", batch.update_index,
                            static_cast<std::uint64_t>(e));
      out[e] = collect_episode(env, ctx, rng);
    }
  };

  const int workers = std::max(1, batch.workers);
  if (workers == 1 || batch.episodes == 1) {
    run_range(0, batch.episodes);
  } else {
    std::vector<std::thread> threads;
    const int chunk = (batch.episodes + workers - 1) / workers;
    for (int w = 0; w < workers; ++w) {
      const int begin = w * chunk;
      const int end = std::min(batch.episodes, begin + chunk);
      if (begin >= end) break;
      threads.emplace_back(run_range, begin, end);
    }
    for (auto& t : threads) t.join();
  }
  return out;
}

}  // namespace tokenrl
