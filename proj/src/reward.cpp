#include "tokenrl/reward.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "tokenrl/metrics.hpp"
#include "tokenrl/rng.hpp"

namespace tokenrl {

namespace {

std::vector<int> strip_eos(std::span<const int> tokens, int eos_id) {
  std::vector<int> out;
  for (int t : tokens) {
    if (t != eos_id) out.push_back(t);
  }
  return out;
}

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

}  // namespace

KLControllerState make_kl_controller(double target_kl, double initial_beta,
                                     double gain, double clip,
                                     double max_beta) {
  if (!std::isinf(target_kl) && target_kl <= 0.0) {
    throw std::invalid_argument("kl controller: finite target must be > 0");
  }
  if (max_beta <= 0.0) {
    throw std::invalid_argument("kl controller: max_beta must be > 0");
  }
  KLControllerState s;
  s.target_kl = target_kl;
  s.beta = std::isinf(target_kl) ? 0.0 : std::min(initial_beta, max_beta);
  s.gain = gain;
  s.clip = clip;
  s.max_beta = max_beta;
  if (!s.penalty_disabled() && s.beta <= 0.0) {
    throw std::invalid_argument("kl controller: initial beta must be > 0");
  }
  return s;
}

KLControllerState kl_controller_update(KLControllerState state,
                                       double measured_kl) {
  if (state.penalty_disabled()) return state;  // beta stays 0
  if (!std::isfinite(measured_kl)) {
    throw std::invalid_argument("kl controller: non-finite measurement");
  }
  measured_kl = std::max(measured_kl, 0.0);
  const double err = (measured_kl - state.target_kl) / state.target_kl;
  const double clipped = std::clamp(err, -state.clip, state.clip);
  state.beta = std::min(state.beta * (1.0 + state.gain * clipped),
                        state.max_beta);
  return state;
}

std::vector<double> kl_regularized_rewards(
    std::span<const double> policy_log_probs,
    std::span<const double> ref_log_probs, double terminal_task_reward,
    double beta) {
  if (policy_log_probs.size() != ref_log_probs.size()) {
    throw std::invalid_argument("kl_regularized_rewards: length mismatch");
  }
  if (policy_log_probs.empty()) {
    throw std::invalid_argument("kl_regularized_rewards: empty trajectory");
  }
  std::vector<double> shaped(policy_log_probs.size());
  for (std::size_t t = 0; t < shaped.size(); ++t) {
    const double raw =
        t + 1 == shaped.size() ? terminal_task_reward : 0.0;
    shaped[t] = raw - beta * (policy_log_probs[t] - ref_log_probs[t]);
  }
  return shaped;
}

double ClassifierReward::score(std::span<const int> tokens) const {
  double z = bias_;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    auto u = unigram_w_.find(tokens[i]);
    if (u != unigram_w_.end()) z += u->second;
    if (i + 1 < tokens.size()) {
      auto b = bigram_w_.find({tokens[i], tokens[i + 1]});
      if (b != bigram_w_.end()) z += b->second;
    }
  }
  return sigmoid(z);
}

nlohmann::json ClassifierReward::to_json(const Vocabulary& v) const {
  nlohmann::json weights;
  for (const auto& [tok, w] : unigram_w_) {
    weights[v.token_of(tok)] = w;
  }
  for (const auto& [pair, w] : bigram_w_) {
    weights[v.token_of(pair.first) + " " + v.token_of(pair.second)] = w;
  }
  return nlohmann::json{{"weights", weights},
                        {"bias", bias_},
                        {"accuracy", accuracy_},
                        {"train_fraction", train_fraction_}};
}

ClassifierReward train_reward_classifier(
    const std::vector<LabeledSequence>& labeled, double train_fraction,
    std::uint64_t seed) {
  if (train_fraction <= 0.0 || train_fraction > 1.0) {
    throw std::invalid_argument("classifier: fraction must be in (0, 1]");
  }
  if (labeled.size() < 10) {
    throw std::invalid_argument("classifier: too little labeled data");
  }

  Rng rng = Rng::stream(seed, "classifier");
  std::vector<std::size_t> order(labeled.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  for (std::size_t i = order.size() - 1; i > 0; --i) {
    std::swap(order[i], order[rng.next_below(i + 1)]);
  }

  const std::size_t held_out = std::max<std::size_t>(1, order.size() / 5);
  const std::size_t pool = order.size() - held_out;
  const std::size_t used = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::llround(train_fraction * pool)));

  std::vector<const LabeledSequence*> train, eval;
  for (std::size_t i = 0; i < used; ++i) train.push_back(&labeled[order[i]]);
  for (std::size_t i = pool; i < order.size(); ++i) {
    eval.push_back(&labeled[order[i]]);
  }

  bool has_pos = false, has_neg = false;
  for (const auto* ex : train) {
    (ex->label == 1 ? has_pos : has_neg) = true;
  }
  if (!has_pos || !has_neg) {
    throw std::runtime_error(
        "classifier: subsample contains a single class; reseed or raise the "
        "fraction");
  }

  // Dense feature index over unigrams/bigrams seen in the training subsample.
  std::map<int, int> uni_index;
  std::map<std::pair<int, int>, int> bi_index;
  for (const auto* ex : train) {
    for (std::size_t i = 0; i < ex->tokens.size(); ++i) {
      uni_index.emplace(ex->tokens[i], 0);
      if (i + 1 < ex->tokens.size()) {
        bi_index.emplace(std::make_pair(ex->tokens[i], ex->tokens[i + 1]), 0);
      }
    }
  }
  int next = 0;
  for (auto& [k, idx] : uni_index) idx = next++;
  for (auto& [k, idx] : bi_index) idx = next++;
  const int n_features = next;

  const auto featurize = [&](const LabeledSequence& ex,
                             std::vector<std::pair<int, double>>& feats) {
    feats.clear();
    std::map<int, double> counts;
    for (std::size_t i = 0; i < ex.tokens.size(); ++i) {
      auto u = uni_index.find(ex.tokens[i]);
      if (u != uni_index.end()) counts[u->second] += 1.0;
      if (i + 1 < ex.tokens.size()) {
        auto b = bi_index.find({ex.tokens[i], ex.tokens[i + 1]});
        if (b != bi_index.end()) counts[b->second] += 1.0;
      }
    }
    feats.assign(counts.begin(), counts.end());
  };

  std::vector<std::vector<std::pair<int, double>>> feats(train.size());
  std::vector<std::pair<int, double>> scratch;
  for (std::size_t i = 0; i < train.size(); ++i) featurize(*train[i], feats[i]);

  // Full-batch gradient descent with mild L2, run to a gradient tolerance.
  std::vector<double> w(n_features, 0.0);
  double bias = 0.0;
  const double lr = 0.5;
  const double l2 = 1e-4;
  const int max_iters = 2000;
  std::vector<double> gw(n_features);
  for (int iter = 0; iter < max_iters; ++iter) {
    std::fill(gw.begin(), gw.end(), 0.0);
    double gb = 0.0;
    for (std::size_t i = 0; i < train.size(); ++i) {
      double z = bias;
      for (const auto& [f, c] : feats[i]) z += w[f] * c;
      const double err = sigmoid(z) - (train[i]->label == 1 ? 1.0 : 0.0);
      for (const auto& [f, c] : feats[i]) gw[f] += err * c;
      gb += err;
    }
    const double inv_n = 1.0 / static_cast<double>(train.size());
    double grad_norm_sq = gb * gb * inv_n * inv_n;
    for (int f = 0; f < n_features; ++f) {
      gw[f] = gw[f] * inv_n + l2 * w[f];
      grad_norm_sq += gw[f] * gw[f];
    }
    for (int f = 0; f < n_features; ++f) w[f] -= lr * gw[f];
    bias -= lr * gb * inv_n;
    if (std::sqrt(grad_norm_sq) < 1e-6) break;
  }

  ClassifierReward clf;
  for (const auto& [tok, idx] : uni_index) clf.unigram_w_[tok] = w[idx];
  for (const auto& [pair, idx] : bi_index) clf.bigram_w_[pair] = w[idx];
  clf.bias_ = bias;
  clf.train_fraction_ = train_fraction;

  int correct = 0;
  for (const auto* ex : eval) {
    const int pred = clf.score(ex->tokens) >= 0.5 ? 1 : 0;
    if (pred == ex->label) ++correct;
  }
  clf.accuracy_ = eval.empty()
                      ? 0.0
                      : static_cast<double>(correct) / eval.size();
  return clf;
}

std::vector<int> concept_ids(const Vocabulary& v, const Example& example) {
  std::vector<int> ids;
  for (const auto& c :
       example.meta.at("concepts").get<std::vector<std::string>>()) {
    ids.push_back(v.id_of(c));
  }
  return ids;
}

double task_reward(TaskKind task, const EnvState& final_state,
                   const Example& example, const ClassifierReward* scorer,
                   int eos_id, const TaskRewardConfig& cfg) {
  if (!final_state.done) {
    throw std::logic_error("task_reward: episode not finished");
  }
  const std::vector<int> generation = strip_eos(final_state.actions, eos_id);
  const std::vector<int> reference = strip_eos(example.reference, eos_id);

  switch (task) {
    case TaskKind::SentimentContinuation: {
      if (!scorer) throw std::invalid_argument("task_reward: scorer required");
      return scorer->score(generation);
    }
    case TaskKind::ConceptCoverage: {
      std::vector<int> concepts = example.prompt;  // prompt lists the concepts
      const double cov = coverage(concepts, generation);
      if (cfg.coverage_rouge_weight <= 0.0) return cov;
      double rl = 0.0;
      if (!generation.empty() && !reference.empty()) {
        rl = rouge_l(generation, reference).f1;
      }
      return (1.0 - cfg.coverage_rouge_weight) * cov +
             cfg.coverage_rouge_weight * rl;
    }
    case TaskKind::KeyValueVerbalization: {
      if (generation.empty() || reference.empty()) return 0.0;
      return rouge_l(generation, reference).f1;
    }
  }
  throw std::logic_error("task_reward: bad task kind");
}

}  // namespace tokenrl
