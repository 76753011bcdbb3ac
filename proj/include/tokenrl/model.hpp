#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "tokenrl/rng.hpp"

namespace tokenrl {

struct ModelConfig {
  int vocab_size = 0;
  int d_model = 32;
  int n_heads = 2;
  int n_layers = 1;
  int d_ff = 128;
  int context_len = 32;
  double dropout = 0.0;
  std::uint64_t seed = 0;

  void validate() const;
};

// Named views into the flat parameter vector.
struct ParamLayout {
  struct Span {
    std::size_t offset = 0;
    std::size_t count = 0;
  };
  struct Layer {
    Span ln1_g, ln1_b;
    Span wq, bq, wk, bk, wv, bv, wo, bo;
    Span ln2_g, ln2_b;
    Span w1, b1, w2, b2;
  };

  Span tok_emb, pos_emb;
  std::vector<Layer> layers;
  Span lnf_g, lnf_b;
  Span w_out, b_out;
  Span w_val, b_val;
  std::size_t total = 0;

  static ParamLayout make(const ModelConfig& cfg);
};

// Per-position outputs of a sequence pass. Logit/value rows are computed on
// [row_begin, row_end); row i conditions on tokens 0..i.
struct SeqOutputs {
  int len = 0;
  int vocab = 0;
  int row_begin = 0;
  int row_end = 0;
  std::vector<double> logits;
  std::vector<double> values;

  std::span<const double> logits_row(int i) const;
  double value_at(int i) const;
};

struct LayerCache {
  std::vector<double> in;
  std::vector<double> ln1_out, ln1_mean, ln1_rstd;
  std::vector<double> q, k, v;
  std::vector<double> att;      // heads x len x len
  std::vector<double> att_mix;  // pre out-projection
  std::vector<double> att_drop;
  std::vector<double> x_attn;
  std::vector<double> ln2_out, ln2_mean, ln2_rstd;
  std::vector<double> ff_pre, ff_act;
  std::vector<double> ff_drop;
  std::vector<double> out;
};

struct SeqCache {
  int len = 0;
  std::vector<int> window;
  std::vector<LayerCache> layers;
  std::vector<double> lnf_mean, lnf_rstd;
  std::vector<double> hidden;  // final layer-normed states, len x d
};

struct LastOutput {
  std::vector<double> logits;
  double value = 0.0;
};

// Decoder-only causal transformer: token + position embeddings, pre-LN
// attention/feed-forward blocks, a token projection and a scalar value head
// on the final hidden state. All math is double precision and deterministic.
class PolicyModel {
 public:
  PolicyModel() = default;
  PolicyModel(ModelConfig cfg, Rng& init_rng);

  // Rebuilds a model from a stored parameter vector (checkpoint restore).
  static PolicyModel from_params(ModelConfig cfg, std::vector<double> params,
                                 std::uint64_t version = 0);

  const ModelConfig& config() const { return cfg_; }
  const ParamLayout& layout() const { return layout_; }
  std::size_t param_count() const { return params_.size(); }

  std::span<const double> params() const { return params_; }
  std::vector<double>& params_mut() { return params_; }

  // Incremented by training code after each parameter update; rollouts carry
  // the version they were sampled under.
  std::uint64_t version() const { return version_; }
  void bump_version() { ++version_; }

  // Copy with a freshly initialized value head; logits are unchanged.
  PolicyModel clone_with_fresh_value_head(Rng& rng) const;
  void reinit_value_head(Rng& rng);

  // Full sequence pass; logits/values for rows [row_begin, row_end).
  SeqOutputs forward_seq(std::span<const int> window) const;
  SeqOutputs forward_seq(std::span<const int> window, int row_begin,
                         int row_end, SeqCache* cache = nullptr,
                         Rng* dropout_rng = nullptr) const;

  // Next-token logits and state value at the final position only.
  LastOutput forward_last(std::span<const int> window) const;

  double log_prob(std::span<const int> window, int action) const;

  // Accumulates d(loss)/d(params) into grad given gradients w.r.t. the
  // computed logit/value rows (layout matches SeqOutputs).
  void backward_seq(const SeqCache& cache, const SeqOutputs& out,
                    std::span<const double> dlogits,
                    std::span<const double> dvalues,
                    std::span<double> grad) const;

 private:
  void project_rows(const SeqCache& cache, int row_begin, int row_end,
                    SeqOutputs& out) const;

  ModelConfig cfg_;
  ParamLayout layout_;
  std::vector<double> params_;
  std::uint64_t version_ = 0;
};

// One training window plus the logit/value rows the loss touches.
struct GradWindow {
  std::vector<int> tokens;
  int row_begin = 0;
  int row_end = 0;
};

// Gradients w.r.t. the computed output rows of one window.
struct OutputGrads {
  std::vector<double> dlogits;
  std::vector<double> dvalues;
};

// Loss callback: returns this window's loss contribution and fills grads.
using WindowLossFn =
    std::function<double(std::size_t index, const SeqOutputs& out,
                         OutputGrads& grads)>;

// Runs forward/backward over each window, sums losses, accumulates parameter
// gradients. Throws if the total loss or any gradient is not finite.
double loss_and_gradient(const PolicyModel& m,
                         std::span<const GradWindow> windows,
                         const WindowLossFn& fn, std::span<double> grad,
                         Rng* dropout_rng = nullptr);

// ---- distribution helpers (max-subtracted, numerically stable) ----

std::vector<double> log_softmax(std::span<const double> logits);
double log_softmax_at(std::span<const double> logits, int index);

// Masked log-softmax over kept entries; masked entries get -inf. An empty
// mask span means "keep everything".
std::vector<double> masked_log_softmax(std::span<const double> logits,
                                       std::span<const std::uint8_t> keep);

double entropy_from_log_softmax(std::span<const double> lsm);

// Exact KL(p || q) from two full log-softmax rows.
double kl_from_log_softmax(std::span<const double> lsm_p,
                           std::span<const double> lsm_q);

// ---- decoding ----

struct DecodeConfig {
  enum class Mode { Greedy, Sample };
  Mode mode = Mode::Sample;
  int top_k = 0;        // 0 disables
  double top_p = 0.0;   // 0 or 1 disables
  int min_length = 0;   // EOS masked while generated length < min_length
  int max_new_tokens = 16;
  double temperature = 1.0;
};

// Smallest probability-sorted prefix with cumulative mass >= p; probability
// ties break toward the lower token id. Always keeps at least one token.
std::vector<std::uint8_t> top_p_mask(std::span<const double> probs, double p);

struct SampleOutcome {
  int action = -1;
  double log_prob = 0.0;  // under the filtered distribution sampled from
};

SampleOutcome sample_from_logits(std::span<const double> logits,
                                 const DecodeConfig& dc, int generated_len,
                                 std::span<const std::uint8_t> keep_mask,
                                 int eos_id, Rng& rng);

SampleOutcome sample_action(const PolicyModel& m, std::span<const int> window,
                            const DecodeConfig& dc, int generated_len,
                            std::span<const std::uint8_t> keep_mask,
                            int eos_id, Rng& rng);

// ---- optimizer ----

struct AdamConfig {
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::vector<double> m, v;
  long step = 0;

  void init(std::size_t n) {
    m.assign(n, 0.0);
    v.assign(n, 0.0);
    step = 0;
  }
};

void adam_step(std::span<double> params, std::span<const double> grad,
               AdamState& state, const AdamConfig& cfg);

// Scales grad in place so its L2 norm is at most max_norm; returns the
// pre-clip norm. max_norm <= 0 disables clipping.
double clip_grad_norm(std::span<double> grad, double max_norm);

}  // namespace tokenrl
