#include "tokenrl/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace tokenrl {

namespace {

constexpr double kLnEps = 1e-5;
constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double gelu(double x) {
  const double c = std::sqrt(2.0 / M_PI);
  const double u = c * (x + 0.044715 * x * x * x);
  return 0.5 * x * (1.0 + std::tanh(u));
}

double gelu_grad(double x) {
  const double c = std::sqrt(2.0 / M_PI);
  const double u = c * (x + 0.044715 * x * x * x);
  const double t = std::tanh(u);
  return 0.5 * (1.0 + t) +
         0.5 * x * (1.0 - t * t) * c * (1.0 + 3.0 * 0.044715 * x * x);
}

void layer_norm_forward(const double* x, const double* gamma,
                        const double* beta, int d, double* out, double* mean,
                        double* rstd) {
  double mu = 0.0;
  for (int j = 0; j < d; ++j) mu += x[j];
  mu /= d;
  double var = 0.0;
  for (int j = 0; j < d; ++j) {
    const double dx = x[j] - mu;
    var += dx * dx;
  }
  var /= d;
  const double rs = 1.0 / std::sqrt(var + kLnEps);
  for (int j = 0; j < d; ++j) {
    out[j] = gamma[j] * ((x[j] - mu) * rs) + beta[j];
  }
  *mean = mu;
  *rstd = rs;
}

void layer_norm_backward(const double* dout, const double* x,
                         const double* gamma, double mean, double rstd, int d,
                         double* dx, double* dgamma, double* dbeta) {
  double m1 = 0.0, m2 = 0.0;
  for (int j = 0; j < d; ++j) {
    const double xhat = (x[j] - mean) * rstd;
    const double dxhat = dout[j] * gamma[j];
    m1 += dxhat;
    m2 += dxhat * xhat;
    dgamma[j] += dout[j] * xhat;
    dbeta[j] += dout[j];
  }
  m1 /= d;
  m2 /= d;
  for (int j = 0; j < d; ++j) {
    const double xhat = (x[j] - mean) * rstd;
    const double dxhat = dout[j] * gamma[j];
    dx[j] += rstd * (dxhat - m1 - xhat * m2);
  }
}

// y[i] = W x + b with W row-major [rows x cols].
void linear_forward(const double* w, const double* b, const double* x,
                    int rows, int cols, double* y) {
  for (int r = 0; r < rows; ++r) {
    const double* wr = w + static_cast<std::size_t>(r) * cols;
    double acc = b ? b[r] : 0.0;
    for (int c = 0; c < cols; ++c) acc += wr[c] * x[c];
    y[r] = acc;
  }
}

void linear_backward(const double* w, const double* x, const double* dy,
                     int rows, int cols, double* dw, double* db, double* dx) {
  for (int r = 0; r < rows; ++r) {
    const double g = dy[r];
    if (db) db[r] += g;
    const double* wr = w + static_cast<std::size_t>(r) * cols;
    double* dwr = dw + static_cast<std::size_t>(r) * cols;
    for (int c = 0; c < cols; ++c) {
      dwr[c] += g * x[c];
      if (dx) dx[c] += g * wr[c];
    }
  }
}

}  // namespace

void ModelConfig::validate() const {
  if (vocab_size < 4) throw std::invalid_argument("model: vocab_size too small");
  if (d_model < 8) throw std::invalid_argument("model: d_model must be >= 8");
  if (n_heads < 1 || d_model % n_heads != 0) {
    throw std::invalid_argument("model: d_model must be divisible by n_heads");
  }
  if (n_layers < 1) throw std::invalid_argument("model: n_layers must be >= 1");
  if (d_ff < 1) throw std::invalid_argument("model: d_ff must be >= 1");
  if (context_len < 2) throw std::invalid_argument("model: context_len too small");
  if (dropout < 0.0 || dropout >= 1.0) {
    throw std::invalid_argument("model: dropout must be in [0, 1)");
  }
}

ParamLayout ParamLayout::make(const ModelConfig& cfg) {
  ParamLayout pl;
  std::size_t off = 0;
  const auto take = [&off](std::size_t n) {
    Span s{off, n};
    off += n;
    return s;
  };
  const std::size_t d = cfg.d_model, f = cfg.d_ff, v = cfg.vocab_size;
  pl.tok_emb = take(v * d);
  pl.pos_emb = take(static_cast<std::size_t>(cfg.context_len) * d);
  pl.layers.resize(cfg.n_layers);
  for (auto& l : pl.layers) {
    l.ln1_g = take(d);
    l.ln1_b = take(d);
    l.wq = take(d * d);
    l.bq = take(d);
    l.wk = take(d * d);
    l.bk = take(d);
    l.wv = take(d * d);
    l.bv = take(d);
    l.wo = take(d * d);
    l.bo = take(d);
    l.ln2_g = take(d);
    l.ln2_b = take(d);
    l.w1 = take(f * d);
    l.b1 = take(f);
    l.w2 = take(d * f);
    l.b2 = take(d);
  }
  pl.lnf_g = take(d);
  pl.lnf_b = take(d);
  pl.w_out = take(v * d);
  pl.b_out = take(v);
  pl.w_val = take(d);
  pl.b_val = take(1);
  pl.total = off;
  return pl;
}

std::span<const double> SeqOutputs::logits_row(int i) const {
  if (i < row_begin || i >= row_end) {
    throw std::out_of_range("SeqOutputs::logits_row: row not computed");
  }
  return {logits.data() + static_cast<std::size_t>(i) * vocab,
          static_cast<std::size_t>(vocab)};
}

double SeqOutputs::value_at(int i) const {
  if (i < row_begin || i >= row_end) {
    throw std::out_of_range("SeqOutputs::value_at: row not computed");
  }
  return values[static_cast<std::size_t>(i)];
}

PolicyModel::PolicyModel(ModelConfig cfg, Rng& init_rng) : cfg_(cfg) {
  cfg_.validate();
  layout_ = ParamLayout::make(cfg_);
  params_.assign(layout_.total, 0.0);

  const auto fill_normal = [&](ParamLayout::Span s) {
    for (std::size_t i = 0; i < s.count; ++i) {
      params_[s.offset + i] = 0.02 * init_rng.next_normal();
    }
  };
  const auto fill_const = [&](ParamLayout::Span s, double value) {
    std::fill_n(params_.begin() + s.offset, s.count, value);
  };

  fill_normal(layout_.tok_emb);
  fill_normal(layout_.pos_emb);
  for (const auto& l : layout_.layers) {
    fill_const(l.ln1_g, 1.0);
    fill_normal(l.wq);
    fill_normal(l.wk);
    fill_normal(l.wv);
    fill_normal(l.wo);
    fill_const(l.ln2_g, 1.0);
    fill_normal(l.w1);
    fill_normal(l.w2);
  }
  fill_const(layout_.lnf_g, 1.0);
  fill_normal(layout_.w_out);
  fill_normal(layout_.w_val);
}

PolicyModel PolicyModel::from_params(ModelConfig cfg,
                                     std::vector<double> params,
                                     std::uint64_t version) {
  cfg.validate();
  PolicyModel m;
  m.cfg_ = cfg;
  m.layout_ = ParamLayout::make(cfg);
  if (params.size() != m.layout_.total) {
    throw std::invalid_argument("from_params: parameter count mismatch");
  }
  m.params_ = std::move(params);
  m.version_ = version;
  return m;
}

PolicyModel PolicyModel::clone_with_fresh_value_head(Rng& rng) const {
  PolicyModel copy = *this;
  copy.reinit_value_head(rng);
  return copy;
}

void PolicyModel::reinit_value_head(Rng& rng) {
  for (std::size_t i = 0; i < layout_.w_val.count; ++i) {
    params_[layout_.w_val.offset + i] = 0.02 * rng.next_normal();
  }
  params_[layout_.b_val.offset] = 0.0;
}

SeqOutputs PolicyModel::forward_seq(std::span<const int> window) const {
  return forward_seq(window, 0, static_cast<int>(window.size()));
}

SeqOutputs PolicyModel::forward_seq(std::span<const int> window, int row_begin,
                                    int row_end, SeqCache* cache,
                                    Rng* dropout_rng) const {
  const int len = static_cast<int>(window.size());
  if (len < 1) throw std::invalid_argument("forward: empty window");
  if (len > cfg_.context_len) {
    throw std::invalid_argument("forward: window longer than context");
  }
  for (int id : window) {
    if (id < 0 || id >= cfg_.vocab_size) {
      throw std::invalid_argument("forward: token id out of range");
    }
  }
  if (row_begin < 0 || row_end > len || row_begin >= row_end) {
    throw std::invalid_argument("forward: bad row range");
  }

  const int d = cfg_.d_model, f = cfg_.d_ff, heads = cfg_.n_heads;
  const int dh = d / heads;
  const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));
  const double* p = params_.data();
  const bool use_dropout = dropout_rng != nullptr && cfg_.dropout > 0.0;

  SeqCache local;
  SeqCache& c = cache ? *cache : local;
  c.len = len;
  c.window.assign(window.begin(), window.end());
  c.layers.assign(cfg_.n_layers, LayerCache{});
  c.lnf_mean.assign(len, 0.0);
  c.lnf_rstd.assign(len, 0.0);
  c.hidden.assign(static_cast<std::size_t>(len) * d, 0.0);

  std::vector<double> x(static_cast<std::size_t>(len) * d);
  for (int i = 0; i < len; ++i) {
    const double* te = p + layout_.tok_emb.offset +
                       static_cast<std::size_t>(window[i]) * d;
    const double* pe = p + layout_.pos_emb.offset +
                       static_cast<std::size_t>(i) * d;
    for (int j = 0; j < d; ++j) x[static_cast<std::size_t>(i) * d + j] = te[j] + pe[j];
  }

  for (int li = 0; li < cfg_.n_layers; ++li) {
    const auto& L = layout_.layers[li];
    LayerCache& lc = c.layers[li];
    lc.in = x;
    lc.ln1_out.assign(x.size(), 0.0);
    lc.ln1_mean.assign(len, 0.0);
    lc.ln1_rstd.assign(len, 0.0);
    lc.q.assign(x.size(), 0.0);
    lc.k.assign(x.size(), 0.0);
    lc.v.assign(x.size(), 0.0);
    lc.att.assign(static_cast<std::size_t>(heads) * len * len, 0.0);
    lc.att_mix.assign(x.size(), 0.0);
    lc.x_attn.assign(x.size(), 0.0);
    lc.ln2_out.assign(x.size(), 0.0);
    lc.ln2_mean.assign(len, 0.0);
    lc.ln2_rstd.assign(len, 0.0);
    lc.ff_pre.assign(static_cast<std::size_t>(len) * f, 0.0);
    lc.ff_act.assign(static_cast<std::size_t>(len) * f, 0.0);
    lc.out.assign(x.size(), 0.0);

    for (int i = 0; i < len; ++i) {
      const std::size_t row = static_cast<std::size_t>(i) * d;
      layer_norm_forward(&lc.in[row], p + L.ln1_g.offset, p + L.ln1_b.offset,
                         d, &lc.ln1_out[row], &lc.ln1_mean[i], &lc.ln1_rstd[i]);
      linear_forward(p + L.wq.offset, p + L.bq.offset, &lc.ln1_out[row], d, d,
                     &lc.q[row]);
      linear_forward(p + L.wk.offset, p + L.bk.offset, &lc.ln1_out[row], d, d,
                     &lc.k[row]);
      linear_forward(p + L.wv.offset, p + L.bv.offset, &lc.ln1_out[row], d, d,
                     &lc.v[row]);
    }

    // Causal attention, one head at a time.
    std::vector<double> scores(len);
    for (int h = 0; h < heads; ++h) {
      const int hoff = h * dh;
      for (int i = 0; i < len; ++i) {
        double maxs = kNegInf;
        for (int j = 0; j <= i; ++j) {
          double s = 0.0;
          const double* qi = &lc.q[static_cast<std::size_t>(i) * d + hoff];
          const double* kj = &lc.k[static_cast<std::size_t>(j) * d + hoff];
          for (int t = 0; t < dh; ++t) s += qi[t] * kj[t];
          s *= inv_sqrt_dh;
          scores[j] = s;
          maxs = std::max(maxs, s);
        }
        double sum = 0.0;
        double* att_row =
            &lc.att[(static_cast<std::size_t>(h) * len + i) * len];
        for (int j = 0; j <= i; ++j) {
          att_row[j] = std::exp(scores[j] - maxs);
          sum += att_row[j];
        }
        const double inv = 1.0 / sum;
        for (int j = 0; j <= i; ++j) att_row[j] *= inv;
        double* mix = &lc.att_mix[static_cast<std::size_t>(i) * d + hoff];
        for (int j = 0; j <= i; ++j) {
          const double pj = att_row[j];
          const double* vj = &lc.v[static_cast<std::size_t>(j) * d + hoff];
          for (int t = 0; t < dh; ++t) mix[t] += pj * vj[t];
        }
      }
    }

    if (use_dropout) {
      lc.att_drop.assign(x.size(), 0.0);
      const double keep_scale = 1.0 / (1.0 - cfg_.dropout);
      for (auto& m : lc.att_drop) {
        m = dropout_rng->next_double() < cfg_.dropout ? 0.0 : keep_scale;
      }
    }

    std::vector<double> proj(d);
    for (int i = 0; i < len; ++i) {
      const std::size_t row = static_cast<std::size_t>(i) * d;
      linear_forward(p + L.wo.offset, p + L.bo.offset, &lc.att_mix[row], d, d,
                     proj.data());
      for (int j = 0; j < d; ++j) {
        const double drop = lc.att_drop.empty() ? 1.0 : lc.att_drop[row + j];
        lc.x_attn[row + j] = lc.in[row + j] + proj[j] * drop;
      }
      layer_norm_forward(&lc.x_attn[row], p + L.ln2_g.offset,
                         p + L.ln2_b.offset, d, &lc.ln2_out[row],
                         &lc.ln2_mean[i], &lc.ln2_rstd[i]);
      const std::size_t frow = static_cast<std::size_t>(i) * f;
      linear_forward(p + L.w1.offset, p + L.b1.offset, &lc.ln2_out[row], f, d,
                     &lc.ff_pre[frow]);
      for (int t = 0; t < f; ++t) lc.ff_act[frow + t] = gelu(lc.ff_pre[frow + t]);
      linear_forward(p + L.w2.offset, p + L.b2.offset, &lc.ff_act[frow], d, f,
                     proj.data());
      if (use_dropout) {
        if (lc.ff_drop.empty()) lc.ff_drop.assign(x.size(), 0.0);
        const double keep_scale = 1.0 / (1.0 - cfg_.dropout);
        for (int j = 0; j < d; ++j) {
          lc.ff_drop[row + j] =
              dropout_rng->next_double() < cfg_.dropout ? 0.0 : keep_scale;
        }
      }
      for (int j = 0; j < d; ++j) {
        const double drop = lc.ff_drop.empty() ? 1.0 : lc.ff_drop[row + j];
        lc.out[row + j] = lc.x_attn[row + j] + proj[j] * drop;
      }
    }
    x = lc.out;
  }

  for (int i = 0; i < len; ++i) {
    const std::size_t row = static_cast<std::size_t>(i) * d;
    layer_norm_forward(&x[row], p + layout_.lnf_g.offset,
                       p + layout_.lnf_b.offset, d, &c.hidden[row],
                       &c.lnf_mean[i], &c.lnf_rstd[i]);
  }

  SeqOutputs out;
  out.len = len;
  out.vocab = cfg_.vocab_size;
  out.row_begin = row_begin;
  out.row_end = row_end;
  out.logits.assign(static_cast<std::size_t>(len) * cfg_.vocab_size, 0.0);
  out.values.assign(len, 0.0);
  project_rows(c, row_begin, row_end, out);
  return out;
}

void PolicyModel::project_rows(const SeqCache& cache, int row_begin,
                               int row_end, SeqOutputs& out) const {
  const int d = cfg_.d_model, v = cfg_.vocab_size;
  const double* p = params_.data();
  for (int i = row_begin; i < row_end; ++i) {
    const double* h = &cache.hidden[static_cast<std::size_t>(i) * d];
    linear_forward(p + layout_.w_out.offset, p + layout_.b_out.offset, h, v, d,
                   &out.logits[static_cast<std::size_t>(i) * v]);
    double val = p[layout_.b_val.offset];
    const double* wv = p + layout_.w_val.offset;
    for (int j = 0; j < d; ++j) val += wv[j] * h[j];
    out.values[i] = val;
  }
}

LastOutput PolicyModel::forward_last(std::span<const int> window) const {
  const int len = static_cast<int>(window.size());
  const auto out = forward_seq(window, len - 1, len);
  LastOutput last;
  const auto row = out.logits_row(len - 1);
  last.logits.assign(row.begin(), row.end());
  last.value = out.value_at(len - 1);
  return last;
}

double PolicyModel::log_prob(std::span<const int> window, int action) const {
  if (action < 0 || action >= cfg_.vocab_size) {
    throw std::invalid_argument("log_prob: action out of range");
  }
  const auto last = forward_last(window);
  return log_softmax_at(last.logits, action);
}

void PolicyModel::backward_seq(const SeqCache& cache, const SeqOutputs& out,
                               std::span<const double> dlogits,
                               std::span<const double> dvalues,
                               std::span<double> grad) const {
  const int len = cache.len;
  const int d = cfg_.d_model, f = cfg_.d_ff, v = cfg_.vocab_size;
  const int heads = cfg_.n_heads, dh = d / heads;
  const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));
  if (grad.size() != layout_.total) {
    throw std::invalid_argument("backward: grad size mismatch");
  }
  if (dlogits.size() != static_cast<std::size_t>(len) * v ||
      dvalues.size() != static_cast<std::size_t>(len)) {
    throw std::invalid_argument("backward: output grad size mismatch");
  }
  const double* p = params_.data();
  double* g = grad.data();

  // Output heads back to the final hidden states.
  std::vector<double> dh_final(static_cast<std::size_t>(len) * d, 0.0);
  for (int i = out.row_begin; i < out.row_end; ++i) {
    const std::size_t row = static_cast<std::size_t>(i) * d;
    const double* h = &cache.hidden[row];
    const double* dl = &dlogits[static_cast<std::size_t>(i) * v];
    linear_backward(p + layout_.w_out.offset, h, dl, v, d,
                    g + layout_.w_out.offset, g + layout_.b_out.offset,
                    &dh_final[row]);
    const double dv = dvalues[i];
    if (dv != 0.0) {
      const double* wv = p + layout_.w_val.offset;
      double* gwv = g + layout_.w_val.offset;
      for (int j = 0; j < d; ++j) {
        gwv[j] += dv * h[j];
        dh_final[row + j] += dv * wv[j];
      }
      g[layout_.b_val.offset] += dv;
    }
  }

  // Final layer norm.
  const std::vector<double>& final_in =
      cache.layers.empty() ? cache.hidden : cache.layers.back().out;
  std::vector<double> dx(static_cast<std::size_t>(len) * d, 0.0);
  for (int i = 0; i < len; ++i) {
    const std::size_t row = static_cast<std::size_t>(i) * d;
    layer_norm_backward(&dh_final[row], &final_in[row],
                        p + layout_.lnf_g.offset, cache.lnf_mean[i],
                        cache.lnf_rstd[i], d, &dx[row],
                        g + layout_.lnf_g.offset, g + layout_.lnf_b.offset);
  }

  std::vector<double> d_attn(static_cast<std::size_t>(len) * d);
  std::vector<double> d_mix(static_cast<std::size_t>(len) * d);
  std::vector<double> d_qkv(static_cast<std::size_t>(len) * d);
  std::vector<double> d_ln(static_cast<std::size_t>(len) * d);
  std::vector<double> scratch_f(f);
  std::vector<double> scratch_d(d);

  for (int li = cfg_.n_layers - 1; li >= 0; --li) {
    const auto& L = layout_.layers[li];
    const LayerCache& lc = cache.layers[li];

    // Feed-forward block; dx holds d(out), becomes d(x_attn).
    std::fill(d_ln.begin(), d_ln.end(), 0.0);
    for (int i = 0; i < len; ++i) {
      const std::size_t row = static_cast<std::size_t>(i) * d;
      const std::size_t frow = static_cast<std::size_t>(i) * f;
      for (int j = 0; j < d; ++j) {
        const double drop = lc.ff_drop.empty() ? 1.0 : lc.ff_drop[row + j];
        scratch_d[j] = dx[row + j] * drop;  // d(f2)
      }
      std::fill(scratch_f.begin(), scratch_f.end(), 0.0);
      linear_backward(p + L.w2.offset, &lc.ff_act[frow], scratch_d.data(), d,
                      f, g + L.w2.offset, g + L.b2.offset, scratch_f.data());
      for (int t = 0; t < f; ++t) {
        scratch_f[t] *= gelu_grad(lc.ff_pre[frow + t]);
      }
      linear_backward(p + L.w1.offset, &lc.ln2_out[row], scratch_f.data(), f,
                      d, g + L.w1.offset, g + L.b1.offset, nullptr);
      // d(ln2_out) via W1^T.
      for (int t = 0; t < f; ++t) {
        const double gt = scratch_f[t];
        const double* wr = p + L.w1.offset + static_cast<std::size_t>(t) * d;
        for (int j = 0; j < d; ++j) d_ln[row + j] += gt * wr[j];
      }
      layer_norm_backward(&d_ln[row], &lc.x_attn[row], p + L.ln2_g.offset,
                          lc.ln2_mean[i], lc.ln2_rstd[i], d, &dx[row],
                          g + L.ln2_g.offset, g + L.ln2_b.offset);
    }

    // Attention block; dx holds d(x_attn), becomes d(layer in).
    std::fill(d_mix.begin(), d_mix.end(), 0.0);
    for (int i = 0; i < len; ++i) {
      const std::size_t row = static_cast<std::size_t>(i) * d;
      for (int j = 0; j < d; ++j) {
        const double drop = lc.att_drop.empty() ? 1.0 : lc.att_drop[row + j];
        scratch_d[j] = dx[row + j] * drop;  // d(o)
      }
      linear_backward(p + L.wo.offset, &lc.att_mix[row], scratch_d.data(), d,
                      d, g + L.wo.offset, g + L.bo.offset, &d_mix[row]);
    }

    std::fill(d_qkv.begin(), d_qkv.end(), 0.0);  // dq
    std::vector<double> dk(static_cast<std::size_t>(len) * d, 0.0);
    std::vector<double> dv(static_cast<std::size_t>(len) * d, 0.0);
    std::vector<double> dp(len), ds(len);
    for (int h = 0; h < heads; ++h) {
      const int hoff = h * dh;
      for (int i = 0; i < len; ++i) {
        const double* att_row =
            &lc.att[(static_cast<std::size_t>(h) * len + i) * len];
        const double* dmix = &d_mix[static_cast<std::size_t>(i) * d + hoff];
        double dot = 0.0;
        for (int j = 0; j <= i; ++j) {
          const double* vj = &lc.v[static_cast<std::size_t>(j) * d + hoff];
          double acc = 0.0;
          for (int t = 0; t < dh; ++t) acc += dmix[t] * vj[t];
          dp[j] = acc;
          dot += att_row[j] * acc;
          double* dvj = &dv[static_cast<std::size_t>(j) * d + hoff];
          for (int t = 0; t < dh; ++t) dvj[t] += att_row[j] * dmix[t];
        }
        for (int j = 0; j <= i; ++j) {
          ds[j] = att_row[j] * (dp[j] - dot);
        }
        double* dqi = &d_qkv[static_cast<std::size_t>(i) * d + hoff];
        const double* qi = &lc.q[static_cast<std::size_t>(i) * d + hoff];
        for (int j = 0; j <= i; ++j) {
          const double s = ds[j] * inv_sqrt_dh;
          const double* kj = &lc.k[static_cast<std::size_t>(j) * d + hoff];
          double* dkj = &dk[static_cast<std::size_t>(j) * d + hoff];
          for (int t = 0; t < dh; ++t) {
            dqi[t] += s * kj[t];
            dkj[t] += s * qi[t];
          }
        }
      }
    }

    // Project q/k/v gradients back through their linear maps into d(ln1_out).
    std::fill(d_ln.begin(), d_ln.end(), 0.0);
    for (int i = 0; i < len; ++i) {
      const std::size_t row = static_cast<std::size_t>(i) * d;
      linear_backward(p + L.wq.offset, &lc.ln1_out[row], &d_qkv[row], d, d,
                      g + L.wq.offset, g + L.bq.offset, &d_ln[row]);
      linear_backward(p + L.wk.offset, &lc.ln1_out[row], &dk[row], d, d,
                      g + L.wk.offset, g + L.bk.offset, &d_ln[row]);
      linear_backward(p + L.wv.offset, &lc.ln1_out[row], &dv[row], d, d,
                      g + L.wv.offset, g + L.bv.offset, &d_ln[row]);
      layer_norm_backward(&d_ln[row], &lc.in[row], p + L.ln1_g.offset,
                          lc.ln1_mean[i], lc.ln1_rstd[i], d, &dx[row],
                          g + L.ln1_g.offset, g + L.ln1_b.offset);
    }
  }

  for (int i = 0; i < len; ++i) {
    const std::size_t row = static_cast<std::size_t>(i) * d;
    double* gte = g + layout_.tok_emb.offset +
                  static_cast<std::size_t>(cache.window[i]) * d;
    double* gpe = g + layout_.pos_emb.offset + static_cast<std::size_t>(i) * d;
    for (int j = 0; j < d; ++j) {
      gte[j] += dx[row + j];
      gpe[j] += dx[row + j];
    }
  }
}

double loss_and_gradient(const PolicyModel& m,
                         std::span<const GradWindow> windows,
                         const WindowLossFn& fn, std::span<double> grad,
                         Rng* dropout_rng) {
  if (grad.size() != m.param_count()) {
    throw std::invalid_argument("loss_and_gradient: grad size mismatch");
  }
  double total = 0.0;
  const int v = m.config().vocab_size;
  for (std::size_t idx = 0; idx < windows.size(); ++idx) {
    const auto& w = windows[idx];
    SeqCache cache;
    const auto out = m.forward_seq(w.tokens, w.row_begin, w.row_end, &cache,
                                   dropout_rng);
    OutputGrads og;
    og.dlogits.assign(static_cast<std::size_t>(out.len) * v, 0.0);
    og.dvalues.assign(out.len, 0.0);
    const double loss = fn(idx, out, og);
    if (!std::isfinite(loss)) {
      std::ostringstream msg;
      msg << "loss_and_gradient: non-finite loss " << loss << " on window "
          << idx << " (len " << out.len << ")";
      throw std::runtime_error(msg.str());
    }
    total += loss;
    m.backward_seq(cache, out, og.dlogits, og.dvalues, grad);
  }
  for (double gv : grad) {
    if (!std::isfinite(gv)) {
      throw std::runtime_error("loss_and_gradient: non-finite gradient");
    }
  }
  return total;
}

std::vector<double> log_softmax(std::span<const double> logits) {
  return masked_log_softmax(logits, {});
}

double log_softmax_at(std::span<const double> logits, int index) {
  if (index < 0 || index >= static_cast<int>(logits.size())) {
    throw std::out_of_range("log_softmax_at: bad index");
  }
  double maxv = kNegInf;
  for (double z : logits) maxv = std::max(maxv, z);
  double sum = 0.0;
  for (double z : logits) sum += std::exp(z - maxv);
  return logits[index] - maxv - std::log(sum);
}

std::vector<double> masked_log_softmax(std::span<const double> logits,
                                       std::span<const std::uint8_t> keep) {
  if (!keep.empty() && keep.size() != logits.size()) {
    throw std::invalid_argument("masked_log_softmax: mask size mismatch");
  }
  double maxv = kNegInf;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    if (!keep.empty() && !keep[i]) continue;
    maxv = std::max(maxv, logits[i]);
  }
  if (maxv == kNegInf) {
    throw std::invalid_argument("masked_log_softmax: nothing kept");
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    if (!keep.empty() && !keep[i]) continue;
    sum += std::exp(logits[i] - maxv);
  }
  const double lse = maxv + std::log(sum);
  std::vector<double> out(logits.size(), kNegInf);
  for (std::size_t i = 0; i < logits.size(); ++i) {
    if (!keep.empty() && !keep[i]) continue;
    out[i] = logits[i] - lse;
  }
  return out;
}

double entropy_from_log_softmax(std::span<const double> lsm) {
  double h = 0.0;
  for (double l : lsm) {
    if (l == kNegInf) continue;
    h -= std::exp(l) * l;
  }
  return h;
}

double kl_from_log_softmax(std::span<const double> lsm_p,
                           std::span<const double> lsm_q) {
  if (lsm_p.size() != lsm_q.size()) {
    throw std::invalid_argument("kl_from_log_softmax: size mismatch");
  }
  double kl = 0.0;
  for (std::size_t i = 0; i < lsm_p.size(); ++i) {
    if (lsm_p[i] == kNegInf) continue;
    kl += std::exp(lsm_p[i]) * (lsm_p[i] - lsm_q[i]);
  }
  return kl;
}

std::vector<std::uint8_t> top_p_mask(std::span<const double> probs, double p) {
  if (p <= 0.0 || p > 1.0) {
    throw std::invalid_argument("top_p_mask: p must be in (0, 1]");
  }
  double sum = 0.0;
  for (double q : probs) {
    if (q < 0.0 || !std::isfinite(q)) {
      throw std::invalid_argument("top_p_mask: bad probability");
    }
    sum += q;
  }
  if (std::abs(sum - 1.0) > 1e-9) {
    throw std::invalid_argument("top_p_mask: probabilities must sum to 1");
  }
  std::vector<int> order(probs.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    if (probs[a] != probs[b]) return probs[a] > probs[b];
    return a < b;
  });
  std::vector<std::uint8_t> keep(probs.size(), 0);
  double cum = 0.0;
  for (int idx : order) {
    keep[idx] = 1;
    cum += probs[idx];
    if (cum >= p) break;
  }
  return keep;
}

SampleOutcome sample_from_logits(std::span<const double> logits,
                                 const DecodeConfig& dc, int generated_len,
                                 std::span<const std::uint8_t> keep_mask,
                                 int eos_id, Rng& rng) {
  const int v = static_cast<int>(logits.size());
  if (dc.temperature <= 0.0) {
    throw std::invalid_argument("sample: temperature must be > 0");
  }
  std::vector<double> scaled(logits.begin(), logits.end());
  if (dc.temperature != 1.0) {
    for (double& z : scaled) z /= dc.temperature;
  }

  std::vector<std::uint8_t> keep(v, 1);
  if (!keep_mask.empty()) {
    if (static_cast<int>(keep_mask.size()) != v) {
      throw std::invalid_argument("sample: mask size mismatch");
    }
    keep.assign(keep_mask.begin(), keep_mask.end());
  }

  if (dc.top_k > 0 && dc.top_k < v) {
    std::vector<int> order;
    order.reserve(v);
    for (int i = 0; i < v; ++i) {
      if (keep[i]) order.push_back(i);
    }
    std::sort(order.begin(), order.end(), [&](int a, int b) {
      if (scaled[a] != scaled[b]) return scaled[a] > scaled[b];
      return a < b;
    });
    for (std::size_t r = dc.top_k; r < order.size(); ++r) keep[order[r]] = 0;
  }

  if (dc.top_p > 0.0 && dc.top_p < 1.0) {
    const auto lsm = masked_log_softmax(scaled, keep);
    std::vector<double> probs(v, 0.0);
    for (int i = 0; i < v; ++i) {
      if (lsm[i] != kNegInf) probs[i] = std::exp(lsm[i]);
    }
    const auto nucleus = top_p_mask(probs, dc.top_p);
    for (int i = 0; i < v; ++i) keep[i] = keep[i] && nucleus[i];
  }

  if (generated_len < dc.min_length && eos_id >= 0 && eos_id < v) {
    keep[eos_id] = 0;
  }

  bool any = false;
  for (auto k : keep) any = any || k;
  if (!any) throw std::runtime_error("sample: all tokens masked");

  const auto lsm = masked_log_softmax(scaled, keep);
  SampleOutcome out;
  if (dc.mode == DecodeConfig::Mode::Greedy) {
    int best = -1;
    double best_z = kNegInf;
    for (int i = 0; i < v; ++i) {
      if (!keep[i]) continue;
      if (best < 0 || scaled[i] > best_z) {
        best = i;
        best_z = scaled[i];
      }
    }
    out.action = best;
  } else {
    std::vector<double> weights(v, 0.0);
    for (int i = 0; i < v; ++i) {
      if (lsm[i] != kNegInf) weights[i] = std::exp(lsm[i]);
    }
    out.action = rng.categorical(weights);
  }
  out.log_prob = lsm[out.action];
  return out;
}

SampleOutcome sample_action(const PolicyModel& m, std::span<const int> window,
                            const DecodeConfig& dc, int generated_len,
                            std::span<const std::uint8_t> keep_mask,
                            int eos_id, Rng& rng) {
  const auto last = m.forward_last(window);
  return sample_from_logits(last.logits, dc, generated_len, keep_mask, eos_id,
                            rng);
}

void adam_step(std::span<double> params, std::span<const double> grad,
               AdamState& state, const AdamConfig& cfg) {
  if (params.size() != grad.size() || state.m.size() != params.size() ||
      state.v.size() != params.size()) {
    throw std::invalid_argument("adam_step: size mismatch");
  }
  ++state.step;
  const double bc1 = 1.0 - std::pow(cfg.beta1, state.step);
  const double bc2 = 1.0 - std::pow(cfg.beta2, state.step);
  for (std::size_t i = 0; i < params.size(); ++i) {
    state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * grad[i];
    state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * grad[i] * grad[i];
    const double mhat = state.m[i] / bc1;
    const double vhat = state.v[i] / bc2;
    params[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
  }
}

double clip_grad_norm(std::span<double> grad, double max_norm) {
  double sq = 0.0;
  for (double g : grad) sq += g * g;
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double scale = max_norm / norm;
    for (double& g : grad) g *= scale;
  }
  return norm;
}

}  // namespace tokenrl
