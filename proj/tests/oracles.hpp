// Independent brute-force reference implementations used only by tests.
// These deliberately share no code with the library: n-grams are string
// keyed, LCS keeps the full table, GAE is a literal double sum.
#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "tokenrl/rng.hpp"

namespace oracle {

using Seq = std::vector<int>;

inline std::map<std::string, int> ngrams_as_strings(const Seq& seq, int n) {
  std::map<std::string, int> counts;
  for (int i = 0; i + n <= static_cast<int>(seq.size()); ++i) {
    std::string key;
    for (int j = 0; j < n; ++j) {
      key += std::to_string(seq[i + j]);
      key += '_';
    }
    ++counts[key];
  }
  return counts;
}

inline double bleu(const Seq& cand, const std::vector<Seq>& refs, int max_n,
                   bool add_one) {
  if (cand.empty()) return 0.0;
  double log_sum = 0.0;
  for (int n = 1; n <= max_n; ++n) {
    const auto cgrams = ngrams_as_strings(cand, n);
    int total = 0;
    double clipped = 0;
    for (const auto& [g, c] : cgrams) {
      total += c;
      int best = 0;
      for (const auto& ref : refs) {
        const auto rgrams = ngrams_as_strings(ref, n);
        auto it = rgrams.find(g);
        if (it != rgrams.end()) best = std::max(best, it->second);
      }
      clipped += std::min(c, best);
    }
    double num = clipped, den = total;
    if (add_one) {
      num += 1;
      den += 1;
    }
    if (num <= 0 || den <= 0) return 0.0;
    log_sum += std::log(num / den) / max_n;
  }
  // Effective reference length: closest, ties toward the shorter one.
  int r = static_cast<int>(refs[0].size());
  const int c = static_cast<int>(cand.size());
  for (const auto& ref : refs) {
    const int len = static_cast<int>(ref.size());
    if (std::abs(len - c) < std::abs(r - c) ||
        (std::abs(len - c) == std::abs(r - c) && len < r)) {
      r = len;
    }
  }
  const double bp = c > r ? 1.0 : std::exp(1.0 - static_cast<double>(r) / c);
  return bp * std::exp(log_sum);
}

struct Prf {
  double p = 0, r = 0, f1 = 0;
};

inline Prf prf(double overlap, double cand_total, double ref_total) {
  Prf out;
  if (cand_total > 0) out.p = overlap / cand_total;
  if (ref_total > 0) out.r = overlap / ref_total;
  if (out.p + out.r > 0) out.f1 = 2 * out.p * out.r / (out.p + out.r);
  return out;
}

inline Prf rouge_n(const Seq& cand, const Seq& ref, int n) {
  const auto cg = ngrams_as_strings(cand, n);
  const auto rg = ngrams_as_strings(ref, n);
  double overlap = 0, ct = 0, rt = 0;
  for (const auto& [g, c] : cg) {
    ct += c;
    auto it = rg.find(g);
    if (it != rg.end()) overlap += std::min(c, it->second);
  }
  for (const auto& [g, c] : rg) rt += c;
  return prf(overlap, ct, rt);
}

inline Prf rouge_l(const Seq& cand, const Seq& ref) {
  const int m = static_cast<int>(cand.size());
  const int k = static_cast<int>(ref.size());
  std::vector<std::vector<int>> dp(m + 1, std::vector<int>(k + 1, 0));
  for (int i = 1; i <= m; ++i) {
    for (int j = 1; j <= k; ++j) {
      dp[i][j] = cand[i - 1] == ref[j - 1]
                     ? dp[i - 1][j - 1] + 1
                     : std::max(dp[i - 1][j], dp[i][j - 1]);
    }
  }
  return prf(dp[m][k], m, k);
}

inline std::map<std::string, int> pooled(const std::vector<Seq>& corpus,
                                         int n) {
  std::map<std::string, int> all;
  for (const auto& s : corpus) {
    for (const auto& [g, c] : ngrams_as_strings(s, n)) all[g] += c;
  }
  return all;
}

inline double distinct_n(const std::vector<Seq>& corpus, int n) {
  const auto all = pooled(corpus, n);
  double total = 0;
  for (const auto& [g, c] : all) total += c;
  return total > 0 ? static_cast<double>(all.size()) / total : 0.0;
}

inline long unique_n(const std::vector<Seq>& corpus, int n) {
  long once = 0;
  for (const auto& [g, c] : pooled(corpus, n)) {
    if (c == 1) ++once;
  }
  return once;
}

inline double entropy_bits(const std::vector<Seq>& corpus, int n) {
  const auto all = pooled(corpus, n);
  double total = 0;
  for (const auto& [g, c] : all) total += c;
  double h = 0;
  for (const auto& [g, c] : all) {
    const double p = c / total;
    h -= p * std::log(p) / std::log(2.0);
  }
  return h;
}

inline double msttr(const std::vector<Seq>& corpus, int seg) {
  Seq stream;
  for (const auto& s : corpus) stream.insert(stream.end(), s.begin(), s.end());
  double sum = 0;
  int count = 0;
  for (int start = 0; start + seg <= static_cast<int>(stream.size());
       start += seg) {
    std::set<int> types(stream.begin() + start, stream.begin() + start + seg);
    sum += static_cast<double>(types.size()) / seg;
    ++count;
  }
  return sum / count;
}

inline double coverage(const Seq& concepts, const Seq& cand) {
  std::set<int> wanted(concepts.begin(), concepts.end());
  std::set<int> have(cand.begin(), cand.end());
  int hit = 0;
  for (int c : wanted) {
    if (have.count(c)) ++hit;
  }
  return static_cast<double>(hit) / wanted.size();
}

// GAE as the literal exponentially weighted double sum over TD residuals.
inline std::vector<double> gae_double_sum(const std::vector<double>& rewards,
                                          const std::vector<double>& values,
                                          double gamma, double lam) {
  const int n = static_cast<int>(rewards.size());
  std::vector<double> delta(n);
  for (int t = 0; t < n; ++t) {
    const double next_v = t + 1 < n ? values[t + 1] : 0.0;
    delta[t] = rewards[t] + gamma * next_v - values[t];
  }
  std::vector<double> adv(n, 0.0);
  for (int t = 0; t < n; ++t) {
    double weight = 1.0;
    for (int l = 0; t + l < n; ++l) {
      adv[t] += weight * delta[t + l];
      weight *= gamma * lam;
    }
  }
  return adv;
}

inline std::vector<double> discounted_returns(const std::vector<double>& r,
                                              double gamma) {
  std::vector<double> out(r.size(), 0.0);
  for (int t = static_cast<int>(r.size()) - 1; t >= 0; --t) {
    out[t] = r[t] + (t + 1 < static_cast<int>(r.size()) ? gamma * out[t + 1]
                                                        : 0.0);
  }
  return out;
}

inline std::vector<double> naive_softmax(const std::vector<double>& z) {
  double m = z[0];
  for (double v : z) m = std::max(m, v);
  std::vector<double> p(z.size());
  double sum = 0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    p[i] = std::exp(z[i] - m);
    sum += p[i];
  }
  for (double& v : p) v /= sum;
  return p;
}

// Central finite differences of a scalar loss over selected coordinates.
// Returns the max relative error against the supplied analytic gradient.
inline double max_relative_fd_error(
    std::vector<double>& params, const std::function<double()>& loss,
    const std::vector<double>& analytic_grad,
    const std::vector<std::size_t>& coords, double step = 1e-5) {
  double worst = 0.0;
  for (std::size_t c : coords) {
    const double saved = params[c];
    params[c] = saved + step;
    const double up = loss();
    params[c] = saved - step;
    const double down = loss();
    params[c] = saved;
    const double fd = (up - down) / (2.0 * step);
    const double denom = std::max({std::abs(fd), std::abs(analytic_grad[c]),
                                   1e-8});
    worst = std::max(worst, std::abs(fd - analytic_grad[c]) / denom);
  }
  return worst;
}

inline Seq random_seq(tokenrl::Rng& rng, int min_len, int max_len,
                      int alphabet) {
  const int len = min_len + static_cast<int>(rng.next_below(
                                max_len - min_len + 1));
  Seq s(len);
  for (auto& t : s) t = static_cast<int>(rng.next_below(alphabet));
  return s;
}

}  // namespace oracle
