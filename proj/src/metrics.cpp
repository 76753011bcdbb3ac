#include "tokenrl/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <map>
#include <set>
#include <stdexcept>

#include "tokenrl/model.hpp"

namespace tokenrl {

namespace {

using Ngram = std::vector<int>;

std::map<Ngram, long> ngram_counts(std::span<const int> seq, int n) {
  std::map<Ngram, long> counts;
  if (n <= 0) throw std::invalid_argument("n-gram order must be >= 1");
  if (static_cast<int>(seq.size()) < n) return counts;
  for (std::size_t i = 0; i + n <= seq.size(); ++i) {
    ++counts[Ngram(seq.begin() + i, seq.begin() + i + n)];
  }
  return counts;
}

std::map<Ngram, long> pooled_ngram_counts(const std::vector<TokenSeq>& corpus,
                                          int n) {
  std::map<Ngram, long> pooled;
  for (const auto& seq : corpus) {
    for (const auto& [g, c] : ngram_counts(seq, n)) pooled[g] += c;
  }
  return pooled;
}

double f1_of(double p, double r) {
  return (p + r) > 0.0 ? 2.0 * p * r / (p + r) : 0.0;
}

}  // namespace

double bleu(std::span<const int> candidate,
            const std::vector<TokenSeq>& references, int max_n,
            bool add_one_smoothing, bool* empty_candidate) {
  if (max_n < 1 || max_n > 4) {
    throw std::invalid_argument("bleu: max_n must be in 1..4");
  }
  if (references.empty()) {
    throw std::invalid_argument("bleu: at least one reference required");
  }
  for (const auto& r : references) {
    if (r.empty()) throw std::invalid_argument("bleu: empty reference");
  }
  if (empty_candidate) *empty_candidate = candidate.empty();
  if (candidate.empty()) return 0.0;

  const long c = static_cast<long>(candidate.size());
  // Effective reference length: closest to the candidate, ties to shorter.
  long r_len = static_cast<long>(references[0].size());
  for (const auto& ref : references) {
    const long len = static_cast<long>(ref.size());
    const long d_new = std::labs(len - c), d_old = std::labs(r_len - c);
    if (d_new < d_old || (d_new == d_old && len < r_len)) r_len = len;
  }

  double log_prec_sum = 0.0;
  for (int n = 1; n <= max_n; ++n) {
    const auto cand_counts = ngram_counts(candidate, n);
    long total = 0, clipped = 0;
    for (const auto& [g, cnt] : cand_counts) {
      total += cnt;
      long max_ref = 0;
      for (const auto& ref : references) {
        const auto ref_counts = ngram_counts(ref, n);
        auto it = ref_counts.find(g);
        if (it != ref_counts.end()) max_ref = std::max(max_ref, it->second);
      }
      clipped += std::min(cnt, max_ref);
    }
    double num = static_cast<double>(clipped);
    double den = static_cast<double>(total);
    if (add_one_smoothing) {
      num += 1.0;
      den += 1.0;
    }
    if (num <= 0.0 || den <= 0.0) return 0.0;
    log_prec_sum += std::log(num / den);
  }

  const double bp =
      c > r_len ? 1.0
                : std::exp(1.0 - static_cast<double>(r_len) /
                                     static_cast<double>(c));
  return bp * std::exp(log_prec_sum / max_n);
}

PrecisionRecallF1 rouge_n(std::span<const int> candidate,
                          std::span<const int> reference, int n) {
  if (candidate.empty() || reference.empty()) {
    throw std::invalid_argument("rouge_n: empty input");
  }
  const auto cand = ngram_counts(candidate, n);
  const auto ref = ngram_counts(reference, n);
  long overlap = 0, cand_total = 0, ref_total = 0;
  for (const auto& [g, c] : cand) {
    cand_total += c;
    auto it = ref.find(g);
    if (it != ref.end()) overlap += std::min(c, it->second);
  }
  for (const auto& [g, c] : ref) ref_total += c;

  PrecisionRecallF1 out;
  if (cand_total == 0 || ref_total == 0) return out;  // n exceeds both
  out.precision = static_cast<double>(overlap) / cand_total;
  out.recall = static_cast<double>(overlap) / ref_total;
  out.f1 = f1_of(out.precision, out.recall);
  return out;
}

PrecisionRecallF1 rouge_l(std::span<const int> candidate,
                          std::span<const int> reference) {
  if (candidate.empty() || reference.empty()) {
    throw std::invalid_argument("rouge_l: empty input");
  }
  const std::size_t m = candidate.size(), k = reference.size();
  std::vector<long> prev(k + 1, 0), cur(k + 1, 0);
  for (std::size_t i = 1; i <= m; ++i) {
    for (std::size_t j = 1; j <= k; ++j) {
      cur[j] = candidate[i - 1] == reference[j - 1]
                   ? prev[j - 1] + 1
                   : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  const double lcs = static_cast<double>(prev[k]);
  PrecisionRecallF1 out;
  out.precision = lcs / static_cast<double>(m);
  out.recall = lcs / static_cast<double>(k);
  out.f1 = f1_of(out.precision, out.recall);
  return out;
}

double distinct_n(const std::vector<TokenSeq>& corpus, int n) {
  if (corpus.empty()) throw std::invalid_argument("distinct_n: empty corpus");
  const auto pooled = pooled_ngram_counts(corpus, n);
  long total = 0;
  for (const auto& [g, c] : pooled) total += c;
  if (total == 0) return 0.0;
  return static_cast<double>(pooled.size()) / static_cast<double>(total);
}

long unique_n(const std::vector<TokenSeq>& corpus, int n) {
  if (corpus.empty()) throw std::invalid_argument("unique_n: empty corpus");
  long once = 0;
  for (const auto& [g, c] : pooled_ngram_counts(corpus, n)) {
    if (c == 1) ++once;
  }
  return once;
}

double ngram_entropy(const std::vector<TokenSeq>& corpus, int n) {
  const auto pooled = pooled_ngram_counts(corpus, n);
  long total = 0;
  for (const auto& [g, c] : pooled) total += c;
  if (total == 0) {
    throw std::invalid_argument("ngram_entropy: corpus has no n-grams");
  }
  double h = 0.0;
  for (const auto& [g, c] : pooled) {
    const double p = static_cast<double>(c) / static_cast<double>(total);
    h -= p * std::log2(p);
  }
  return h;
}

double msttr(const std::vector<TokenSeq>& corpus, int segment_len) {
  if (segment_len < 1) throw std::invalid_argument("msttr: bad segment_len");
  std::vector<int> stream;
  for (const auto& seq : corpus) {
    stream.insert(stream.end(), seq.begin(), seq.end());
  }
  const int segments = static_cast<int>(stream.size()) / segment_len;
  if (segments == 0) {
    throw std::invalid_argument("msttr: stream shorter than one segment");
  }
  double sum = 0.0;
  for (int s = 0; s < segments; ++s) {
    std::set<int> types(stream.begin() + s * segment_len,
                        stream.begin() + (s + 1) * segment_len);
    sum += static_cast<double>(types.size()) / segment_len;
  }
  return sum / segments;
}

double coverage(std::span<const int> concepts,
                std::span<const int> candidate) {
  if (concepts.empty()) throw std::invalid_argument("coverage: no concepts");
  const std::set<int> present(candidate.begin(), candidate.end());
  const std::set<int> wanted(concepts.begin(), concepts.end());
  int hit = 0;
  for (int c : wanted) {
    if (present.count(c)) ++hit;
  }
  return static_cast<double>(hit) / static_cast<double>(wanted.size());
}

double perplexity_from_log_probs(std::span<const double> token_log_probs) {
  if (token_log_probs.empty()) {
    throw std::invalid_argument("perplexity: no scored tokens");
  }
  double nll = 0.0;
  for (double lp : token_log_probs) nll -= lp;
  return std::exp(nll / static_cast<double>(token_log_probs.size()));
}

double perplexity(const PolicyModel& lm, const std::vector<TokenSeq>& corpus) {
  std::vector<double> lps;
  for (const auto& seq : corpus) {
    if (seq.size() < 2) continue;
    const auto out = lm.forward_seq(seq);
    for (std::size_t i = 1; i < seq.size(); ++i) {
      lps.push_back(log_softmax_at(out.logits_row(i - 1), seq[i]));
    }
  }
  return perplexity_from_log_probs(lps);
}

double conditional_perplexity(
    const PolicyModel& lm,
    const std::vector<std::pair<TokenSeq, TokenSeq>>& prompt_continuations) {
  std::vector<double> lps;
  for (const auto& [prompt, cont] : prompt_continuations) {
    if (prompt.empty() || cont.empty()) continue;
    TokenSeq seq = prompt;
    seq.insert(seq.end(), cont.begin(), cont.end());
    const auto out = lm.forward_seq(seq);
    for (std::size_t i = prompt.size(); i < seq.size(); ++i) {
      lps.push_back(log_softmax_at(out.logits_row(i - 1), seq[i]));
    }
  }
  return perplexity_from_log_probs(lps);
}

}  // namespace tokenrl
