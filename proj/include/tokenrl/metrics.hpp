#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

namespace tokenrl {

class PolicyModel;

using TokenSeq = std::vector<int>;

struct MetricReport {
  std::map<std::string, double> values;
  int population = 0;
};

struct PrecisionRecallF1 {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

// Clipped n-gram precision geometric mean with brevity penalty. Unsmoothed by
// default: any zero precision gives 0. An empty candidate scores 0 and sets
// *empty_candidate if provided.
double bleu(std::span<const int> candidate,
            const std::vector<TokenSeq>& references, int max_n,
            bool add_one_smoothing = false, bool* empty_candidate = nullptr);

PrecisionRecallF1 rouge_n(std::span<const int> candidate,
                          std::span<const int> reference, int n);
PrecisionRecallF1 rouge_l(std::span<const int> candidate,
                          std::span<const int> reference);

// N-gram diversity over a corpus. N-grams are taken within each sequence;
// sequences shorter than n contribute none.
double distinct_n(const std::vector<TokenSeq>& corpus, int n);
long unique_n(const std::vector<TokenSeq>& corpus, int n);

// Shannon entropy (bits) of the empirical n-gram distribution.
double ngram_entropy(const std::vector<TokenSeq>& corpus, int n);

// Mean type/token ratio over non-overlapping segments of the concatenated
// token stream; the trailing partial segment is discarded.
double msttr(const std::vector<TokenSeq>& corpus, int segment_len);

// Fraction of concept tokens that appear in the candidate.
double coverage(std::span<const int> concepts, std::span<const int> candidate);

// exp(mean negative log-likelihood) from per-token log-probabilities.
double perplexity_from_log_probs(std::span<const double> token_log_probs);

// Teacher-forced perplexity of a corpus under a model: every token from
// position 1 on is scored given its preceding tokens.
double perplexity(const PolicyModel& lm, const std::vector<TokenSeq>& corpus);

// Perplexity of continuations given their prompts; only continuation tokens
// are scored.
double conditional_perplexity(
    const PolicyModel& lm,
    const std::vector<std::pair<TokenSeq, TokenSeq>>& prompt_continuations);

}  // namespace tokenrl
