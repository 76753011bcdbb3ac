#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tokenrl/checkpoint.hpp"
#include "tokenrl/config.hpp"
#include "tokenrl/metrics.hpp"
#include "tokenrl/reward.hpp"

namespace tokenrl {

struct TrainOptions {
  int stop_after_update = -1;  // stop early, leaving a resumable checkpoint
  bool resume = true;          // pick up from the latest checkpoint if present
  bool overwrite = false;      // clear an existing run directory first
};

struct RunResult {
  std::string run_dir;
  bool aborted = false;
  int final_update = 0;
  MetricReport final_val;
};

// Runs one training job end to end: dataset construction, reward classifier,
// base pretraining, optional warm start, the on-policy loop with shaped
// rewards and the adaptive penalty controller, periodic evaluation, CSV
// logging, and checkpoints named step-<n>.ckpt.
RunResult run_training(const TrainConfig& cfg, const std::string& run_dir,
                       const TrainOptions& opts = {});

struct EvalInputs {
  const PolicyModel* model = nullptr;
  const PolicyModel* ref = nullptr;
  TaskKind task = TaskKind::SentimentContinuation;
  int eos_id = 2;
  const ClassifierReward* scorer = nullptr;  // sentiment only
  DecodeConfig decode;
  TaskRewardConfig reward_cfg;
  int msttr_segment = 25;
};

// Samples one continuation per prompt with the exploration decode settings
// and reports the task metric plus naturalness/diversity statistics.
MetricReport evaluate_split(const EvalInputs& in,
                            const std::vector<Example>& split, Rng rng);

// Decodes up to max_new_tokens actions (stops after EOS). The window is
// left-truncated if it would exceed the model context.
std::vector<int> generate_continuation(const PolicyModel& m,
                                       std::span<const int> prompt,
                                       const DecodeConfig& dc, int eos_id,
                                       Rng& rng);

struct GridSpec {
  std::string axis;  // target_kl | gamma | top_p | mu | data_fraction
  std::vector<std::string> values;
  std::vector<std::uint64_t> seeds;
  int jobs = 1;
};

// |values| x |seeds| independent runs; per-value mean +- std lands in
// <out_dir>/ablation.csv. Failed cells are recorded and the grid continues.
void run_ablation_grid(const TrainConfig& base, const GridSpec& grid,
                       const std::string& out_dir, bool overwrite);

// Learning-curve CSV column order (fixed; documented in the README).
const std::vector<std::string>& curve_columns();

// Shortest lossless decimal form of a double (CSV cells, reports).
std::string format_double(double v);

}  // namespace tokenrl
