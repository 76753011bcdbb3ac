#pragma once

#include <string>
#include <utility>
#include <vector>

namespace tokenrl {

// Mean and +-1 std band across runs, indexed by update.
struct CurveSeries {
  std::vector<double> x;
  std::vector<double> mean;
  std::vector<double> sd;
};

// (update, value) points from one learning-curve CSV column; blank cells are
// skipped.
std::vector<std::pair<double, double>> read_curve_column(
    const std::string& csv_path, const std::string& column);

// Aligns runs on updates present in every run.
CurveSeries aggregate_runs(
    const std::vector<std::vector<std::pair<double, double>>>& runs);

void write_line_chart_svg(const std::string& path, const std::string& title,
                          const std::string& x_label,
                          const std::string& y_label, const CurveSeries& s);

// Finds learning_curve.csv under each run dir (directly or in seed-*
// subdirectories) and writes reward.svg, task_metric.svg, perplexity.svg.
// Returns the number of charts written.
int write_learning_curve_plots(const std::vector<std::string>& run_dirs,
                               const std::string& out_dir, bool overwrite);

}  // namespace tokenrl
