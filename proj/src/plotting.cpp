#include "tokenrl/plotting.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

#include "tokenrl/harness.hpp"

namespace tokenrl {

namespace fs = std::filesystem;

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.push_back("");
  return cells;
}

struct Tick {
  double value;
  std::string label;
};

std::vector<Tick> make_ticks(double lo, double hi, int count) {
  std::vector<Tick> ticks;
  if (!(hi > lo)) hi = lo + 1.0;
  for (int i = 0; i <= count; ++i) {
    const double v = lo + (hi - lo) * i / count;
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.4g", v);
    ticks.push_back({v, buf});
  }
  return ticks;
}

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace

std::vector<std::pair<double, double>> read_curve_column(
    const std::string& csv_path, const std::string& column) {
  std::ifstream is(csv_path);
  if (!is) throw std::runtime_error("cannot open CSV: " + csv_path);
  std::string line;
  if (!std::getline(is, line)) {
    throw std::runtime_error("empty CSV: " + csv_path);
  }
  const auto header = split_csv_line(line);
  int col = -1, update_col = -1;
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == column) col = static_cast<int>(i);
    if (header[i] == "update") update_col = static_cast<int>(i);
  }
  if (col < 0 || update_col < 0) {
    throw std::runtime_error("CSV " + csv_path + " has no column \"" + column +
                             "\"");
  }
  std::vector<std::pair<double, double>> points;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto cells = split_csv_line(line);
    if (static_cast<int>(cells.size()) <= std::max(col, update_col)) continue;
    if (cells[col].empty()) continue;
    points.emplace_back(std::stod(cells[update_col]), std::stod(cells[col]));
  }
  return points;
}

CurveSeries aggregate_runs(
    const std::vector<std::vector<std::pair<double, double>>>& runs) {
  if (runs.empty()) throw std::invalid_argument("aggregate_runs: no runs");
  std::map<double, int> presence;
  for (const auto& run : runs) {
    std::set<double> xs;
    for (const auto& [x, y] : run) xs.insert(x);
    for (double x : xs) ++presence[x];
  }
  CurveSeries s;
  for (const auto& [x, n] : presence) {
    if (n != static_cast<int>(runs.size())) continue;
    double mean = 0.0;
    std::vector<double> ys;
    for (const auto& run : runs) {
      for (const auto& [rx, ry] : run) {
        if (rx == x) {
          ys.push_back(ry);
          break;
        }
      }
    }
    for (double y : ys) mean += y;
    mean /= static_cast<double>(ys.size());
    double var = 0.0;
    for (double y : ys) var += (y - mean) * (y - mean);
    var /= static_cast<double>(ys.size());
    s.x.push_back(x);
    s.mean.push_back(mean);
    s.sd.push_back(std::sqrt(var));
  }
  if (s.x.empty()) {
    throw std::runtime_error("aggregate_runs: runs share no update indices");
  }
  return s;
}

void write_line_chart_svg(const std::string& path, const std::string& title,
                          const std::string& x_label,
                          const std::string& y_label, const CurveSeries& s) {
  if (s.x.empty()) throw std::invalid_argument("chart: empty series");
  const double width = 640, height = 400;
  const double ml = 70, mr = 20, mt = 40, mb = 50;

  double x_lo = s.x.front(), x_hi = s.x.back();
  double y_lo = s.mean[0] - s.sd[0], y_hi = s.mean[0] + s.sd[0];
  for (std::size_t i = 0; i < s.x.size(); ++i) {
    y_lo = std::min(y_lo, s.mean[i] - s.sd[i]);
    y_hi = std::max(y_hi, s.mean[i] + s.sd[i]);
  }
  if (x_hi <= x_lo) x_hi = x_lo + 1.0;
  if (y_hi <= y_lo) y_hi = y_lo + 1.0;
  const double pad = 0.05 * (y_hi - y_lo);
  y_lo -= pad;
  y_hi += pad;

  const auto sx = [&](double x) {
    return ml + (x - x_lo) / (x_hi - x_lo) * (width - ml - mr);
  };
  const auto sy = [&](double y) {
    return height - mb - (y - y_lo) / (y_hi - y_lo) * (height - mt - mb);
  };

  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write SVG: " + path);
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width
     << "\" height=\"" << height << "\" viewBox=\"0 0 " << width << " "
     << height << "\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << width / 2 << "\" y=\"24\" text-anchor=\"middle\" "
        "font-family=\"sans-serif\" font-size=\"16\">"
     << xml_escape(title) << "</text>\n";

  for (const auto& t : make_ticks(x_lo, x_hi, 5)) {
    const double px = sx(t.value);
    os << "<line x1=\"" << px << "\" y1=\"" << height - mb << "\" x2=\"" << px
       << "\" y2=\"" << height - mb + 5 << "\" stroke=\"black\"/>\n";
    os << "<text x=\"" << px << "\" y=\"" << height - mb + 20
       << "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
          "font-size=\"11\">"
       << t.label << "</text>\n";
  }
  for (const auto& t : make_ticks(y_lo, y_hi, 5)) {
    const double py = sy(t.value);
    os << "<line x1=\"" << ml - 5 << "\" y1=\"" << py << "\" x2=\"" << ml
       << "\" y2=\"" << py << "\" stroke=\"black\"/>\n";
    os << "<text x=\"" << ml - 8 << "\" y=\"" << py + 4
       << "\" text-anchor=\"end\" font-family=\"sans-serif\" "
          "font-size=\"11\">"
       << t.label << "</text>\n";
  }
  os << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml
     << "\" y2=\"" << height - mb << "\" stroke=\"black\"/>\n";
  os << "<line x1=\"" << ml << "\" y1=\"" << height - mb << "\" x2=\""
     << width - mr << "\" y2=\"" << height - mb << "\" stroke=\"black\"/>\n";
  os << "<text x=\"" << (ml + width - mr) / 2 << "\" y=\"" << height - 12
     << "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
        "font-size=\"13\">"
     << xml_escape(x_label) << "</text>\n";
  os << "<text x=\"18\" y=\"" << (mt + height - mb) / 2
     << "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
        "font-size=\"13\" transform=\"rotate(-90 18 "
     << (mt + height - mb) / 2 << ")\">" << xml_escape(y_label) << "</text>\n";

  // +-1 std band, then the mean line on top.
  os << "<polygon fill=\"#4477aa\" fill-opacity=\"0.25\" stroke=\"none\" "
        "points=\"";
  for (std::size_t i = 0; i < s.x.size(); ++i) {
    os << sx(s.x[i]) << "," << sy(s.mean[i] + s.sd[i]) << " ";
  }
  for (std::size_t i = s.x.size(); i-- > 0;) {
    os << sx(s.x[i]) << "," << sy(s.mean[i] - s.sd[i]) << " ";
  }
  os << "\"/>\n";
  os << "<polyline fill=\"none\" stroke=\"#4477aa\" stroke-width=\"2\" "
        "points=\"";
  for (std::size_t i = 0; i < s.x.size(); ++i) {
    os << sx(s.x[i]) << "," << sy(s.mean[i]) << " ";
  }
  os << "\"/>\n";
  os << "</svg>\n";
}

int write_learning_curve_plots(const std::vector<std::string>& run_dirs,
                               const std::string& out_dir, bool overwrite) {
  std::vector<std::string> csvs;
  for (const auto& dir : run_dirs) {
    const fs::path p(dir);
    if (fs::exists(p / "learning_curve.csv")) {
      csvs.push_back((p / "learning_curve.csv").string());
      continue;
    }
    if (fs::is_directory(p)) {
      std::vector<std::string> found;
      for (const auto& entry : fs::recursive_directory_iterator(p)) {
        if (entry.path().filename() == "learning_curve.csv") {
          found.push_back(entry.path().string());
        }
      }
      std::sort(found.begin(), found.end());
      csvs.insert(csvs.end(), found.begin(), found.end());
    }
  }
  if (csvs.empty()) {
    throw std::runtime_error("plot: no learning_curve.csv found");
  }

  fs::create_directories(out_dir);
  const struct {
    const char* column;
    const char* file;
    const char* title;
  } charts[] = {
      {"mean_task_reward", "reward.svg", "Rollout mean task reward"},
      {"val_task_metric", "task_metric.svg", "Validation task metric"},
      {"val_perplexity", "perplexity.svg", "Validation perplexity"},
  };

  int written = 0;
  for (const auto& chart : charts) {
    std::vector<std::vector<std::pair<double, double>>> runs;
    for (const auto& csv : csvs) {
      auto points = read_curve_column(csv, chart.column);
      if (!points.empty()) runs.push_back(std::move(points));
    }
    if (runs.empty()) continue;
    const fs::path out = fs::path(out_dir) / chart.file;
    if (fs::exists(out) && !overwrite) {
      throw std::runtime_error("plot: " + out.string() +
                               " exists (use overwrite)");
    }
    write_line_chart_svg(out.string(), chart.title, "update", chart.column,
                         aggregate_runs(runs));
    ++written;
  }
  return written;
}

}  // namespace tokenrl
