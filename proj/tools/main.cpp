// Command-line surface: dataset generation, training, evaluation, ablation
// grids, metric scoring, and learning-curve plots.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "tokenrl/checkpoint.hpp"
#include "tokenrl/config.hpp"
#include "tokenrl/dataset.hpp"
#include "tokenrl/harness.hpp"
#include "tokenrl/metrics.hpp"
#include "tokenrl/plotting.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace tokenrl;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitRuntime = 2;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void fail_line(const std::string& message, int code) {
  json err = {{"error", message}, {"exit", code}};
  std::cerr << err.dump() << std::endl;
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

struct ConfigArgs {
  std::string config_path;
  std::vector<std::string> overrides;
  std::int64_t seed = -1;

  TrainConfig load(json* resolved = nullptr) const {
    std::vector<std::string> all = overrides;
    if (seed >= 0) all.push_back("seed=" + std::to_string(seed));
    return load_config_file(config_path, all, resolved);
  }
};

void add_config_flags(CLI::App* cmd, ConfigArgs& args) {
  cmd->add_option("--config", args.config_path, "JSON config file");
  cmd->add_option("--set", args.overrides,
                  "Override a config key (dotted.path=value, repeatable)");
  cmd->add_option("--seed", args.seed, "Override the run seed");
}

void require_fresh_or_overwrite(const fs::path& target, bool overwrite) {
  if (fs::exists(target) && !overwrite) {
    throw UsageError("refusing to overwrite " + target.string() +
                     " (pass --overwrite)");
  }
}

// ---- score ----

struct ScoredLine {
  std::vector<std::string> tokens;
  std::vector<std::string> concepts;
};

std::vector<ScoredLine> read_token_lines(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw UsageError("cannot open " + path);
  std::vector<ScoredLine> lines;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const json j = json::parse(line);
    ScoredLine sl;
    sl.tokens = j.at("tokens").get<std::vector<std::string>>();
    if (j.contains("concepts")) {
      sl.concepts = j.at("concepts").get<std::vector<std::string>>();
    }
    lines.push_back(std::move(sl));
  }
  return lines;
}

int run_score(const std::string& candidates_path,
              const std::string& references_path,
              const std::vector<std::string>& metric_names, int msttr_segment) {
  const auto candidates = read_token_lines(candidates_path);
  const auto references = read_token_lines(references_path);
  if (candidates.size() != references.size()) {
    throw UsageError("candidates and references differ in length");
  }
  if (candidates.empty()) throw UsageError("no candidates to score");

  // Intern token strings into dense ids shared by both files.
  std::map<std::string, int> intern;
  const auto to_ids = [&intern](const std::vector<std::string>& tokens) {
    std::vector<int> ids;
    ids.reserve(tokens.size());
    for (const auto& t : tokens) {
      ids.push_back(intern.emplace(t, static_cast<int>(intern.size()))
                        .first->second);
    }
    return ids;
  };

  std::vector<TokenSeq> cand_ids, ref_ids, cand_concepts;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    cand_ids.push_back(to_ids(candidates[i].tokens));
    ref_ids.push_back(to_ids(references[i].tokens));
    cand_concepts.push_back(to_ids(candidates[i].concepts));
  }

  const auto mean_pairwise = [&](auto&& fn) {
    double sum = 0.0;
    for (std::size_t i = 0; i < cand_ids.size(); ++i) {
      sum += fn(i);
    }
    return sum / static_cast<double>(cand_ids.size());
  };

  MetricReport report;
  report.population = static_cast<int>(cand_ids.size());
  for (const auto& name : metric_names) {
    if (name == "bleu" || name == "bleu-4" || name == "bleu-1" ||
        name == "bleu-2" || name == "bleu-3") {
      const int max_n = name == "bleu" ? 4 : name.back() - '0';
      report.values[name] = mean_pairwise([&](std::size_t i) {
        return cand_ids[i].empty()
                   ? 0.0
                   : bleu(cand_ids[i], {ref_ids[i]}, max_n);
      });
    } else if (name == "rouge-1" || name == "rouge-2") {
      const int n = name.back() - '0';
      report.values[name] = mean_pairwise([&](std::size_t i) {
        if (cand_ids[i].empty() || ref_ids[i].empty()) return 0.0;
        return rouge_n(cand_ids[i], ref_ids[i], n).f1;
      });
    } else if (name == "rouge-l") {
      report.values[name] = mean_pairwise([&](std::size_t i) {
        if (cand_ids[i].empty() || ref_ids[i].empty()) return 0.0;
        return rouge_l(cand_ids[i], ref_ids[i]).f1;
      });
    } else if (name == "coverage") {
      report.values[name] = mean_pairwise([&](std::size_t i) {
        if (cand_concepts[i].empty()) {
          throw UsageError("coverage needs a \"concepts\" field per line");
        }
        return coverage(cand_concepts[i], cand_ids[i]);
      });
    } else if (name == "distinct-1") {
      report.values[name] = distinct_n(cand_ids, 1);
    } else if (name == "distinct-2") {
      report.values[name] = distinct_n(cand_ids, 2);
    } else if (name == "unique-1") {
      report.values[name] = static_cast<double>(unique_n(cand_ids, 1));
    } else if (name == "unique-2") {
      report.values[name] = static_cast<double>(unique_n(cand_ids, 2));
    } else if (name == "h1") {
      report.values[name] = ngram_entropy(cand_ids, 1);
    } else if (name == "h2") {
      report.values[name] = ngram_entropy(cand_ids, 2);
    } else if (name == "msttr") {
      report.values[name] = msttr(cand_ids, msttr_segment);
    } else {
      throw UsageError("unknown metric \"" + name + "\"");
    }
  }

  json out;
  out["population"] = report.population;
  for (const auto& [k, v] : report.values) out["metrics"][k] = v;
  std::cout << out.dump(2) << std::endl;
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Desk-scale on-policy RL for synthetic text generation"};
  app.name("tokenrl");
  app.require_subcommand(1);

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "Generate a task dataset");
  ConfigArgs gen_cfg;
  std::string gen_out = "data";
  bool gen_overwrite = false;
  add_config_flags(gen, gen_cfg);
  gen->add_option("--out", gen_out, "Output directory")->required();
  gen->add_flag("--overwrite", gen_overwrite, "Replace existing outputs");

  // train
  auto* train = app.add_subcommand("train", "Run one training job");
  ConfigArgs train_cfg;
  std::string train_out = "run";
  bool train_overwrite = false;
  int stop_after = -1;
  int train_jobs = 0;
  add_config_flags(train, train_cfg);
  train->add_option("--out", train_out, "Run directory")->required();
  train->add_flag("--overwrite", train_overwrite, "Replace an existing run");
  train->add_option("--stop-after-update", stop_after,
                    "Stop (resumably) after this update");
  train->add_option("--jobs", train_jobs, "Parallel rollout workers");

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint");
  ConfigArgs eval_cfg;
  std::string eval_ckpt, eval_split = "val", eval_out;
  bool eval_overwrite = false;
  add_config_flags(eval_cmd, eval_cfg);
  eval_cmd->add_option("--ckpt", eval_ckpt, "Checkpoint file")->required();
  eval_cmd->add_option("--split", eval_split, "Dataset split (val|test)");
  eval_cmd->add_option("--out", eval_out, "Write the report here (else stdout)");
  eval_cmd->add_flag("--overwrite", eval_overwrite, "Replace existing outputs");

  // ablate
  auto* ablate = app.add_subcommand("ablate", "Run an ablation grid");
  ConfigArgs ablate_cfg;
  std::string ablate_axis, ablate_values, ablate_seeds = "0,1,2,3,4";
  std::string ablate_out = "ablation";
  int ablate_jobs = 1;
  bool ablate_overwrite = false;
  add_config_flags(ablate, ablate_cfg);
  ablate->add_option("--axis", ablate_axis,
                     "target_kl | gamma | top_p | mu | data_fraction")
      ->required();
  ablate->add_option("--values", ablate_values, "Comma-separated axis values")
      ->required();
  ablate->add_option("--seeds", ablate_seeds, "Comma-separated seeds");
  ablate->add_option("--jobs", ablate_jobs, "Parallel cells");
  ablate->add_option("--out", ablate_out, "Output directory")->required();
  ablate->add_flag("--overwrite", ablate_overwrite, "Replace existing outputs");

  // score
  auto* score = app.add_subcommand("score", "Score candidates against references");
  std::string score_cand, score_ref, score_metrics = "bleu,rouge-l";
  int score_msttr_segment = 25;
  score->add_option("--candidates", score_cand,
                    "JSONL with {\"tokens\": [...]} lines")
      ->required();
  score->add_option("--references", score_ref,
                    "JSONL with {\"tokens\": [...]} lines")
      ->required();
  score->add_option("--metrics", score_metrics, "Comma-separated metric names");
  score->add_option("--msttr-segment", score_msttr_segment,
                    "MSTTR segment length");

  // plot
  auto* plot = app.add_subcommand("plot", "Render learning-curve SVG charts");
  std::vector<std::string> plot_dirs;
  std::string plot_out;
  bool plot_overwrite = false;
  plot->add_option("dirs", plot_dirs, "Run directories (searched recursively)")
      ->required();
  plot->add_option("--out", plot_out, "Output directory (default: first dir)");
  plot->add_flag("--overwrite", plot_overwrite, "Replace existing charts");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) {
      json resolved;
      const TrainConfig cfg = gen_cfg.load(&resolved);
      require_fresh_or_overwrite(fs::path(gen_out) / "vocab.json",
                                 gen_overwrite);
      const Dataset ds = generate_task_dataset(
          cfg.task, cfg.data.seed,
          {cfg.data.train, cfg.data.val, cfg.data.test},
          {cfg.data.labeled, cfg.data.base_corpus, cfg.data.max_prompt_len});
      write_dataset_dir(gen_out, ds);
      std::cout << resolved.dump(2) << std::endl;
      return kExitOk;
    }

    if (train->parsed()) {
      if (train_jobs > 0) {
        train_cfg.overrides.push_back("run.rollout_workers=" +
                                      std::to_string(train_jobs));
      }
      json resolved;
      const TrainConfig cfg = train_cfg.load(&resolved);
      std::cout << resolved.dump(2) << std::endl;
      TrainOptions opts;
      opts.stop_after_update = stop_after;
      opts.overwrite = train_overwrite;
      const RunResult result = run_training(cfg, train_out, opts);
      json summary = {{"run_dir", result.run_dir},
                      {"final_update", result.final_update},
                      {"aborted", result.aborted}};
      for (const auto& [k, v] : result.final_val.values) {
        summary["val"][k] = v;
      }
      std::cout << summary.dump(2) << std::endl;
      return result.aborted ? kExitRuntime : kExitOk;
    }

    if (eval_cmd->parsed()) {
      const TrainConfig cfg = eval_cfg.load();
      const Dataset ds = generate_task_dataset(
          cfg.task, cfg.data.seed,
          {cfg.data.train, cfg.data.val, cfg.data.test},
          {cfg.data.labeled, cfg.data.base_corpus, cfg.data.max_prompt_len});
      const TrainState st = load_checkpoint(eval_ckpt);

      ClassifierReward eval_clf;
      const bool needs_clf = cfg.task == TaskKind::SentimentContinuation;
      if (needs_clf) {
        eval_clf = train_reward_classifier(ds.labeled, 1.0, cfg.data.seed);
      }
      EvalInputs in;
      in.model = &st.policy;
      in.ref = &st.ref;
      in.task = cfg.task;
      in.eos_id = ds.vocab.eos_id();
      in.scorer = needs_clf ? &eval_clf : nullptr;
      in.decode = cfg.decode;
      in.reward_cfg = TaskRewardConfig{cfg.reward.coverage_rouge_weight};

      const std::vector<Example>* split = nullptr;
      if (eval_split == "val") {
        split = &ds.val;
      } else if (eval_split == "test") {
        split = &ds.test;
      } else {
        throw UsageError("--split must be val or test");
      }
      const MetricReport report = evaluate_split(
          in, *split, Rng::stream(cfg.seed, "eval-cli", st.update_index));

      json out;
      out["population"] = report.population;
      out["split"] = eval_split;
      for (const auto& [k, v] : report.values) out["metrics"][k] = v;
      if (eval_out.empty()) {
        std::cout << out.dump(2) << std::endl;
      } else {
        require_fresh_or_overwrite(eval_out, eval_overwrite);
        std::ofstream os(eval_out);
        os << out.dump(2) << "\n";
      }
      return kExitOk;
    }

    if (ablate->parsed()) {
      json resolved;
      const TrainConfig cfg = ablate_cfg.load(&resolved);
      std::cout << resolved.dump(2) << std::endl;
      GridSpec grid;
      grid.axis = ablate_axis;
      grid.values = split_list(ablate_values);
      for (const auto& s : split_list(ablate_seeds)) {
        grid.seeds.push_back(std::stoull(s));
      }
      grid.jobs = ablate_jobs;
      run_ablation_grid(cfg, grid, ablate_out, ablate_overwrite);
      std::cout << "wrote " << (fs::path(ablate_out) / "ablation.csv").string()
                << std::endl;
      return kExitOk;
    }

    if (score->parsed()) {
      return run_score(score_cand, score_ref, split_list(score_metrics),
                       score_msttr_segment);
    }

    if (plot->parsed()) {
      const std::string out = plot_out.empty() ? plot_dirs.front() : plot_out;
      const int n = write_learning_curve_plots(plot_dirs, out, plot_overwrite);
      std::cout << "wrote " << n << " charts to " << out << std::endl;
      return kExitOk;
    }
  } catch (const UsageError& e) {
    fail_line(e.what(), kExitUsage);
    return kExitUsage;
  } catch (const std::invalid_argument& e) {
    fail_line(e.what(), kExitUsage);
    return kExitUsage;
  } catch (const std::exception& e) {
    fail_line(e.what(), kExitRuntime);
    return kExitRuntime;
  }
  return kExitUsage;
}
