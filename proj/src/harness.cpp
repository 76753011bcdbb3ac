#include "tokenrl/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <mutex>
#include <sstream>
#include <stdexcept>
#include <thread>

namespace tokenrl {

namespace fs = std::filesystem;

namespace {

const std::vector<std::string> kCurveColumns = {
    "update",        "episodes",       "mean_task_reward",
    "mean_shaped_reward", "mean_episode_len", "mean_kl",
    "beta",          "clip_fraction",  "entropy",
    "policy_loss",   "value_loss",     "total_loss",
    "grad_norm",     "val_task_metric", "val_perplexity",
    "val_distinct_1", "val_distinct_2", "val_h1",
    "val_h2",        "val_msttr",      "val_unique_1",
    "val_unique_2"};

std::string join_csv(const std::vector<std::string>& cells) {
  std::string row;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (i) row += ',';
    row += cells[i];
  }
  return row;
}

long count_lines(const fs::path& path) {
  std::ifstream is(path);
  long n = 0;
  std::string line;
  while (std::getline(is, line)) ++n;
  return n;
}

std::optional<fs::path> latest_checkpoint(const fs::path& run_dir,
                                          int* step_out = nullptr) {
  if (!fs::exists(run_dir)) return std::nullopt;
  int best = -1;
  fs::path best_path;
  for (const auto& entry : fs::directory_iterator(run_dir)) {
    const std::string name = entry.path().filename().string();
    int step = -1;
    if (std::sscanf(name.c_str(), "step-%d.ckpt", &step) == 1) {
      if (step > best) {
        best = step;
        best_path = entry.path();
      }
    }
  }
  if (best < 0) return std::nullopt;
  if (step_out) *step_out = best;
  return best_path;
}

struct Phase {
  const char* name;
  const std::vector<Example>* data;
  int epochs;
};

// Teacher-forced pretraining, seeded from the data seed so every run with the
// same data configuration starts from the identical base model.
void supervised_phase(PolicyModel& m, const Phase& phase,
                      const PretrainConfig& pc, std::uint64_t stream_seed,
                      double dropout, std::ostream* log) {
  AdamState opt;
  opt.init(m.param_count());
  SupervisedHp hp;
  hp.lr = pc.lr;
  std::vector<std::size_t> order(phase.data->size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (int epoch = 0; epoch < phase.epochs; ++epoch) {
    Rng shuffle = Rng::stream(stream_seed, phase.name, epoch);
    for (std::size_t i = order.size() - 1; i > 0; --i) {
      std::swap(order[i], order[shuffle.next_below(i + 1)]);
    }
    double epoch_loss = 0.0;
    long batches = 0;
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(pc.batch)) {
      std::vector<const Example*> batch;
      for (std::size_t i = start;
           i < std::min(order.size(), start + pc.batch); ++i) {
        batch.push_back(&(*phase.data)[order[i]]);
      }
      Rng dropout_rng = Rng::stream(stream_seed, "dropout", epoch, start);
      epoch_loss += supervised_update(m, batch, hp, opt,
                                      dropout > 0.0 ? &dropout_rng : nullptr);
      ++batches;
    }
    if (log) {
      *log << phase.name << "," << epoch << ","
           << format_double(epoch_loss / std::max(1L, batches)) << "\n";
    }
  }
}

void write_report(const fs::path& run_dir, const TrainConfig& cfg,
                  bool aborted, int final_update, const MetricReport& val,
                  std::size_t model_params) {
  nlohmann::json j;
  j["config"] = cfg.to_json();
  j["aborted"] = aborted;
  j["final_update"] = final_update;
  j["model_params"] = model_params;
  nlohmann::json metrics;
  for (const auto& [k, v] : val.values) metrics[k] = v;
  j["val"] = {{"metrics", metrics}, {"population", val.population}};
  std::ofstream os(run_dir / "final_report.json");
  os << j.dump(2) << "\n";
}

MetricReport read_report_metrics(const fs::path& run_dir, int* final_update,
                                 bool* aborted) {
  std::ifstream is(run_dir / "final_report.json");
  if (!is) throw std::runtime_error("missing final_report.json in " +
                                    run_dir.string());
  nlohmann::json j;
  is >> j;
  MetricReport report;
  for (const auto& [k, v] : j.at("val").at("metrics").items()) {
    report.values[k] = v.get<double>();
  }
  report.population = j.at("val").at("population").get<int>();
  if (final_update) *final_update = j.at("final_update").get<int>();
  if (aborted) *aborted = j.at("aborted").get<bool>();
  return report;
}

std::string cell_value(const MetricReport& r, const std::string& key) {
  auto it = r.values.find(key);
  return it == r.values.end() ? std::string() : format_double(it->second);
}

}  // namespace

const std::vector<std::string>& curve_columns() { return kCurveColumns; }

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::vector<int> generate_continuation(const PolicyModel& m,
                                       std::span<const int> prompt,
                                       const DecodeConfig& dc, int eos_id,
                                       Rng& rng) {
  std::vector<int> window(prompt.begin(), prompt.end());
  std::vector<int> actions;
  const int context = m.config().context_len;
  for (int t = 0; t < dc.max_new_tokens; ++t) {
    std::span<const int> view = window;
    if (static_cast<int>(view.size()) > context) {
      view = view.subspan(view.size() - context);
    }
    const auto outcome = sample_action(m, view, dc, t, {}, eos_id, rng);
    actions.push_back(outcome.action);
    window.push_back(outcome.action);
    if (outcome.action == eos_id) break;
  }
  return actions;
}

MetricReport evaluate_split(const EvalInputs& in,
                            const std::vector<Example>& split, Rng rng) {
  if (split.empty()) throw std::invalid_argument("evaluate: empty split");

  std::vector<TokenSeq> stripped;
  std::vector<std::pair<TokenSeq, TokenSeq>> pairs;
  double task_sum = 0.0;
  for (const auto& ex : split) {
    const auto actions =
        generate_continuation(*in.model, ex.prompt, in.decode, in.eos_id, rng);

    EnvState final_state;
    final_state.prompt = ex.prompt;
    final_state.actions = actions;
    final_state.t = static_cast<int>(actions.size());
    final_state.horizon = in.decode.max_new_tokens;
    final_state.done = true;
    task_sum +=
        task_reward(in.task, final_state, ex, in.scorer, in.eos_id,
                    in.reward_cfg);

    pairs.emplace_back(ex.prompt, actions);
    TokenSeq bare;
    for (int a : actions) {
      if (a != in.eos_id) bare.push_back(a);
    }
    if (!bare.empty()) stripped.push_back(std::move(bare));
  }

  MetricReport report;
  report.population = static_cast<int>(split.size());
  report.values["task_metric"] = task_sum / static_cast<double>(split.size());
  report.values["perplexity"] = conditional_perplexity(*in.ref, pairs);
  if (!stripped.empty()) {
    report.values["distinct_1"] = distinct_n(stripped, 1);
    report.values["distinct_2"] = distinct_n(stripped, 2);
    report.values["unique_1"] = static_cast<double>(unique_n(stripped, 1));
    report.values["unique_2"] = static_cast<double>(unique_n(stripped, 2));
    report.values["h1"] = ngram_entropy(stripped, 1);
    long bigrams = 0;
    for (const auto& s : stripped) {
      bigrams += std::max<long>(0, static_cast<long>(s.size()) - 1);
    }
    if (bigrams > 0) report.values["h2"] = ngram_entropy(stripped, 2);
    long tokens = 0;
    for (const auto& s : stripped) tokens += static_cast<long>(s.size());
    if (tokens >= in.msttr_segment) {
      report.values["msttr"] = msttr(stripped, in.msttr_segment);
    }
  }
  return report;
}

RunResult run_training(const TrainConfig& cfg, const std::string& run_dir,
                       const TrainOptions& opts) {
  cfg.validate();
  const fs::path dir(run_dir);

  if (fs::exists(dir) && opts.overwrite) fs::remove_all(dir);
  fs::create_directories(dir);

  if (fs::exists(dir / "final_report.json")) {
    if (!opts.overwrite) {
      int final_update = 0;
      bool aborted = false;
      RunResult done;
      done.final_val = read_report_metrics(dir, &final_update, &aborted);
      done.final_update = final_update;
      done.aborted = aborted;
      done.run_dir = run_dir;
      return done;  // idempotent: a finished run is left untouched
    }
  }

  // ---- data, scorers, reward ----
  const Dataset ds = generate_task_dataset(
      cfg.task, cfg.data.seed,
      {cfg.data.train, cfg.data.val, cfg.data.test},
      {cfg.data.labeled, cfg.data.base_corpus, cfg.data.max_prompt_len});
  const int eos = ds.vocab.eos_id();
  const int horizon = cfg.decode.max_new_tokens;

  const bool needs_classifier = cfg.task == TaskKind::SentimentContinuation;
  ClassifierReward eval_clf, reward_clf;
  if (needs_classifier) {
    eval_clf = train_reward_classifier(ds.labeled, 1.0, cfg.data.seed);
    reward_clf = cfg.reward.classifier_fraction >= 1.0
                     ? eval_clf
                     : train_reward_classifier(
                           ds.labeled, cfg.reward.classifier_fraction,
                           cfg.data.seed);
  }
  const TaskRewardConfig reward_cfg{cfg.reward.coverage_rouge_weight};
  const RewardFn reward_fn = [&](const EnvState& st, const Example& ex) {
    return task_reward(cfg.task, st, ex,
                       needs_classifier ? &reward_clf : nullptr, eos,
                       reward_cfg);
  };

  ModelConfig mc = cfg.model;
  mc.vocab_size = ds.vocab.size();
  mc.seed = cfg.data.seed;

  {
    std::ofstream os(dir / "config.json");
    os << cfg.to_json().dump(2) << "\n";
  }
  if (needs_classifier) {
    std::ofstream os(dir / "classifier.json");
    os << reward_clf.to_json(ds.vocab).dump(2) << "\n";
  }

  // ---- starting state: resume or build ----
  TrainState st;
  int resumed_from = -1;
  if (opts.resume) {
    if (auto ckpt = latest_checkpoint(dir, &resumed_from)) {
      st = load_checkpoint(ckpt->string());
      if (st.cfg.to_json() != cfg.to_json()) {
        throw std::runtime_error(
            "resume: checkpoint config differs from the requested config");
      }
    } else {
      resumed_from = -1;
    }
  }

  if (resumed_from < 0) {
    std::ofstream sup_log(dir / "supervised_log.csv");
    sup_log << "phase,epoch,mean_token_ce\n";

    Rng init_rng = Rng::stream(cfg.data.seed, "model-init");
    PolicyModel base(mc, init_rng);
    supervised_phase(base, {"base-pretrain", &ds.base_corpus,
                            cfg.pretrain.base_epochs},
                     cfg.pretrain, cfg.data.seed, cfg.model.dropout, &sup_log);

    st.cfg = cfg;
    st.model_cfg = mc;
    st.kl = make_kl_controller(cfg.kl.target, cfg.kl.initial_beta, cfg.kl.gain,
                               cfg.kl.clip, cfg.kl.max_beta);
    st.update_index = 0;

    switch (cfg.algorithm) {
      case Algorithm::ZeroShot:
        st.policy = base;
        st.ref = base;
        break;
      case Algorithm::Supervised: {
        PolicyModel warm = base;
        supervised_phase(warm, {"warm-start", &ds.train,
                                cfg.pretrain.warm_epochs},
                         cfg.pretrain, cfg.data.seed, cfg.model.dropout,
                         &sup_log);
        st.policy = warm;
        st.ref = base;
        break;
      }
      case Algorithm::Ppo:
      case Algorithm::Nlpo:
      case Algorithm::A2c: {
        Rng head_rng = Rng::stream(cfg.seed, "value-head");
        st.policy = base.clone_with_fresh_value_head(head_rng);
        st.ref = base;
        break;
      }
      case Algorithm::SupervisedPpo:
      case Algorithm::SupervisedNlpo: {
        PolicyModel warm = base;
        supervised_phase(warm, {"warm-start", &ds.train,
                                cfg.pretrain.warm_epochs},
                         cfg.pretrain, cfg.data.seed, cfg.model.dropout,
                         &sup_log);
        Rng head_rng = Rng::stream(cfg.seed, "value-head");
        st.policy = warm.clone_with_fresh_value_head(head_rng);
        st.ref = warm;  // the warm-started model is the drift anchor
        break;
      }
    }
    if (algorithm_uses_mask(cfg.algorithm)) {
      st.mask = make_mask_state(st.policy, cfg.nlpo.top_p, cfg.nlpo.mu);
    }
    st.opt.init(st.policy.param_count());
  }

  const EvalInputs eval_in{&st.policy,
                           &st.ref,
                           cfg.task,
                           eos,
                           needs_classifier ? &eval_clf : nullptr,
                           cfg.decode,
                           reward_cfg,
                           25};

  RunResult result;
  result.run_dir = run_dir;

  // ---- non-RL algorithms: evaluate and report ----
  if (!algorithm_is_rl(cfg.algorithm)) {
    std::ofstream curve(dir / "learning_curve.csv");
    curve << join_csv(kCurveColumns) << "\n";
    save_checkpoint((dir / "step-0.ckpt").string(), st);
    result.final_val =
        evaluate_split(eval_in, ds.val, Rng::stream(cfg.seed, "eval", 0));
    result.final_update = 0;
    write_report(dir, cfg, false, 0, result.final_val,
                 st.policy.param_count());
    return result;
  }

  // ---- on-policy loop ----
  const fs::path curve_path = dir / "learning_curve.csv";
  std::ofstream curve;
  if (resumed_from >= 0) {
    const long rows = count_lines(curve_path) - 1;
    if (rows != st.update_index) {
      throw std::runtime_error(
          "resume: learning_curve.csv rows do not match the checkpoint");
    }
    curve.open(curve_path, std::ios::app);
  } else {
    curve.open(curve_path);
    curve << join_csv(kCurveColumns) << "\n";
  }

  MetricReport last_eval;
  bool have_eval = false;
  const int total_updates = cfg.algo.updates;

  for (int u = st.update_index + 1; u <= total_updates; ++u) {
    UpdateStats stats;
    double beta_used = st.kl.beta;
    try {
      RolloutContext ctx;
      ctx.policy = &st.policy;
      ctx.ref = &st.ref;
      ctx.mask = st.mask ? &*st.mask : nullptr;
      ctx.decode = cfg.decode;
      ctx.eos_id = eos;

      RolloutBatchConfig batch;
      batch.episodes = cfg.algo.episodes_per_update;
      batch.run_seed = cfg.seed;
      batch.update_index = static_cast<std::uint64_t>(u);
      batch.workers = cfg.run.rollout_workers;

      auto rollouts = collect_rollouts(ds.train, horizon, ds.vocab.size(),
                                       reward_fn, ctx, batch);
      shape_rewards(rollouts, st.kl.beta);

      Rng shuffle = Rng::stream(cfg.seed, "update-shuffle", u);
      Rng dropout_rng = Rng::stream(cfg.seed, "update-dropout", u);
      Rng* drop = cfg.model.dropout > 0.0 ? &dropout_rng : nullptr;
      if (cfg.algorithm == Algorithm::A2c) {
        stats = a2c_update(st.policy, rollouts, cfg.algo, st.opt, shuffle, drop);
      } else {
        stats = ppo_update(st.policy, rollouts, cfg.algo, st.opt, shuffle, drop);
      }
    } catch (const std::exception& e) {
      std::ofstream marker(dir / "aborted.txt");
      marker << "update " << u << ": " << e.what() << "\n";
      result.aborted = true;
      result.final_update = st.update_index;
      result.final_val = last_eval;
      write_report(dir, cfg, true, st.update_index, last_eval,
                   st.policy.param_count());
      return result;
    }

    st.kl = kl_controller_update(st.kl, stats.mean_kl);
    if (st.mask) nlpo_sync(*st.mask, st.policy);
    st.update_index = u;

    const bool eval_now = (u % cfg.eval.interval == 0) || u == total_updates;
    if (eval_now) {
      last_eval = evaluate_split(eval_in, ds.val, Rng::stream(cfg.seed, "eval",
                                                              u));
      have_eval = true;
    }

    std::vector<std::string> row = {
        std::to_string(u),
        std::to_string(cfg.algo.episodes_per_update),
        format_double(stats.mean_task_reward),
        format_double(stats.mean_shaped_reward),
        format_double(stats.mean_episode_len),
        format_double(stats.mean_kl),
        format_double(beta_used),
        format_double(stats.clip_fraction),
        format_double(stats.entropy),
        format_double(stats.policy_loss),
        format_double(stats.value_loss),
        format_double(stats.total_loss),
        format_double(stats.grad_norm)};
    const char* val_keys[] = {"task_metric", "perplexity", "distinct_1",
                              "distinct_2", "h1", "h2", "msttr", "unique_1",
                              "unique_2"};
    for (const char* key : val_keys) {
      row.push_back(eval_now ? cell_value(last_eval, key) : std::string());
    }
    curve << join_csv(row) << "\n";
    curve.flush();

    const bool stop_now = opts.stop_after_update > 0 && u == opts.stop_after_update;
    if (u % cfg.run.checkpoint_interval == 0 || u == total_updates || stop_now) {
      save_checkpoint((dir / ("step-" + std::to_string(u) + ".ckpt")).string(),
                      st);
    }
    if (stop_now) {
      result.final_update = u;
      result.final_val = last_eval;
      return result;  // resumable; no final report yet
    }
  }

  if (!have_eval) {
    last_eval = evaluate_split(eval_in, ds.val,
                               Rng::stream(cfg.seed, "eval", st.update_index));
  }
  if (st.update_index == 0) {
    save_checkpoint((dir / "step-0.ckpt").string(), st);  // updates == 0 run
  }
  result.final_update = st.update_index;
  result.final_val = last_eval;
  write_report(dir, cfg, false, st.update_index, last_eval,
               st.policy.param_count());
  return result;
}

void run_ablation_grid(const TrainConfig& base, const GridSpec& grid,
                       const std::string& out_dir, bool overwrite) {
  static const std::map<std::string, std::string> kAxisPath = {
      {"target_kl", "kl.target"},
      {"gamma", "algo.gamma"},
      {"top_p", "nlpo.top_p"},
      {"mu", "nlpo.mu"},
      {"data_fraction", "reward.classifier_fraction"}};
  const auto axis_it = kAxisPath.find(grid.axis);
  if (axis_it == kAxisPath.end()) {
    throw std::invalid_argument("ablate: unknown axis \"" + grid.axis + "\"");
  }
  if ((grid.axis == "top_p" || grid.axis == "mu") &&
      !algorithm_uses_mask(base.algorithm)) {
    throw std::invalid_argument("ablate: axis " + grid.axis +
                                " requires a masked algorithm (nlpo)");
  }
  if (grid.axis == "data_fraction" &&
      base.task != TaskKind::SentimentContinuation) {
    throw std::invalid_argument(
        "ablate: data_fraction applies to the learned-classifier task");
  }
  if ((grid.axis == "target_kl" || grid.axis == "gamma") &&
      !algorithm_is_rl(base.algorithm)) {
    throw std::invalid_argument("ablate: axis " + grid.axis +
                                " requires an RL algorithm");
  }
  if (grid.values.empty() || grid.seeds.empty()) {
    throw std::invalid_argument("ablate: values and seeds must be nonempty");
  }

  const fs::path out(out_dir);
  if (fs::exists(out / "ablation.csv") && !overwrite) {
    throw std::runtime_error("ablate: " + out_dir +
                             " already holds results (use overwrite)");
  }
  fs::create_directories(out);

  struct Cell {
    std::size_t value_idx;
    std::size_t seed_idx;
    bool ok = false;
    MetricReport report;
  };
  std::vector<Cell> cells;
  for (std::size_t vi = 0; vi < grid.values.size(); ++vi) {
    for (std::size_t si = 0; si < grid.seeds.size(); ++si) {
      Cell cell;
      cell.value_idx = vi;
      cell.seed_idx = si;
      cells.push_back(std::move(cell));
    }
  }

  std::mutex mu;
  std::size_t next = 0;
  const auto worker = [&]() {
    for (;;) {
      std::size_t idx;
      {
        std::lock_guard<std::mutex> lock(mu);
        if (next >= cells.size()) return;
        idx = next++;
      }
      Cell& cell = cells[idx];
      const std::string& value = grid.values[cell.value_idx];
      const std::uint64_t seed = grid.seeds[cell.seed_idx];
      const fs::path cell_dir =
          out / (grid.axis + "=" + value) / ("seed-" + std::to_string(seed));
      try {
        nlohmann::json j = base.to_json();
        apply_override(j, axis_it->second + "=" + value);
        j["seed"] = seed;
        TrainConfig cfg = TrainConfig::from_json(j);
        cfg.validate();
        TrainOptions cell_opts;
        cell_opts.overwrite = overwrite;
        const RunResult r = run_training(cfg, cell_dir.string(), cell_opts);
        if (!r.aborted) {
          cell.ok = true;
          cell.report = r.final_val;
        }
      } catch (const std::exception& e) {
        fs::create_directories(cell_dir);
        std::ofstream marker(cell_dir / "failed.txt");
        marker << e.what() << "\n";
      }
    }
  };

  std::vector<std::thread> pool;
  const int jobs = std::max(1, grid.jobs);
  for (int i = 0; i < jobs; ++i) pool.emplace_back(worker);
  for (auto& t : pool) t.join();

  const std::vector<std::string> metric_keys = {
      "task_metric", "perplexity", "msttr",    "distinct_1", "distinct_2",
      "h1",          "h2",         "unique_1", "unique_2"};

  std::ofstream csv(out / "ablation.csv");
  csv << grid.axis << ",seeds,failed";
  for (const auto& key : metric_keys) csv << "," << key << "_mean," << key << "_std";
  csv << "\n";
  for (std::size_t vi = 0; vi < grid.values.size(); ++vi) {
    std::vector<const MetricReport*> ok_cells;
    int failed = 0;
    for (const auto& cell : cells) {
      if (cell.value_idx != vi) continue;
      if (cell.ok) {
        ok_cells.push_back(&cell.report);
      } else {
        ++failed;
      }
    }
    csv << grid.values[vi] << "," << grid.seeds.size() << "," << failed;
    for (const auto& key : metric_keys) {
      std::vector<double> vals;
      for (const auto* r : ok_cells) {
        auto it = r->values.find(key);
        if (it != r->values.end()) vals.push_back(it->second);
      }
      if (vals.empty()) {
        csv << ",,";
        continue;
      }
      double mean = 0.0;
      for (double v : vals) mean += v;
      mean /= static_cast<double>(vals.size());
      double var = 0.0;
      for (double v : vals) var += (v - mean) * (v - mean);
      var /= static_cast<double>(vals.size());
      csv << "," << format_double(mean) << "," << format_double(std::sqrt(var));
    }
    csv << "\n";
  }
}

}  // namespace tokenrl
