#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "tokenrl/harness.hpp"
#include "tokenrl/plotting.hpp"

using namespace tokenrl;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream is(p);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

fs::path temp_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / "tokenrl_tests" / name;
  fs::remove_all(p);
  fs::create_directories(p.parent_path());
  return p;
}

// A deliberately tiny configuration so harness tests run in seconds.
TrainConfig micro_config(Algorithm algo = Algorithm::Ppo,
                         TaskKind task = TaskKind::SentimentContinuation) {
  TrainConfig cfg;
  cfg.task = task;
  cfg.algorithm = algo;
  cfg.seed = 0;
  cfg.data = {4321, 40, 10, 10, 160, 40, 12};
  cfg.model.d_model = 16;
  cfg.model.d_ff = 32;
  cfg.model.context_len = 32;
  cfg.algo.updates = 3;
  cfg.algo.episodes_per_update = 6;
  cfg.algo.minibatch_steps = 32;
  cfg.algo.epochs = 2;
  cfg.decode.max_new_tokens = 10;
  cfg.pretrain.base_epochs = 2;
  cfg.pretrain.warm_epochs = 2;
  cfg.eval.interval = 2;
  cfg.run.checkpoint_interval = 1;
  return cfg;
}

}  // namespace

TEST_CASE("config JSON round-trips and rejects unknown keys") {
  const TrainConfig cfg = micro_config(Algorithm::SupervisedNlpo);
  const auto j = cfg.to_json();
  const TrainConfig back = TrainConfig::from_json(j);
  CHECK(back.to_json() == j);

  auto bad = j;
  bad["algo"]["learning_rate_typo"] = 1.0;
  CHECK_THROWS_WITH_AS(TrainConfig::from_json(bad),
                       doctest::Contains("learning_rate_typo"),
                       std::invalid_argument);

  auto inf = j;
  inf["kl"]["target"] = "inf";
  const TrainConfig no_penalty = TrainConfig::from_json(inf);
  CHECK(std::isinf(no_penalty.kl.target));
  CHECK(no_penalty.to_json()["kl"]["target"] == "inf");
}

TEST_CASE("dotted overrides reach nested keys") {
  nlohmann::json j = micro_config().to_json();
  apply_override(j, "algo.gamma=1.0");
  apply_override(j, "kl.target=inf");
  apply_override(j, "algorithm=nlpo");
  const TrainConfig cfg = TrainConfig::from_json(j);
  CHECK(cfg.algo.gamma == 1.0);
  CHECK(std::isinf(cfg.kl.target));
  CHECK(cfg.algorithm == Algorithm::Nlpo);
  CHECK_THROWS_AS(apply_override(j, "no_equals_sign"), std::invalid_argument);
}

TEST_CASE("dropout in RL mode requires the explicit override") {
  TrainConfig cfg = micro_config();
  cfg.model.dropout = 0.1;
  CHECK_THROWS_WITH_AS(cfg.validate(), doctest::Contains("dropout"),
                       std::invalid_argument);
  cfg.run.allow_dropout_in_rl = true;
  CHECK_NOTHROW(cfg.validate());
  cfg.run.allow_dropout_in_rl = false;
  cfg.algorithm = Algorithm::Supervised;
  CHECK_NOTHROW(cfg.validate());
}

TEST_CASE("zero-shot training is a no-op evaluation of the base model") {
  const auto dir_a = temp_dir("zero_a");
  const auto dir_b = temp_dir("zero_b");
  auto cfg = micro_config(Algorithm::ZeroShot);
  const RunResult a = run_training(cfg, dir_a.string());
  const RunResult b = run_training(cfg, dir_b.string());
  CHECK(a.final_update == 0);
  CHECK_FALSE(a.aborted);
  CHECK(a.final_val.values.at("task_metric") ==
        b.final_val.values.at("task_metric"));
  CHECK(fs::exists(dir_a / "step-0.ckpt"));

  // Zero-shot leaves the policy identical to the reference model.
  const TrainState st = load_checkpoint((dir_a / "step-0.ckpt").string());
  CHECK(std::equal(st.policy.params().begin(), st.policy.params().end(),
                   st.ref.params().begin()));
}

TEST_CASE("two identical runs produce byte-identical learning curves") {
  const auto dir_a = temp_dir("det_a");
  const auto dir_b = temp_dir("det_b");
  const auto cfg = micro_config();
  run_training(cfg, dir_a.string());
  run_training(cfg, dir_b.string());
  const std::string csv_a = slurp(dir_a / "learning_curve.csv");
  CHECK(!csv_a.empty());
  CHECK(csv_a == slurp(dir_b / "learning_curve.csv"));
}

TEST_CASE("an interrupted run resumes to the identical curve") {
  const auto full_dir = temp_dir("resume_full");
  const auto split_dir = temp_dir("resume_split");
  const auto cfg = micro_config();
  run_training(cfg, full_dir.string());

  TrainOptions stop;
  stop.stop_after_update = 2;
  run_training(cfg, split_dir.string(), stop);
  CHECK(fs::exists(split_dir / "step-2.ckpt"));
  CHECK_FALSE(fs::exists(split_dir / "final_report.json"));
  run_training(cfg, split_dir.string());

  CHECK(slurp(full_dir / "learning_curve.csv") ==
        slurp(split_dir / "learning_curve.csv"));
  CHECK(slurp(full_dir / "final_report.json") ==
        slurp(split_dir / "final_report.json"));
}

TEST_CASE("resuming under a different config is refused") {
  const auto dir = temp_dir("resume_mismatch");
  auto cfg = micro_config();
  TrainOptions stop;
  stop.stop_after_update = 1;
  run_training(cfg, dir.string(), stop);
  cfg.algo.gamma = 0.5;
  CHECK_THROWS_WITH_AS(run_training(cfg, dir.string()),
                       doctest::Contains("config"), std::runtime_error);
}

TEST_CASE("warm-started RL anchors its reference to the supervised model") {
  const auto sup_dir = temp_dir("warm_sup");
  const auto rl_dir = temp_dir("warm_rl");
  const auto base_dir = temp_dir("warm_base");

  auto sup_cfg = micro_config(Algorithm::Supervised);
  run_training(sup_cfg, sup_dir.string());
  const TrainState sup = load_checkpoint((sup_dir / "step-0.ckpt").string());

  auto rl_cfg = micro_config(Algorithm::SupervisedPpo);
  rl_cfg.algo.updates = 1;
  run_training(rl_cfg, rl_dir.string());
  const TrainState rl = load_checkpoint((rl_dir / "step-1.ckpt").string());

  // Same data seed -> the warm checkpoint is the RL run's reference model.
  CHECK(std::equal(rl.ref.params().begin(), rl.ref.params().end(),
                   sup.policy.params().begin()));

  // Plain RL anchors to the pretrained base instead.
  auto ppo_cfg = micro_config(Algorithm::Ppo);
  ppo_cfg.algo.updates = 1;
  run_training(ppo_cfg, base_dir.string());
  const TrainState ppo = load_checkpoint((base_dir / "step-1.ckpt").string());
  CHECK(std::equal(ppo.ref.params().begin(), ppo.ref.params().end(),
                   sup.ref.params().begin()));
  bool differs = false;
  for (std::size_t i = 0; i < ppo.ref.params().size(); ++i) {
    if (ppo.ref.params()[i] != rl.ref.params()[i]) differs = true;
  }
  CHECK(differs);
}

TEST_CASE("every algorithm variant completes a miniature run") {
  for (const Algorithm algo :
       {Algorithm::A2c, Algorithm::Nlpo, Algorithm::SupervisedNlpo}) {
    const auto dir = temp_dir(std::string("algo_") + algorithm_name(algo));
    auto cfg = micro_config(algo);
    cfg.algo.updates = 2;
    const RunResult r = run_training(cfg, dir.string());
    CHECK_FALSE(r.aborted);
    CHECK(r.final_update == 2);
    CHECK(r.final_val.values.count("task_metric") == 1);
    CHECK(fs::exists(dir / "step-2.ckpt"));
    // Masked algorithms persist their snapshot state.
    const TrainState st = load_checkpoint((dir / "step-2.ckpt").string());
    CHECK(st.mask.has_value() == algorithm_uses_mask(algo));
  }
}

TEST_CASE("evaluation is a pure function of params, split, decode and seed") {
  const auto dir = temp_dir("eval_pure");
  auto cfg = micro_config(Algorithm::ZeroShot);
  run_training(cfg, dir.string());
  const TrainState st = load_checkpoint((dir / "step-0.ckpt").string());

  const Dataset ds = generate_task_dataset(
      cfg.task, cfg.data.seed, {cfg.data.train, cfg.data.val, cfg.data.test},
      {cfg.data.labeled, cfg.data.base_corpus, cfg.data.max_prompt_len});
  const auto clf = train_reward_classifier(ds.labeled, 1.0, cfg.data.seed);
  EvalInputs in;
  in.model = &st.policy;
  in.ref = &st.ref;
  in.task = cfg.task;
  in.eos_id = ds.vocab.eos_id();
  in.scorer = &clf;
  in.decode = cfg.decode;

  const auto a = evaluate_split(in, ds.val, Rng::stream(1, "e", 5));
  const auto b = evaluate_split(in, ds.val, Rng::stream(1, "e", 5));
  const auto c = evaluate_split(in, ds.val, Rng::stream(1, "e", 6));
  CHECK(a.values == b.values);
  CHECK(a.population == static_cast<int>(ds.val.size()));
  CHECK(a.values != c.values);  // a different stream samples differently
  CHECK(a.values.count("task_metric") == 1);
  CHECK(a.values.count("perplexity") == 1);
  CHECK(a.values.at("perplexity") >= 1.0);
}

TEST_CASE("a small ablation grid runs every cell and reports rows") {
  const auto dir = temp_dir("grid");
  auto cfg = micro_config();
  cfg.algo.updates = 2;
  cfg.data.train = 30;
  cfg.data.val = 8;
  cfg.data.test = 8;
  cfg.data.labeled = 120;
  cfg.data.base_corpus = 30;
  GridSpec grid;
  grid.axis = "gamma";
  grid.values = {"0.95", "1.0"};
  grid.seeds = {0, 1};
  grid.jobs = 2;
  run_ablation_grid(cfg, grid, dir.string(), false);

  CHECK(fs::exists(dir / "gamma=0.95" / "seed-0" / "final_report.json"));
  CHECK(fs::exists(dir / "gamma=0.95" / "seed-1" / "final_report.json"));
  CHECK(fs::exists(dir / "gamma=1.0" / "seed-0" / "final_report.json"));
  CHECK(fs::exists(dir / "gamma=1.0" / "seed-1" / "final_report.json"));

  const std::string csv = slurp(dir / "ablation.csv");
  CHECK(csv.find("gamma,seeds,failed") == 0);
  CHECK(csv.find("\n0.95,2,0,") != std::string::npos);
  CHECK(csv.find("\n1.0,2,0,") != std::string::npos);

  SUBCASE("axis validity is enforced") {
    GridSpec bad;
    bad.axis = "top_p";
    bad.values = {"0.5"};
    bad.seeds = {0};
    CHECK_THROWS_AS(run_ablation_grid(cfg, bad, temp_dir("grid2").string(),
                                      false),
                    std::invalid_argument);
  }
}

TEST_CASE("failed grid cells are recorded and the grid continues") {
  const auto dir = temp_dir("grid_fail");
  auto cfg = micro_config();
  cfg.algo.updates = 1;
  cfg.data = {4321, 30, 8, 8, 120, 30, 12};
  GridSpec grid;
  grid.axis = "target_kl";
  grid.values = {"0.05", "-1"};  // the second value fails config validation
  grid.seeds = {0};
  run_ablation_grid(cfg, grid, dir.string(), false);

  CHECK(fs::exists(dir / "target_kl=0.05" / "seed-0" / "final_report.json"));
  CHECK(fs::exists(dir / "target_kl=-1" / "seed-0" / "failed.txt"));
  const std::string csv = slurp(dir / "ablation.csv");
  CHECK(csv.find("\n0.05,1,0,") != std::string::npos);
  CHECK(csv.find("\n-1,1,1,") != std::string::npos);
}

TEST_CASE("learning-curve plots render from run directories") {
  const auto run_dir = temp_dir("plot_run");
  const auto out_dir = temp_dir("plot_out");
  auto cfg = micro_config();
  cfg.algo.updates = 2;
  run_training(cfg, run_dir.string());
  const int n = write_learning_curve_plots({run_dir.string()},
                                           out_dir.string(), false);
  CHECK(n == 3);
  const std::string svg = slurp(out_dir / "reward.svg");
  CHECK(svg.find("<svg") == 0);
  CHECK(svg.find("polyline") != std::string::npos);
  CHECK(svg.find("polygon") != std::string::npos);

  CHECK_THROWS_AS(write_learning_curve_plots({temp_dir("empty").string()},
                                             out_dir.string(), true),
                  std::runtime_error);
}
