#include "tokenrl/config.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <stdexcept>

namespace tokenrl {

namespace {

using nlohmann::json;

void reject_unknown_keys(const json& j, const std::set<std::string>& allowed,
                         const std::string& where) {
  if (!j.is_object()) {
    throw std::invalid_argument("config: \"" + where + "\" must be an object");
  }
  for (const auto& [key, value] : j.items()) {
    if (!allowed.count(key)) {
      throw std::invalid_argument("config: unknown key \"" + where + "." +
                                  key + "\"");
    }
  }
}

template <typename T>
void read(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

double read_kl_target(const json& j, double fallback) {
  if (!j.contains("target")) return fallback;
  const auto& t = j.at("target");
  if (t.is_string()) {
    const std::string s = t.get<std::string>();
    if (s == "inf" || s == "infinity") {
      return std::numeric_limits<double>::infinity();
    }
    throw std::invalid_argument("config: kl.target string must be \"inf\"");
  }
  return t.get<double>();
}

}  // namespace

std::string algorithm_name(Algorithm a) {
  switch (a) {
    case Algorithm::ZeroShot: return "zero-shot";
    case Algorithm::Supervised: return "supervised";
    case Algorithm::Ppo: return "ppo";
    case Algorithm::Nlpo: return "nlpo";
    case Algorithm::A2c: return "a2c";
    case Algorithm::SupervisedPpo: return "supervised+ppo";
    case Algorithm::SupervisedNlpo: return "supervised+nlpo";
  }
  throw std::logic_error("algorithm_name: bad enum");
}

Algorithm algorithm_from_name(const std::string& name) {
  if (name == "zero-shot") return Algorithm::ZeroShot;
  if (name == "supervised") return Algorithm::Supervised;
  if (name == "ppo") return Algorithm::Ppo;
  if (name == "nlpo") return Algorithm::Nlpo;
  if (name == "a2c") return Algorithm::A2c;
  if (name == "supervised+ppo") return Algorithm::SupervisedPpo;
  if (name == "supervised+nlpo") return Algorithm::SupervisedNlpo;
  throw std::invalid_argument("unknown algorithm: \"" + name + "\"");
}

bool algorithm_is_rl(Algorithm a) {
  return a == Algorithm::Ppo || a == Algorithm::Nlpo || a == Algorithm::A2c ||
         a == Algorithm::SupervisedPpo || a == Algorithm::SupervisedNlpo;
}

bool algorithm_uses_warm_start(Algorithm a) {
  return a == Algorithm::Supervised || a == Algorithm::SupervisedPpo ||
         a == Algorithm::SupervisedNlpo;
}

bool algorithm_uses_mask(Algorithm a) {
  return a == Algorithm::Nlpo || a == Algorithm::SupervisedNlpo;
}

void TrainConfig::validate() const {
  ModelConfig m = model;
  m.vocab_size = 4;  // resolved from the dataset later
  m.validate();
  if (model.context_len < data.max_prompt_len + decode.max_new_tokens) {
    throw std::invalid_argument(
        "config: model.context_len must cover max_prompt_len + "
        "max_new_tokens");
  }
  if (decode.max_new_tokens < 1) {
    throw std::invalid_argument("config: decode.max_new_tokens must be >= 1");
  }
  if (algorithm_is_rl(algorithm) && model.dropout > 0.0 &&
      !run.allow_dropout_in_rl) {
    throw std::invalid_argument(
        "config: dropout > 0 destabilizes policy-gradient training; set "
        "run.allow_dropout_in_rl to proceed anyway");
  }
  if (!std::isinf(kl.target) && kl.target <= 0.0) {
    throw std::invalid_argument("config: kl.target must be > 0 or \"inf\"");
  }
  if (kl.max_beta <= 0.0) {
    throw std::invalid_argument("config: kl.max_beta must be > 0");
  }
  if (reward.classifier_fraction <= 0.0 || reward.classifier_fraction > 1.0) {
    throw std::invalid_argument(
        "config: reward.classifier_fraction must be in (0, 1]");
  }
  if (nlpo.top_p <= 0.0 || nlpo.top_p > 1.0) {
    throw std::invalid_argument("config: nlpo.top_p must be in (0, 1]");
  }
  if (nlpo.mu < 1) throw std::invalid_argument("config: nlpo.mu must be >= 1");
  if (algo.updates < 0 || algo.episodes_per_update < 1 || algo.epochs < 0 ||
      algo.minibatch_steps < 1) {
    throw std::invalid_argument("config: bad algo schedule");
  }
  if (eval.interval < 1) {
    throw std::invalid_argument("config: eval.interval must be >= 1");
  }
  if (run.checkpoint_interval < 1) {
    throw std::invalid_argument("config: run.checkpoint_interval must be >= 1");
  }
}

nlohmann::json TrainConfig::to_json() const {
  json j;
  j["task"] = task_kind_name(task);
  j["algorithm"] = algorithm_name(algorithm);
  j["seed"] = seed;
  j["data"] = {{"seed", data.seed},
               {"train", data.train},
               {"val", data.val},
               {"test", data.test},
               {"labeled", data.labeled},
               {"base_corpus", data.base_corpus},
               {"max_prompt_len", data.max_prompt_len}};
  j["model"] = {{"d_model", model.d_model},
                {"n_heads", model.n_heads},
                {"n_layers", model.n_layers},
                {"d_ff", model.d_ff},
                {"context_len", model.context_len},
                {"dropout", model.dropout}};
  j["algo"] = {{"gamma", algo.gamma},
               {"lam", algo.lam},
               {"eps_clip", algo.eps_clip},
               {"vf_coef", algo.vf_coef},
               {"ent_coef", algo.ent_coef},
               {"max_grad_norm", algo.max_grad_norm},
               {"lr", algo.lr},
               {"epochs", algo.epochs},
               {"minibatch_steps", algo.minibatch_steps},
               {"episodes_per_update", algo.episodes_per_update},
               {"updates", algo.updates}};
  if (std::isinf(kl.target)) {
    j["kl"]["target"] = "inf";
  } else {
    j["kl"]["target"] = kl.target;
  }
  j["kl"]["initial_beta"] = kl.initial_beta;
  j["kl"]["gain"] = kl.gain;
  j["kl"]["clip"] = kl.clip;
  j["kl"]["max_beta"] = kl.max_beta;
  j["nlpo"] = {{"top_p", nlpo.top_p}, {"mu", nlpo.mu}};
  j["decode"] = {
      {"mode", decode.mode == DecodeConfig::Mode::Greedy ? "greedy" : "sample"},
      {"top_k", decode.top_k},
      {"top_p", decode.top_p},
      {"min_length", decode.min_length},
      {"max_new_tokens", decode.max_new_tokens},
      {"temperature", decode.temperature}};
  j["pretrain"] = {{"base_epochs", pretrain.base_epochs},
                   {"warm_epochs", pretrain.warm_epochs},
                   {"batch", pretrain.batch},
                   {"lr", pretrain.lr}};
  j["reward"] = {{"classifier_fraction", reward.classifier_fraction},
                 {"coverage_rouge_weight", reward.coverage_rouge_weight}};
  j["eval"] = {{"interval", eval.interval}};
  j["run"] = {{"checkpoint_interval", run.checkpoint_interval},
              {"rollout_workers", run.rollout_workers},
              {"allow_dropout_in_rl", run.allow_dropout_in_rl}};
  return j;
}

TrainConfig TrainConfig::from_json(const json& j) {
  reject_unknown_keys(j,
                      {"task", "algorithm", "seed", "data", "model", "algo",
                       "kl", "nlpo", "decode", "pretrain", "reward", "eval",
                       "run"},
                      "config");
  TrainConfig cfg;
  if (j.contains("task")) {
    cfg.task = task_kind_from_name(j.at("task").get<std::string>());
  }
  if (j.contains("algorithm")) {
    cfg.algorithm = algorithm_from_name(j.at("algorithm").get<std::string>());
  }
  read(j, "seed", cfg.seed);

  if (j.contains("data")) {
    const auto& d = j.at("data");
    reject_unknown_keys(d,
                        {"seed", "train", "val", "test", "labeled",
                         "base_corpus", "max_prompt_len"},
                        "data");
    read(d, "seed", cfg.data.seed);
    read(d, "train", cfg.data.train);
    read(d, "val", cfg.data.val);
    read(d, "test", cfg.data.test);
    read(d, "labeled", cfg.data.labeled);
    read(d, "base_corpus", cfg.data.base_corpus);
    read(d, "max_prompt_len", cfg.data.max_prompt_len);
  }
  if (j.contains("model")) {
    const auto& m = j.at("model");
    reject_unknown_keys(
        m, {"d_model", "n_heads", "n_layers", "d_ff", "context_len", "dropout"},
        "model");
    read(m, "d_model", cfg.model.d_model);
    read(m, "n_heads", cfg.model.n_heads);
    read(m, "n_layers", cfg.model.n_layers);
    read(m, "d_ff", cfg.model.d_ff);
    read(m, "context_len", cfg.model.context_len);
    read(m, "dropout", cfg.model.dropout);
  }
  if (j.contains("algo")) {
    const auto& a = j.at("algo");
    reject_unknown_keys(a,
                        {"gamma", "lam", "eps_clip", "vf_coef", "ent_coef",
                         "max_grad_norm", "lr", "epochs", "minibatch_steps",
                         "episodes_per_update", "updates"},
                        "algo");
    read(a, "gamma", cfg.algo.gamma);
    read(a, "lam", cfg.algo.lam);
    read(a, "eps_clip", cfg.algo.eps_clip);
    read(a, "vf_coef", cfg.algo.vf_coef);
    read(a, "ent_coef", cfg.algo.ent_coef);
    read(a, "max_grad_norm", cfg.algo.max_grad_norm);
    read(a, "lr", cfg.algo.lr);
    read(a, "epochs", cfg.algo.epochs);
    read(a, "minibatch_steps", cfg.algo.minibatch_steps);
    read(a, "episodes_per_update", cfg.algo.episodes_per_update);
    read(a, "updates", cfg.algo.updates);
  }
  if (j.contains("kl")) {
    const auto& k = j.at("kl");
    reject_unknown_keys(k, {"target", "initial_beta", "gain", "clip",
                            "max_beta"},
                        "kl");
    cfg.kl.target = read_kl_target(k, cfg.kl.target);
    read(k, "initial_beta", cfg.kl.initial_beta);
    read(k, "gain", cfg.kl.gain);
    read(k, "clip", cfg.kl.clip);
    read(k, "max_beta", cfg.kl.max_beta);
  }
  if (j.contains("nlpo")) {
    const auto& n = j.at("nlpo");
    reject_unknown_keys(n, {"top_p", "mu"}, "nlpo");
    read(n, "top_p", cfg.nlpo.top_p);
    read(n, "mu", cfg.nlpo.mu);
  }
  if (j.contains("decode")) {
    const auto& d = j.at("decode");
    reject_unknown_keys(d,
                        {"mode", "top_k", "top_p", "min_length",
                         "max_new_tokens", "temperature"},
                        "decode");
    if (d.contains("mode")) {
      const std::string mode = d.at("mode").get<std::string>();
      if (mode == "greedy") {
        cfg.decode.mode = DecodeConfig::Mode::Greedy;
      } else if (mode == "sample") {
        cfg.decode.mode = DecodeConfig::Mode::Sample;
      } else {
        throw std::invalid_argument("config: decode.mode must be greedy|sample");
      }
    }
    read(d, "top_k", cfg.decode.top_k);
    read(d, "top_p", cfg.decode.top_p);
    read(d, "min_length", cfg.decode.min_length);
    read(d, "max_new_tokens", cfg.decode.max_new_tokens);
    read(d, "temperature", cfg.decode.temperature);
  }
  if (j.contains("pretrain")) {
    const auto& p = j.at("pretrain");
    reject_unknown_keys(p, {"base_epochs", "warm_epochs", "batch", "lr"},
                        "pretrain");
    read(p, "base_epochs", cfg.pretrain.base_epochs);
    read(p, "warm_epochs", cfg.pretrain.warm_epochs);
    read(p, "batch", cfg.pretrain.batch);
    read(p, "lr", cfg.pretrain.lr);
  }
  if (j.contains("reward")) {
    const auto& r = j.at("reward");
    reject_unknown_keys(r, {"classifier_fraction", "coverage_rouge_weight"},
                        "reward");
    read(r, "classifier_fraction", cfg.reward.classifier_fraction);
    read(r, "coverage_rouge_weight", cfg.reward.coverage_rouge_weight);
  }
  if (j.contains("eval")) {
    const auto& e = j.at("eval");
    reject_unknown_keys(e, {"interval"}, "eval");
    read(e, "interval", cfg.eval.interval);
  }
  if (j.contains("run")) {
    const auto& r = j.at("run");
    reject_unknown_keys(
        r, {"checkpoint_interval", "rollout_workers", "allow_dropout_in_rl"},
        "run");
    read(r, "checkpoint_interval", cfg.run.checkpoint_interval);
    read(r, "rollout_workers", cfg.run.rollout_workers);
    read(r, "allow_dropout_in_rl", cfg.run.allow_dropout_in_rl);
  }
  return cfg;
}

void apply_override(json& config, const std::string& dotted_kv) {
  const auto eq = dotted_kv.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw std::invalid_argument("override must look like key.path=value: \"" +
                                dotted_kv + "\"");
  }
  const std::string path = dotted_kv.substr(0, eq);
  const std::string value = dotted_kv.substr(eq + 1);

  json* node = &config;
  std::size_t start = 0;
  for (;;) {
    const auto dot = path.find('.', start);
    const std::string key = path.substr(
        start, dot == std::string::npos ? std::string::npos : dot - start);
    if (key.empty()) {
      throw std::invalid_argument("override has an empty key segment: \"" +
                                  dotted_kv + "\"");
    }
    if (dot == std::string::npos) {
      json parsed;
      try {
        parsed = json::parse(value);
      } catch (const json::parse_error&) {
        parsed = value;  // fall back to a plain string ("inf", "ppo", ...)
      }
      (*node)[key] = parsed;
      return;
    }
    node = &(*node)[key];
    start = dot + 1;
  }
}

TrainConfig load_config_file(const std::string& path,
                             const std::vector<std::string>& overrides,
                             json* resolved) {
  json j = json::object();
  if (!path.empty()) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open config file: " + path);
    is >> j;
  }
  for (const auto& kv : overrides) apply_override(j, kv);
  TrainConfig cfg = TrainConfig::from_json(j);
  cfg.validate();
  if (resolved) *resolved = cfg.to_json();
  return cfg;
}

}  // namespace tokenrl
