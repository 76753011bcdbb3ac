#include "tokenrl/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

namespace tokenrl {

namespace {

constexpr char kMagic[8] = {'T', 'R', 'L', 'C', 'K', 'P', 'T', '1'};

void write_u64(std::ostream& os, std::uint64_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

std::uint64_t read_u64(std::istream& is) {
  std::uint64_t v = 0;
  is.read(reinterpret_cast<char*>(&v), sizeof(v));
  return v;
}

void write_doubles(std::ostream& os, std::span<const double> v) {
  write_u64(os, v.size());
  os.write(reinterpret_cast<const char*>(v.data()),
           static_cast<std::streamsize>(v.size() * sizeof(double)));
}

std::vector<double> read_doubles(std::istream& is) {
  const std::uint64_t n = read_u64(is);
  std::vector<double> v(n);
  is.read(reinterpret_cast<char*>(v.data()),
          static_cast<std::streamsize>(n * sizeof(double)));
  return v;
}

void write_string(std::ostream& os, const std::string& s) {
  write_u64(os, s.size());
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string read_string(std::istream& is) {
  const std::uint64_t n = read_u64(is);
  std::string s(n, '\0');
  is.read(s.data(), static_cast<std::streamsize>(n));
  return s;
}

nlohmann::json model_cfg_json(const ModelConfig& m) {
  return {{"vocab_size", m.vocab_size}, {"d_model", m.d_model},
          {"n_heads", m.n_heads},       {"n_layers", m.n_layers},
          {"d_ff", m.d_ff},             {"context_len", m.context_len},
          {"dropout", m.dropout},       {"seed", m.seed}};
}

ModelConfig model_cfg_from_json(const nlohmann::json& j) {
  ModelConfig m;
  m.vocab_size = j.at("vocab_size").get<int>();
  m.d_model = j.at("d_model").get<int>();
  m.n_heads = j.at("n_heads").get<int>();
  m.n_layers = j.at("n_layers").get<int>();
  m.d_ff = j.at("d_ff").get<int>();
  m.context_len = j.at("context_len").get<int>();
  m.dropout = j.at("dropout").get<double>();
  m.seed = j.at("seed").get<std::uint64_t>();
  return m;
}

}  // namespace

void save_checkpoint(const std::string& path, const TrainState& state) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write checkpoint: " + path);

  os.write(kMagic, sizeof(kMagic));
  write_string(os, state.cfg.to_json().dump());
  write_string(os, model_cfg_json(state.model_cfg).dump());
  write_u64(os, static_cast<std::uint64_t>(state.update_index));
  write_u64(os, state.policy.version());

  write_doubles(os, state.policy.params());
  write_doubles(os, state.ref.params());

  write_doubles(os, state.opt.m);
  write_doubles(os, state.opt.v);
  write_u64(os, static_cast<std::uint64_t>(state.opt.step));

  const double kl_fields[5] = {state.kl.beta, state.kl.target_kl,
                               state.kl.gain, state.kl.clip,
                               state.kl.max_beta};
  write_doubles(os, kl_fields);

  const std::uint8_t has_mask = state.mask.has_value() ? 1 : 0;
  os.write(reinterpret_cast<const char*>(&has_mask), 1);
  if (state.mask) {
    const double mask_fields[2] = {state.mask->top_p,
                                   static_cast<double>(state.mask->counter)};
    write_doubles(os, mask_fields);
    write_u64(os, static_cast<std::uint64_t>(state.mask->mu));
    write_doubles(os, state.mask->snapshot.params());
  }
  if (!os) throw std::runtime_error("checkpoint write failed: " + path);
}

TrainState load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open checkpoint: " + path);

  char magic[8];
  is.read(magic, sizeof(magic));
  if (std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw std::runtime_error("not a checkpoint file: " + path);
  }

  TrainState state;
  state.cfg = TrainConfig::from_json(nlohmann::json::parse(read_string(is)));
  state.model_cfg = model_cfg_from_json(nlohmann::json::parse(read_string(is)));
  state.update_index = static_cast<int>(read_u64(is));
  const std::uint64_t version = read_u64(is);

  state.policy =
      PolicyModel::from_params(state.model_cfg, read_doubles(is), version);
  state.ref = PolicyModel::from_params(state.model_cfg, read_doubles(is));

  state.opt.m = read_doubles(is);
  state.opt.v = read_doubles(is);
  state.opt.step = static_cast<long>(read_u64(is));

  const auto kl_fields = read_doubles(is);
  if (kl_fields.size() != 5) {
    throw std::runtime_error("corrupt checkpoint (kl block): " + path);
  }
  state.kl.beta = kl_fields[0];
  state.kl.target_kl = kl_fields[1];
  state.kl.gain = kl_fields[2];
  state.kl.clip = kl_fields[3];
  state.kl.max_beta = kl_fields[4];

  std::uint8_t has_mask = 0;
  is.read(reinterpret_cast<char*>(&has_mask), 1);
  if (has_mask) {
    MaskState mask;
    const auto mask_fields = read_doubles(is);
    if (mask_fields.size() != 2) {
      throw std::runtime_error("corrupt checkpoint (mask block): " + path);
    }
    mask.top_p = mask_fields[0];
    mask.counter = static_cast<int>(mask_fields[1]);
    mask.mu = static_cast<int>(read_u64(is));
    mask.snapshot = PolicyModel::from_params(state.model_cfg, read_doubles(is));
    state.mask = std::move(mask);
  }
  if (!is) throw std::runtime_error("checkpoint read failed: " + path);
  return state;
}

}  // namespace tokenrl
