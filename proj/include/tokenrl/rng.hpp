#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string_view>

namespace tokenrl {

// xoshiro256++ generator with explicit state so runs can be reproduced and
// resumed bit-exactly. All randomness in the library flows through named
// streams derived from a base seed; nothing uses ambient RNG state.
class Rng {
 public:
  Rng() : Rng(0) {}
  explicit Rng(std::uint64_t seed);

  // Derives an independent stream from (base_seed, name, a, b). The same
  // arguments always yield the same stream.
  static Rng stream(std::uint64_t base_seed, std::string_view name,
                    std::uint64_t a = 0, std::uint64_t b = 0);

  std::uint64_t next_u64();

  // Uniform in [0, 1).
  double next_double();

  // Uniform integer in [0, n). n must be > 0.
  std::uint64_t next_below(std::uint64_t n);

  // Standard normal via Box-Muller. Stateless across calls (no cached spare).
  double next_normal();

  // Draws an index from an unnormalized nonnegative weight vector.
  int categorical(std::span<const double> weights);

  std::array<std::uint64_t, 4> state() const { return s_; }
  void set_state(const std::array<std::uint64_t, 4>& s) { s_ = s; }

 private:
  std::array<std::uint64_t, 4> s_{};
};

}  // namespace tokenrl
