#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "tokenrl/rng.hpp"

using tokenrl::Rng;

TEST_CASE("rng streams are deterministic and independent") {
  Rng a = Rng::stream(42, "rollout", 3, 7);
  Rng b = Rng::stream(42, "rollout", 3, 7);
  Rng c = Rng::stream(42, "rollout", 3, 8);
  for (int i = 0; i < 100; ++i) {
    CHECK(a.next_u64() == b.next_u64());
  }
  bool any_diff = false;
  Rng a2 = Rng::stream(42, "rollout", 3, 7);
  for (int i = 0; i < 100; ++i) {
    if (a2.next_u64() != c.next_u64()) any_diff = true;
  }
  CHECK(any_diff);
}

TEST_CASE("rng doubles are in [0, 1)") {
  Rng rng(7);
  for (int i = 0; i < 10000; ++i) {
    const double u = rng.next_double();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
  }
}

TEST_CASE("rng state round-trips") {
  Rng rng(9);
  for (int i = 0; i < 17; ++i) rng.next_u64();
  const auto snap = rng.state();
  const auto expected = rng.next_u64();
  Rng restored;
  restored.set_state(snap);
  CHECK(restored.next_u64() == expected);
}

TEST_CASE("categorical matches weights on a degenerate distribution") {
  Rng rng(1);
  const double w[4] = {0.0, 1.0, 0.0, 0.0};
  for (int i = 0; i < 50; ++i) {
    CHECK(rng.categorical(w) == 1);
  }
}
