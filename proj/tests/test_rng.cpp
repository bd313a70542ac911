#include "latentflow/rng.hpp"

#include <cmath>
#include <vector>

#include "doctest.h"

using namespace latentflow;

TEST_SUITE_BEGIN("rng");

TEST_CASE("same seed reproduces the same stream") {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
  CHECK(a.normal() == b.normal());
}

TEST_CASE("child generators are stable per tag and distinct across tags") {
  Rng a = Rng::child(7, "train-vae");
  Rng b = Rng::child(7, "train-vae");
  Rng c = Rng::child(7, "train-flow");
  CHECK(a.next_u64() == b.next_u64());
  CHECK(a.next_u64() != c.next_u64());
}

TEST_CASE("uniform stays in [0,1) and has the right mean") {
  Rng rng(1);
  double acc = 0.0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    const double u = rng.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    acc += u;
  }
  CHECK(std::abs(acc / n - 0.5) < 0.01);
}

TEST_CASE("normal moments") {
  Rng rng(3);
  const int n = 50000;
  double s1 = 0.0, s2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double x = rng.normal();
    s1 += x;
    s2 += x * x;
  }
  CHECK(std::abs(s1 / n) < 0.02);
  CHECK(std::abs(s2 / n - 1.0) < 0.03);
}

TEST_CASE("uniform_index covers the range") {
  Rng rng(9);
  std::vector<int> counts(5, 0);
  for (int i = 0; i < 5000; ++i) counts[rng.uniform_index(5)]++;
  for (int c : counts) CHECK(c > 800);
}

TEST_CASE("shuffle is a permutation") {
  Rng rng(11);
  auto perm = rng.permutation(100);
  std::vector<bool> seen(100, false);
  for (auto i : perm) {
    CHECK_FALSE(seen[i]);
    seen[i] = true;
  }
}

TEST_SUITE_END();
