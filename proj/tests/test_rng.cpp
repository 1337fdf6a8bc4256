#include <algorithm>
#include <cmath>
#include <set>
#include <vector>

#include <doctest.h>

#include "dawgen/rng.hpp"

using namespace dawgen;

TEST_CASE("identical seeds give identical streams") {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) CHECK(a.uniform() == b.uniform());
}

TEST_CASE("uniform stays in [0,1)") {
  Rng r(1);
  for (int i = 0; i < 10000; ++i) {
    double u = r.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
  }
}

TEST_CASE("uniform_int respects the bound") {
  Rng r(2);
  for (int i = 0; i < 10000; ++i) CHECK(r.uniform_int(7) < 7);
}

TEST_CASE("derive_seed separates stages and indices") {
  std::set<std::uint64_t> seen;
  for (const char* stage : {"a", "b", "task", "synthesis"})
    for (int i = 0; i < 10; ++i) seen.insert(derive_seed(99, stage, i));
  CHECK(seen.size() == 40);

  CHECK(derive_seed(1, "x") != derive_seed(2, "x"));
  CHECK(derive_seed(1, "x") == derive_seed(1, "x"));
}

TEST_CASE("shuffle is a permutation and covers arrangements") {
  Rng r(5);
  std::vector<int> v = {0, 1, 2, 3, 4, 5, 6, 7};
  std::set<std::vector<int>> arrangements;
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<int> w = v;
    r.shuffle(w);
    std::vector<int> sorted = w;
    std::sort(sorted.begin(), sorted.end());
    CHECK(sorted == v);
    arrangements.insert(w);
  }
  CHECK(arrangements.size() > 150);  // 8! >> 200, repeats should be rare
}

TEST_CASE("sample_without_replacement yields distinct ids in range") {
  Rng r(6);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<int> got = r.sample_without_replacement(20, 8);
    CHECK(got.size() == 8);
    std::set<int> s(got.begin(), got.end());
    CHECK(s.size() == 8);
    for (int x : got) {
      CHECK(x >= 0);
      CHECK(x < 20);
    }
  }
}

TEST_CASE("normal draws have plausible moments") {
  Rng r(7);
  double sum = 0.0, sq = 0.0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    double x = r.normal();
    sum += x;
    sq += x * x;
  }
  double mean = sum / n;
  double var = sq / n - mean * mean;
  CHECK(std::abs(mean) < 0.05);
  CHECK(var == doctest::Approx(1.0).epsilon(0.05));
}
