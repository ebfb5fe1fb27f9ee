#include <algorithm>
#include <cmath>
#include <set>
#include <vector>

#include "doctest.h"
#include "sffn/rng.hpp"

using namespace sffn;

TEST_CASE("identical (seed, tag, counter) triples replay exactly") {
  RngStream a(42, "alpha", 3);
  RngStream b(42, "alpha", 3);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
}

TEST_CASE("seed, tag, and counter each change the stream") {
  RngStream base(42, "alpha", 0);
  RngStream seed(43, "alpha", 0);
  RngStream tag(42, "beta", 0);
  RngStream ctr(42, "alpha", 1);
  const auto x = base.next_u64();
  CHECK(x != seed.next_u64());
  CHECK(x != tag.next_u64());
  CHECK(x != ctr.next_u64());
}

TEST_CASE("next_double stays in [0, 1)") {
  RngStream rng(7, "unit");
  for (int i = 0; i < 1000; ++i) {
    const double u = rng.next_double();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
  }
}

TEST_CASE("next_normal has roughly standard moments") {
  RngStream rng(11, "normal");
  const int n = 20000;
  double sum = 0.0, sq = 0.0;
  for (int i = 0; i < n; ++i) {
    const double z = rng.next_normal();
    sum += z;
    sq += z * z;
  }
  const double mean = sum / n;
  const double var = sq / n - mean * mean;
  CHECK(std::abs(mean) < 0.03);
  CHECK(std::abs(var - 1.0) < 0.05);
}

TEST_CASE("uniform_below respects the bound and covers small ranges") {
  RngStream rng(3, "uniform");
  std::set<std::uint64_t> seen;
  for (int i = 0; i < 200; ++i) {
    const auto v = rng.uniform_below(5);
    CHECK(v < 5);
    seen.insert(v);
  }
  CHECK(seen.size() == 5);
  CHECK_THROWS(rng.uniform_below(0));
}

TEST_CASE("sample_without_replacement is sorted, distinct, in range") {
  RngStream rng(9, "sample");
  for (int trial = 0; trial < 50; ++trial) {
    const auto s = rng.sample_without_replacement(20, 7);
    REQUIRE(s.size() == 7);
    CHECK(std::is_sorted(s.begin(), s.end()));
    for (std::size_t i = 1; i < s.size(); ++i) CHECK(s[i] != s[i - 1]);
    for (int v : s) {
      CHECK(v >= 0);
      CHECK(v < 20);
    }
  }
  // k = n returns everything.
  const auto all = rng.sample_without_replacement(6, 6);
  CHECK(all == std::vector<int>{0, 1, 2, 3, 4, 5});
  CHECK_THROWS(rng.sample_without_replacement(3, 4));
}
