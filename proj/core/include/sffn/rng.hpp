#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

namespace sffn {

// Deterministic counter-based random stream. A stream is fully determined by
// (seed, domain_tag, counter): the same triple yields the same draws on every
// platform (no std:: distributions are used anywhere). Distinct domain tags
// give statistically independent streams off one experiment seed, so
// subsystems (init, data order, hash gates, ...) never share draws.
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::string_view domain_tag,
            std::uint64_t counter = 0);

  std::uint64_t next_u64();

  // Uniform in [0, 1) with 53 random bits.
  double next_double();

  // Standard normal via Box-Muller (two uniforms per call, no caching).
  double next_normal();

  // Uniform integer in [0, n), unbiased (rejection sampling). n must be > 0.
  std::uint64_t uniform_below(std::uint64_t n);

  // k distinct values from [0, n), returned sorted ascending. k <= n.
  std::vector<int> sample_without_replacement(int n, int k);

 private:
  std::uint64_t s_[4];
};

}  // namespace sffn
