#include "sffn/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace sffn {

namespace {

std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t rotl(std::uint64_t x, int k) {
  return (x << k) | (x >> (64 - k));
}

}  // namespace

RngStream::RngStream(std::uint64_t seed, std::string_view domain_tag,
                     std::uint64_t counter) {
  // Mix the triple through splitmix64 to fill the xoshiro256++ state; the
  // mixing keeps nearby (seed, counter) pairs statistically unrelated.
  std::uint64_t mix = seed;
  mix ^= rotl(fnv1a(domain_tag), 17);
  mix ^= rotl(counter, 43) + 0x9e3779b97f4a7c15ULL;
  s_[0] = splitmix64(mix);
  s_[1] = splitmix64(mix);
  s_[2] = splitmix64(mix);
  s_[3] = splitmix64(mix);
}

std::uint64_t RngStream::next_u64() {
  // xoshiro256++ step.
  const std::uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
  const std::uint64_t t = s_[1] << 17;
  s_[2] ^= s_[0];
  s_[3] ^= s_[1];
  s_[1] ^= s_[2];
  s_[0] ^= s_[3];
  s_[2] ^= t;
  s_[3] = rotl(s_[3], 45);
  return result;
}

double RngStream::next_double() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double RngStream::next_normal() {
  // Box-Muller; u is kept away from 0 so the log is finite.
  const double u = (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
  const double v = next_double();
  return std::sqrt(-2.0 * std::log(u)) *
         std::cos(2.0 * std::numbers::pi * v);
}

std::uint64_t RngStream::uniform_below(std::uint64_t n) {
  if (n == 0) throw std::invalid_argument("uniform_below: n must be > 0");
  // Rejection sampling over the largest multiple of n below 2^64.
  const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
  std::uint64_t x = next_u64();
  while (x >= limit) x = next_u64();
  return x % n;
}

std::vector<int> RngStream::sample_without_replacement(int n, int k) {
  if (k < 0 || n < 0 || k > n) {
    throw std::invalid_argument(
        "sample_without_replacement: need 0 <= k <= n");
  }
  std::vector<int> pool(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) pool[static_cast<size_t>(i)] = i;
  // Partial Fisher-Yates: the first k slots become the sample.
  for (int i = 0; i < k; ++i) {
    const auto j =
        i + static_cast<int>(uniform_below(static_cast<std::uint64_t>(n - i)));
    std::swap(pool[static_cast<size_t>(i)], pool[static_cast<size_t>(j)]);
  }
  pool.resize(static_cast<size_t>(k));
  std::sort(pool.begin(), pool.end());
  return pool;
}

}  // namespace sffn
