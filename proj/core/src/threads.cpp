#include "sffn/threads.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <thread>
#include <vector>

namespace sffn {

namespace {

std::atomic<int> g_threads{0};  // 0 = not resolved yet

int resolve_from_env() {
  const char* env = std::getenv("SFFN_THREADS");
  if (env == nullptr) return 1;
  const long v = std::strtol(env, nullptr, 10);
  if (v < 1) return 1;
  return static_cast<int>(std::min<long>(v, 256));
}

}  // namespace

int max_threads() {
  int cur = g_threads.load(std::memory_order_relaxed);
  if (cur == 0) {
    cur = resolve_from_env();
    g_threads.store(cur, std::memory_order_relaxed);
  }
  return cur;
}

void set_max_threads(int n) {
  g_threads.store(n < 1 ? 1 : n, std::memory_order_relaxed);
}

void parallel_for(int begin, int end, long cost_hint,
                  const std::function<void(int, int)>& fn) {
  const int span = end - begin;
  if (span <= 0) return;
  // Thread spawn costs ~50us; only split work that dwarfs that.
  constexpr long kMinCost = 1 << 18;
  const int want = std::min(span, max_threads());
  if (want <= 1 || cost_hint < kMinCost) {
    fn(begin, end);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(static_cast<size_t>(want) - 1);
  const int chunk = (span + want - 1) / want;
  int lo = begin;
  for (int t = 0; t < want - 1 && lo < end; ++t) {
    const int hi = std::min(end, lo + chunk);
    pool.emplace_back(fn, lo, hi);
    lo = hi;
  }
  if (lo < end) fn(lo, end);
  for (auto& th : pool) th.join();
}

}  // namespace sffn
