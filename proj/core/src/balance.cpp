#include "sffn/balance.hpp"

#include <algorithm>
#include <functional>
#include <stdexcept>

namespace sffn {

std::vector<double> load_balance_histogram(const RoutingTrace& trace,
                                           int num_blocks) {
  if (trace.events.empty()) {
    throw std::invalid_argument("load_balance_histogram: empty trace");
  }
  int blocks = num_blocks > 0 ? num_blocks : trace.num_blocks;
  if (blocks <= 0) {
    for (const auto& e : trace.events) {
      for (const int b : e.blocks) blocks = std::max(blocks, b + 1);
    }
  }
  std::vector<double> counts(static_cast<size_t>(blocks), 0.0);
  double total = 0.0;
  for (const auto& e : trace.events) {
    for (const int b : e.blocks) {
      if (b < 0 || b >= blocks) {
        throw std::invalid_argument(
            "load_balance_histogram: block id out of range");
      }
      counts[static_cast<size_t>(b)] += 1.0;
      total += 1.0;
    }
  }
  for (double& c : counts) c /= total;
  std::sort(counts.begin(), counts.end(), std::greater<>());
  return counts;
}

}  // namespace sffn
