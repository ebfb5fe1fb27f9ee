#include "sffn/overlap.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>
#include <utility>
#include <vector>

namespace sffn {

double expected_overlap_closed_form(int B, int b, int g) {
  if (B <= 0 || b < 0 || b > B || g <= 0) {
    throw std::invalid_argument("expected_overlap: need 0 <= b <= B, g > 0");
  }
  return static_cast<double>(g) * b * b / B;
}

double expected_overlap_analytical(int B, int b, int g) {
  if (B <= 0 || b < 0 || b > B || g <= 0) {
    throw std::invalid_argument("expected_overlap: need 0 <= b <= B, g > 0");
  }
  // P(|overlap| = i) for two independent uniform b-of-B draws without
  // replacement, hypergeometric: the two products deplete the same pool, so
  // the second product's denominator continues where the first stopped.
  double expectation = 0.0;
  for (int i = 1; i <= b; ++i) {
    double p = 1.0;
    // C(b, i)
    for (int j = 0; j < i; ++j) {
      p *= static_cast<double>(b - j) / static_cast<double>(j + 1);
    }
    for (int j = 0; j < i; ++j) {
      p *= static_cast<double>(b - j) / static_cast<double>(B - j);
    }
    for (int j = 0; j < b - i; ++j) {
      p *= static_cast<double>(B - b - j) / static_cast<double>(B - i - j);
    }
    expectation += p * static_cast<double>(i) * static_cast<double>(g);
  }
  return expectation;
}

OverlapEstimate expected_overlap_empirical(const RoutingTrace& trace,
                                           int pairs_per_seq, RngStream& rng,
                                           int block_size) {
  if (pairs_per_seq <= 0) {
    throw std::invalid_argument(
        "expected_overlap_empirical: pairs_per_seq must be > 0");
  }
  int g = block_size > 0 ? block_size : trace.block_size;
  if (g <= 0) {
    throw std::invalid_argument(
        "expected_overlap_empirical: block size unknown; pass block_size or "
        "annotate the trace");
  }
  // Group events by (layer, seq); ordered map keeps draw order deterministic.
  std::map<std::pair<int, int>, std::vector<const RouteEvent*>> groups;
  for (const auto& e : trace.events) {
    groups[{e.layer, e.seq}].push_back(&e);
  }
  struct LayerStats {
    std::int64_t n = 0;
    double sum = 0.0;
    double sumsq = 0.0;
  };
  std::map<int, LayerStats> per_layer;
  std::vector<int> scratch;
  for (const auto& [key, events] : groups) {
    const auto n = static_cast<std::uint64_t>(events.size());
    if (n < 2) continue;
    auto& stats = per_layer[key.first];
    for (int p = 0; p < pairs_per_seq; ++p) {
      const auto i = rng.uniform_below(n);
      auto j = rng.uniform_below(n);
      while (j == i) j = rng.uniform_below(n);  // distinct positions
      const auto& a = events[static_cast<size_t>(i)]->blocks;
      const auto& b = events[static_cast<size_t>(j)]->blocks;
      scratch.clear();
      std::set_intersection(a.begin(), a.end(), b.begin(), b.end(),
                            std::back_inserter(scratch));
      const double shared =
          static_cast<double>(scratch.size()) * static_cast<double>(g);
      stats.n += 1;
      stats.sum += shared;
      stats.sumsq += shared * shared;
    }
  }
  if (per_layer.empty()) {
    throw std::invalid_argument(
        "expected_overlap_empirical: no sequence has two or more events");
  }
  OverlapEstimate est;
  double mean_acc = 0.0;
  double var_acc = 0.0;  // variance of the average of per-layer means
  for (const auto& [layer, stats] : per_layer) {
    const double mean = stats.sum / static_cast<double>(stats.n);
    mean_acc += mean;
    if (stats.n > 1) {
      const double var =
          (stats.sumsq - stats.sum * stats.sum / static_cast<double>(stats.n)) /
          static_cast<double>(stats.n - 1);
      var_acc += std::max(var, 0.0) / static_cast<double>(stats.n);
    }
    est.pairs += stats.n;
  }
  const double layers = static_cast<double>(per_layer.size());
  est.mean = mean_acc / layers;
  est.std_error = std::sqrt(var_acc) / layers;
  return est;
}

}  // namespace sffn
