#include "sffn/geometry.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>
#include <string>

namespace sffn {

MemoryGeometry MemoryGeometry::make(int d, int d_m, int g, int k) {
  auto fail = [&](const std::string& why) {
    throw std::invalid_argument("MemoryGeometry(d=" + std::to_string(d) +
                                ", d_m=" + std::to_string(d_m) +
                                ", g=" + std::to_string(g) +
                                ", k=" + std::to_string(k) + "): " + why);
  };
  if (d <= 0 || d_m <= 0 || g <= 0 || k <= 0) fail("all sizes must be > 0");
  if (d_m % g != 0) fail("block size g must divide memory size d_m");
  if (k % g != 0) fail("block size g must divide active cell count k");
  if (k > d_m) fail("active cells k cannot exceed memory size d_m");
  MemoryGeometry geom;
  geom.d = d;
  geom.d_m = d_m;
  geom.g = g;
  geom.k = k;
  geom.E = static_cast<double>(d_m) / (4.0 * static_cast<double>(d));
  return geom;
}

void validate_selection(const BlockSelection& sel, int num_blocks) {
  if (sel.indices.size() != sel.weights.size()) {
    throw std::invalid_argument(
        "BlockSelection: indices/weights length mismatch (" +
        std::to_string(sel.indices.size()) + " vs " +
        std::to_string(sel.weights.size()) + ")");
  }
  std::vector<int> sorted = sel.indices;
  std::sort(sorted.begin(), sorted.end());
  for (size_t i = 0; i < sorted.size(); ++i) {
    if (sorted[i] < 0 || sorted[i] >= num_blocks) {
      throw std::invalid_argument("BlockSelection: index " +
                                  std::to_string(sorted[i]) +
                                  " outside [0, " +
                                  std::to_string(num_blocks) + ")");
    }
    if (i > 0 && sorted[i] == sorted[i - 1]) {
      throw std::invalid_argument("BlockSelection: duplicate index " +
                                  std::to_string(sorted[i]));
    }
  }
}

void sort_selection(BlockSelection& sel) {
  const size_t n = sel.indices.size();
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), size_t{0});
  std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    return sel.indices[a] < sel.indices[b];
  });
  BlockSelection out;
  out.indices.reserve(n);
  out.weights.reserve(n);
  for (const size_t i : order) {
    out.indices.push_back(sel.indices[i]);
    out.weights.push_back(sel.weights[i]);
  }
  sel = std::move(out);
}

}  // namespace sffn
