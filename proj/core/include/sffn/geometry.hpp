#pragma once

#include <vector>

namespace sffn {

// Shape of one blocked key/value memory: d_m key/value rows of width d,
// grouped into B = d_m/g contiguous blocks of g cells; k cells (b = k/g
// blocks) are active per token. E records the size multiplier relative to a
// standard 4*d feed-forward (d_m = E * 4 * d); it is derived, may be
// fractional at desk scale, and is kept for reporting.
struct MemoryGeometry {
  int d = 0;
  int d_m = 0;
  int g = 0;
  int k = 0;
  double E = 0.0;

  int blocks() const { return d_m / g; }         // B
  int active_blocks() const { return k / g; }    // b

  // Validates: all positive, g | d_m, g | k, k <= d_m. Throws otherwise.
  static MemoryGeometry make(int d, int d_m, int g, int k);
};

// Which blocks a token routes to and with what gate weight. Indices are
// unique, in [0, B), and kept sorted ascending; weights pair elementwise.
struct BlockSelection {
  std::vector<int> indices;
  std::vector<double> weights;
};

// Throws std::invalid_argument on duplicate / out-of-range indices or a
// length mismatch between indices and weights.
void validate_selection(const BlockSelection& sel, int num_blocks);

// Sorts (indices, weights) pairs by index ascending, in place.
void sort_selection(BlockSelection& sel);

}  // namespace sffn
