#pragma once

#include <span>
#include <utility>
#include <vector>

#include "sffn/geometry.hpp"
#include "sffn/matrix.hpp"

namespace sffn {

// y = sum_i gelu(x . k_i) * v_i over all d_m cells, accumulated cell by cell
// in ascending index order. K and V are d_m x d; x has length d.
std::vector<double> dense_ffn(std::span<const double> x, const Matrix& K,
                              const Matrix& V);

// Splits a d_m x d table into B = d_m/g consecutive g x d blocks.
// Throws if g does not divide the row count.
std::vector<Matrix> chunk_blocks(const Matrix& table, int g);

// y = sum_{i in sel} w_i * sum_{j<g} gelu(x . k_j^(i)) * v_j^(i).
// The weight is folded per cell ((w*m)*v) and blocks are visited in
// ascending index order, then cells ascending — so selecting every block
// with weight 1 reproduces dense_ffn bit for bit.
std::vector<double> sparse_apply(std::span<const double> x, const Matrix& K,
                                 const Matrix& V, const BlockSelection& sel,
                                 const MemoryGeometry& geom);

// One expert = one (keys, values) pair, each g x d.
using Expert = std::pair<Matrix, Matrix>;

// Literal mixture-of-experts: y = sum_i gate[i] * dense_ffn(x, K_i, V_i).
std::vector<double> moe_standard(std::span<const double> x,
                                 const std::vector<Expert>& experts,
                                 std::span<const double> gate_weights);

// The same mixture computed as one flat memory: cell l = i*g + j carries
// coefficient gate[i] * gelu(x . k_j^(i)) and value v_j^(i); y accumulates
// over l ascending. Agrees with moe_standard to 1e-10 relative.
std::vector<double> moe_as_memory(std::span<const double> x,
                                  const std::vector<Expert>& experts,
                                  std::span<const double> gate_weights);

}  // namespace sffn
