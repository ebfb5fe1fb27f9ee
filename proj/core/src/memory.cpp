#include "sffn/memory.hpp"

#include <stdexcept>
#include <string>

#include "sffn/ops.hpp"

namespace sffn {

namespace {

void check_table(const char* op, const Matrix& K, const Matrix& V, size_t d) {
  if (K.rows != V.rows || K.cols != V.cols ||
      static_cast<size_t>(K.cols) != d) {
    throw std::invalid_argument(
        std::string(op) + ": key/value tables must both be d_m x d; got K " +
        std::to_string(K.rows) + "x" + std::to_string(K.cols) + ", V " +
        std::to_string(V.rows) + "x" + std::to_string(V.cols) +
        ", x length " + std::to_string(d));
  }
}

}  // namespace

std::vector<double> dense_ffn(std::span<const double> x, const Matrix& K,
                              const Matrix& V) {
  check_table("dense_ffn", K, V, x.size());
  std::vector<double> y(x.size(), 0.0);
  for (int i = 0; i < K.rows; ++i) {
    const double m = gelu(dot(x, K.row(i)));
    axpy(m, V.row(i), y);
  }
  return y;
}

std::vector<Matrix> chunk_blocks(const Matrix& table, int g) {
  if (g <= 0 || table.rows % g != 0) {
    throw std::invalid_argument("chunk_blocks: block size " +
                                std::to_string(g) + " must divide row count " +
                                std::to_string(table.rows));
  }
  std::vector<Matrix> blocks;
  blocks.reserve(static_cast<size_t>(table.rows / g));
  for (int start = 0; start < table.rows; start += g) {
    Matrix blk(g, table.cols);
    for (int j = 0; j < g; ++j) {
      const auto src = table.row(start + j);
      std::copy(src.begin(), src.end(), blk.row(j).begin());
    }
    blocks.push_back(std::move(blk));
  }
  return blocks;
}

std::vector<double> sparse_apply(std::span<const double> x, const Matrix& K,
                                 const Matrix& V, const BlockSelection& sel,
                                 const MemoryGeometry& geom) {
  check_table("sparse_apply", K, V, x.size());
  if (K.rows != geom.d_m || static_cast<int>(x.size()) != geom.d) {
    throw std::invalid_argument("sparse_apply: tables/input disagree with geometry");
  }
  validate_selection(sel, geom.blocks());
  BlockSelection ordered = sel;
  sort_selection(ordered);
  std::vector<double> y(x.size(), 0.0);
  for (size_t s = 0; s < ordered.indices.size(); ++s) {
    const int block = ordered.indices[s];
    const double w = ordered.weights[s];
    const int base = block * geom.g;
    for (int j = 0; j < geom.g; ++j) {
      const int cell = base + j;
      const double coeff = w * gelu(dot(x, K.row(cell)));
      axpy(coeff, V.row(cell), y);
    }
  }
  return y;
}

std::vector<double> moe_standard(std::span<const double> x,
                                 const std::vector<Expert>& experts,
                                 std::span<const double> gate_weights) {
  if (experts.size() != gate_weights.size()) {
    throw std::invalid_argument("moe_standard: one gate weight per expert");
  }
  std::vector<double> y(x.size(), 0.0);
  for (size_t i = 0; i < experts.size(); ++i) {
    const auto out = dense_ffn(x, experts[i].first, experts[i].second);
    axpy(gate_weights[i], out, y);
  }
  return y;
}

std::vector<double> moe_as_memory(std::span<const double> x,
                                  const std::vector<Expert>& experts,
                                  std::span<const double> gate_weights) {
  if (experts.size() != gate_weights.size()) {
    throw std::invalid_argument("moe_as_memory: one gate weight per expert");
  }
  std::vector<double> y(x.size(), 0.0);
  // Flat cell order l = i*g + j: experts ascending, rows ascending within.
  for (size_t i = 0; i < experts.size(); ++i) {
    const Matrix& K = experts[i].first;
    const Matrix& V = experts[i].second;
    if (K.rows != V.rows || K.cols != V.cols ||
        static_cast<size_t>(K.cols) != x.size()) {
      throw std::invalid_argument("moe_as_memory: expert " +
                                  std::to_string(i) + " has bad shape");
    }
    for (int j = 0; j < K.rows; ++j) {
      const double coeff = gate_weights[i] * gelu(dot(x, K.row(j)));
      axpy(coeff, V.row(j), y);
    }
  }
  return y;
}

}  // namespace sffn
