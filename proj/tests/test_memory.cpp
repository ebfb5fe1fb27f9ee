#include <cmath>
#include <vector>

#include "doctest.h"
#include "sffn/memory.hpp"
#include "sffn/ops.hpp"
#include "sffn/rng.hpp"

using namespace sffn;

namespace {

Matrix random_matrix(int r, int c, RngStream& rng, double scale = 1.0) {
  Matrix m(r, c);
  for (auto& x : m.data) x = scale * rng.next_normal();
  return m;
}

std::vector<double> random_vec(int n, RngStream& rng) {
  std::vector<double> v(static_cast<std::size_t>(n));
  for (auto& x : v) x = rng.next_normal();
  return v;
}

double max_rel_err(const std::vector<double>& a, const std::vector<double>& b) {
  REQUIRE(a.size() == b.size());
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double denom = std::max({std::abs(a[i]), std::abs(b[i]), 1e-12});
    worst = std::max(worst, std::abs(a[i] - b[i]) / denom);
  }
  return worst;
}

}  // namespace

TEST_CASE("dense_ffn equals the cell-by-cell definition") {
  RngStream rng(5, "mem.dense");
  const int d = 6, d_m = 10;
  const Matrix K = random_matrix(d_m, d, rng);
  const Matrix V = random_matrix(d_m, d, rng);
  const auto x = random_vec(d, rng);

  std::vector<double> want(d, 0.0);
  for (int i = 0; i < d_m; ++i) {
    const double m = gelu(dot(x, K.row(i)));
    for (int j = 0; j < d; ++j) want[j] += m * V(i, j);
  }
  CHECK(dense_ffn(x, K, V) == want);  // same accumulation order -> same bits
}

TEST_CASE("chunk_blocks splits consecutive rows") {
  RngStream rng(6, "mem.chunk");
  const Matrix table = random_matrix(8, 3, rng);
  const auto blocks = chunk_blocks(table, 4);
  REQUIRE(blocks.size() == 2);
  for (int b = 0; b < 2; ++b)
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 3; ++j)
        CHECK(blocks[b](i, j) == table(b * 4 + i, j));
  CHECK_THROWS(chunk_blocks(table, 3));
}

TEST_CASE("full unit-weight selection reproduces dense_ffn bit for bit") {
  RngStream rng(7, "mem.full");
  const MemoryGeometry geom = MemoryGeometry::make(5, 24, 4, 24);
  for (int trial = 0; trial < 10; ++trial) {
    const Matrix K = random_matrix(geom.d_m, geom.d, rng);
    const Matrix V = random_matrix(geom.d_m, geom.d, rng);
    const auto x = random_vec(geom.d, rng);
    BlockSelection all;
    for (int i = 0; i < geom.blocks(); ++i) {
      all.indices.push_back(i);
      all.weights.push_back(1.0);
    }
    CHECK(sparse_apply(x, K, V, all, geom) == dense_ffn(x, K, V));
  }
}

TEST_CASE("sparse_apply folds the gate weight per cell") {
  RngStream rng(8, "mem.fold");
  const MemoryGeometry geom = MemoryGeometry::make(4, 12, 3, 6);
  const Matrix K = random_matrix(geom.d_m, geom.d, rng);
  const Matrix V = random_matrix(geom.d_m, geom.d, rng);
  const auto x = random_vec(geom.d, rng);
  const BlockSelection sel{{1, 3}, {0.25, -1.5}};

  std::vector<double> want(geom.d, 0.0);
  for (std::size_t s = 0; s < sel.indices.size(); ++s) {
    for (int j = 0; j < geom.g; ++j) {
      const int cell = sel.indices[s] * geom.g + j;
      const double coeff = sel.weights[s] * gelu(dot(x, K.row(cell)));
      for (int c = 0; c < geom.d; ++c) want[c] += coeff * V(cell, c);
    }
  }
  CHECK(sparse_apply(x, K, V, sel, geom) == want);
}

TEST_CASE("sparse_apply validates the selection") {
  RngStream rng(9, "mem.val");
  const MemoryGeometry geom = MemoryGeometry::make(4, 12, 3, 6);
  const Matrix K = random_matrix(geom.d_m, geom.d, rng);
  const Matrix V = random_matrix(geom.d_m, geom.d, rng);
  const auto x = random_vec(geom.d, rng);
  CHECK_THROWS(sparse_apply(x, K, V, BlockSelection{{4}, {1.0}}, geom));
  CHECK_THROWS(sparse_apply(x, K, V, BlockSelection{{0, 0}, {1.0, 1.0}}, geom));
}

TEST_CASE("mixture of experts equals the flat-memory view") {
  RngStream rng(10, "mem.moe");
  for (int trial = 0; trial < 20; ++trial) {
    const int B = 1 + static_cast<int>(rng.uniform_below(8));
    const int g = 1 + static_cast<int>(rng.uniform_below(8));
    const int d = 1 + static_cast<int>(rng.uniform_below(8));
    std::vector<Expert> experts;
    std::vector<double> gates;
    for (int i = 0; i < B; ++i) {
      experts.emplace_back(random_matrix(g, d, rng), random_matrix(g, d, rng));
      gates.push_back(rng.next_double());
    }
    const auto x = random_vec(d, rng);
    const auto a = moe_standard(x, experts, gates);
    const auto b = moe_as_memory(x, experts, gates);
    CHECK(max_rel_err(a, b) <= 1e-10);
  }
}

TEST_CASE("mixture degenerate gates") {
  RngStream rng(11, "mem.moe2");
  const int B = 4, g = 3, d = 5;
  std::vector<Expert> experts;
  for (int i = 0; i < B; ++i)
    experts.emplace_back(random_matrix(g, d, rng), random_matrix(g, d, rng));
  const auto x = random_vec(d, rng);

  // All-zero gates give the zero vector.
  const std::vector<double> zeros(B, 0.0);
  for (double y : moe_standard(x, experts, zeros)) CHECK(y == 0.0);

  // A one-hot gate gives that expert's memory output.
  std::vector<double> onehot(B, 0.0);
  onehot[2] = 1.0;
  const auto out = moe_standard(x, experts, onehot);
  const auto want = dense_ffn(x, experts[2].first, experts[2].second);
  CHECK(max_rel_err(out, want) <= 1e-12);

  // B = 1 equals dense_ffn scaled by the single gate.
  std::vector<Expert> one;
  one.emplace_back(experts[0].first, experts[0].second);
  const std::vector<double> half{0.5};
  const auto scaled = moe_standard(x, one, half);
  const auto base = dense_ffn(x, one[0].first, one[0].second);
  for (std::size_t i = 0; i < scaled.size(); ++i)
    CHECK(scaled[i] == doctest::Approx(0.5 * base[i]).epsilon(1e-14));
}
