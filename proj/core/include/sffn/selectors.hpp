#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sffn/geometry.hpp"
#include "sffn/matrix.hpp"
#include "sffn/norm.hpp"
#include "sffn/rng.hpp"

namespace sffn {

// ---------------------------------------------------------------------------
// Selector taxonomy. "Block-level" methods pick b = k/g blocks out of B;
// "cell-level" methods (g = 1 views) pick k individual cells out of d_m.
// ---------------------------------------------------------------------------
enum class SelectorKind {
  Dense,        // no routing: every cell active
  VanillaM,     // top-b blocks by aggregated post-GeLU coefficients
  AvgK,         // top-b blocks by (block-average key) . x, hard weights
  RandHash,     // static per-token-type random blocks
  Switch,       // learned softmax gate, top-1 block, soft weight
  Pkm,          // product-key factorized coefficients, top-k cells
  Lorkm,        // low-rank factorized coefficients, top-k cells
  PkmFfn,       // full memory gated cell-wise by a product-key scorer
  Controller,   // per-block argmax cell (optionally low-rank scored)
  NaiveAnn,     // exact top-k with a percentage of members swapped out
};

const char* selector_name(SelectorKind kind);
std::optional<SelectorKind> selector_from_name(std::string_view name);

enum class Aggregator { Avg, AvgAbs, Max, Min };

const char* aggregator_name(Aggregator agg);
std::optional<Aggregator> aggregator_from_name(std::string_view name);

// ---------------------------------------------------------------------------
// Full-key block selectors
// ---------------------------------------------------------------------------

// Per-block aggregate of precomputed cell coefficients m (length d_m with
// g cells per block). Avg/AvgAbs divide by g. Returns d_m / g scores.
std::vector<double> aggregate_block_scores(std::span<const double> m, int g,
                                           Aggregator agg);

// Per-block aggregate of the post-GeLU coefficients gelu(x . k_j).
// Returns B scores.
std::vector<double> score_vanilla(std::span<const double> x, const Matrix& K,
                                  const MemoryGeometry& geom, Aggregator agg);

// Top-b blocks of score_vanilla, unit weights.
BlockSelection select_vanillam(std::span<const double> x, const Matrix& K,
                               const MemoryGeometry& geom, Aggregator agg);

// e_i = mean of block i's key rows; score_i = e_i . x. Linear in x: equals
// the mean of the per-cell dot products before any activation.
std::vector<double> score_avgk(std::span<const double> x, const Matrix& K,
                               const MemoryGeometry& geom);

// Top-b blocks of score_avgk, hard unit weights (no gate gradient).
BlockSelection select_avgk(std::span<const double> x, const Matrix& K,
                           const MemoryGeometry& geom);

// ---------------------------------------------------------------------------
// Static hash routing
// ---------------------------------------------------------------------------

// Fixed token-type -> blocks table: row t holds b distinct block ids drawn
// without replacement from a stream keyed by (seed, "randhash", t).
struct HashGateTable {
  int vocab_size = 0;
  int num_blocks = 0;     // B
  int active_blocks = 0;  // b
  std::vector<int> ids;   // vocab_size x b, row-major, rows sorted ascending

  std::span<const int> row(int token_id) const {
    return {ids.data() +
                static_cast<size_t>(token_id) *
                    static_cast<size_t>(active_blocks),
            static_cast<size_t>(active_blocks)};
  }
};

HashGateTable build_randhash(int vocab_size, const MemoryGeometry& geom,
                             std::uint64_t seed);

// The token's static blocks, unit weights. Independent of x and of time.
BlockSelection select_randhash(int token_id, const HashGateTable& table);

// ---------------------------------------------------------------------------
// Learned softmax gate (top-1)
// ---------------------------------------------------------------------------

// softmax over expert-embedding logits e_i . x; expert_emb is B x d.
std::vector<double> gate_softmax(std::span<const double> x,
                                 const Matrix& expert_emb);

// Argmax block (ties -> lowest index), weight = its probability (soft,
// gradient-bearing).
BlockSelection select_switch(std::span<const double> x,
                             const Matrix& expert_emb);

// ---------------------------------------------------------------------------
// Factorized key scorers (cell-level coefficients)
// ---------------------------------------------------------------------------

// Keys factorized as K^T ~ D * Ktilde^T: coefficient m_i = gelu(t . kt_i)
// with t = norm(x . D).
struct LowRankKeys {
  Matrix D;       // d x d_ell
  Matrix Ktilde;  // d_m x d_ell
  bool use_norm = false;
  BatchNorm1d norm;  // over d_ell features
};

LowRankKeys make_low_rank_keys(int d, int d_m, int d_ell, bool use_norm);

// Product-key table: sub-keys C, Cprime each r x (d_ell/2) with r = sqrt(d_m).
// Cell i pairs sub-key rows (i / r, i mod r):
//   m_i = gelu(s[i / r] + s'[i mod r]),  s = t_head . C^T, s' = t_tail . C'^T.
struct ProductKeys {
  Matrix D;       // d x d_ell
  Matrix C;       // r x d_ell/2
  Matrix Cprime;  // r x d_ell/2
  bool use_norm = true;
  BatchNorm1d norm;  // over d_ell features

  int side() const { return C.rows; }               // r
  int memory_size() const { return C.rows * C.rows; }  // d_m = r*r
};

ProductKeys make_product_keys(int d, int d_m, int d_ell, bool use_norm);

// Single-token coefficient vectors (d_m long). When norm is enabled these
// ops normalize with the running averages (eval mode); training uses the
// batched path in the layer.
std::vector<double> lorkm_scores(std::span<const double> x,
                                 const LowRankKeys& keys);
std::vector<double> pkm_scores(std::span<const double> x,
                               const ProductKeys& keys);

// Top-k cells of the product-key coefficients; weights are the coefficients
// themselves (soft, gradient-bearing). The caller applies them against a
// full-parameter key/value memory in a g = 1 view.
BlockSelection select_pkm_ffn(std::span<const double> x,
                              const ProductKeys& keys, int k);

// ---------------------------------------------------------------------------
// Per-block argmax controller
// ---------------------------------------------------------------------------

// For every block i picks cell j* = argmax_j score(i, j), returning B
// cell-level indices (block*g + j*). With controller == nullptr the score is
// the raw key dot x . k_j^(i) and the weight is 1; with a low-rank controller
// the score and weight are ((x . D) . Ktilde^T) at the winning cell.
BlockSelection select_controller(std::span<const double> x, const Matrix& K,
                                 const MemoryGeometry& geom,
                                 const LowRankKeys* controller = nullptr);

// ---------------------------------------------------------------------------
// Sabotaged exact search
// ---------------------------------------------------------------------------

// Exact top-k of scores, then floor(sabotage_pct * k / 100) members (chosen
// uniformly) are replaced by uniformly chosen non-members. Swapped-in cells
// keep their true coefficients downstream. sabotage_pct = 0 reproduces the
// exact top-k bit for bit. Unit weights.
BlockSelection select_naive_ann(std::span<const double> scores, int k,
                                double sabotage_pct, RngStream& rng);

}  // namespace sffn
