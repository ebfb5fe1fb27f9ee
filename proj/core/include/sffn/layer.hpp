#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sffn/checkpoint.hpp"
#include "sffn/geometry.hpp"
#include "sffn/matrix.hpp"
#include "sffn/norm.hpp"
#include "sffn/selectors.hpp"

namespace sffn {

enum class RunMode { Train, Eval };

struct SffnLayerConfig {
  SelectorKind kind = SelectorKind::Dense;
  MemoryGeometry geom;
  Aggregator aggregator = Aggregator::Avg;
  int d_ell = 0;                    // factorized query width
  bool batch_norm = false;          // normalize the factorized query
  bool controller_low_rank = false; // score blocks with a low-rank controller
  double sabotage_pct = 0.0;        // swapped-out fraction for NaiveAnn
  int vocab_size = 0;               // RandHash table size
  std::uint64_t seed = 0;           // RandHash table / NaiveAnn swap streams
};

// Non-owning handle to one trainable tensor.
struct ParamRef {
  std::string name;
  Matrix* value = nullptr;
  Matrix* grad = nullptr;
  bool expert = false;  // block parameters subject to expert-grad scaling
};

// Per-token routing record. `view` holds the ids analysis sees: block ids
// for block-level selectors, cell ids for cell-level ones (a g = 1 view).
struct TokenRouting {
  std::vector<int> view;
  std::vector<double> u;  // full-key pre-activations for the active cells
  std::vector<double> q;  // factorized pre-activations
  std::vector<double> m;  // factorized post-GeLU coefficients
  std::vector<double> w;  // per-cell controller weights (low-rank scoring)
  int switch_block = -1;
};

struct SffnLayerCache {
  Matrix X;
  std::vector<int> token_ids;
  std::vector<TokenRouting> routes;
  RunMode mode = RunMode::Train;
  Matrix U;           // full coefficient pre-activations (dense-style scans)
  Matrix probs;       // Switch router probabilities (N x B)
  Matrix T_pre, T;    // factorized query before/after normalization
  Matrix Tc;          // low-rank controller query
  BatchNormCache bn;
};

// One key/value memory layer with parameterized block selection and manual
// gradients. Selection indices are treated as constants by backward();
// soft gate weights (Switch probability, product-key coefficients, low-rank
// controller scores) carry gradient.
class SffnLayer {
 public:
  SffnLayer() = default;
  SffnLayer(const SffnLayerConfig& cfg, std::string param_prefix);

  const SffnLayerConfig& config() const { return cfg_; }

  void init_params(std::uint64_t seed);

  bool routes_tokens() const { return cfg_.kind != SelectorKind::Dense; }
  bool cell_level() const;
  int view_blocks() const;      // B of the recorded view
  int view_block_size() const;  // g of the recorded view

  // Runs the layer over N tokens (rows of X). token_ids feed the static
  // hash gate; step keys the NaiveAnn swap stream. Y receives the output.
  SffnLayerCache forward(const Matrix& X, const std::vector<int>& token_ids,
                         RunMode mode, long step, Matrix& Y,
                         bool update_norm_stats = true);

  // Same computation with the routing pinned to base's choices; soft weights
  // are recomputed from current parameters. Used for gradient checking.
  SffnLayerCache forward_frozen(const Matrix& X,
                                const std::vector<int>& token_ids,
                                const SffnLayerCache& base, Matrix& Y);

  // Accumulates parameter gradients and returns dX. dProbs (N x B) adds
  // gradient into the Switch router probabilities (the balance penalty);
  // pass an empty matrix when unused.
  Matrix backward(const SffnLayerCache& cache, const Matrix& dY,
                  const Matrix& dProbs);

  std::vector<ParamRef> params();
  // Everything persistence needs: trainable tensors plus normalizer
  // running statistics.
  std::vector<NamedTensor> state() const;
  void load_state(const std::vector<NamedTensor>& tensors);
  void zero_grads();

 private:
  SffnLayerCache run(const Matrix& X, const std::vector<int>& token_ids,
                     RunMode mode, long step, Matrix& Y,
                     bool update_norm_stats, const SffnLayerCache* frozen);

  SffnLayerConfig cfg_;
  std::string prefix_;

  Matrix keys_, d_keys_;      // d_m x d
  Matrix values_, d_values_;  // d_m x d
  Matrix gate_, d_gate_;      // B x d (Switch)
  Matrix qproj_, d_qproj_;    // d x d_ell
  Matrix suba_, d_suba_;      // r x d_ell/2
  Matrix subb_, d_subb_;      // r x d_ell/2
  Matrix lrk_, d_lrk_;        // d_m x d_ell
  Matrix cproj_, d_cproj_;    // d x d_ell (controller)
  Matrix ckeys_, d_ckeys_;    // d_m x d_ell (controller)
  BatchNorm1d norm_;
  Matrix d_gamma_, d_beta_;
  HashGateTable table_;

  bool has_full_keys() const;
  bool has_product_keys() const;
};

}  // namespace sffn
