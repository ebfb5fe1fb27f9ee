#pragma once

#include "sffn/geometry.hpp"
#include "sffn/selectors.hpp"

namespace sffn {

// Analytical compute accounting. MACs are multiply-accumulates; reported
// FLOPs use the training convention FLOPs = 2 * MACs * factor, where the
// factor (default 4) folds the forward pass plus the roughly 2x backward
// and activation recomputation of a training step. The factor is exposed so
// other conventions stay one call away.

// Total FLOPs a learned gate spends scoring tokens against B block
// embeddings: 2 * d * num_blocks * n_gates * tokens * factor.
double gate_flops(double d, double num_blocks, double n_gates, double tokens,
                  double factor = 4.0);

// Shape of a decoder-only LM for whole-model accounting.
struct ModelShape {
  int layers = 0;
  int d = 0;
  int seq_len = 0;
  int vocab = 0;
  int sffn_layer_count = 0;       // layers carrying the sparse memory
  SelectorKind selector = SelectorKind::Dense;
  MemoryGeometry geom;            // memory geometry at those layers
  int d_ell = 0;                  // factorized query width, when applicable
};

struct FlopsBreakdown {
  // Per-token MACs by component (all layers summed).
  double attention_macs = 0.0;   // QKVO projections + scores/context
  double dense_ffn_macs = 0.0;   // standard 4d feed-forward layers
  double sffn_key_macs = 0.0;    // coefficient scoring + gate cost
  double sffn_value_macs = 0.0;  // weighted value accumulation
  double head_macs = 0.0;        // output vocabulary projection
  double macs_per_token = 0.0;
  double factor = 4.0;
  double flops_per_token = 0.0;  // 2 * macs_per_token * factor
  double train_total = 0.0;      // flops_per_token * token budget
};

// Per-token MAC model:
//   attention: 4*d^2 projections + 2*s*d full-sequence scores+context
//   dense FFN: 2 * (4d) * d key+value sides
//   memory layers by selector:
//     dense-style scoring (VanillaM, Controller, NaiveAnn): d_m*d keys
//     factorized scoring (PKM): d*d_ell + 2*sqrt(d_m)*(d_ell/2)
//     factorized scoring (LoRKM): d*d_ell + d_m*d_ell
//     routed (RandHash/Switch/AvgK/PkmFfn): k*d keys + gate cost
//       (gate: 0 for RandHash, B*d for Switch/AvgK, PKM scorer for PkmFfn)
//     value side: k*d (Controller: one cell per block -> B*d)
//   head: d * vocab
FlopsBreakdown model_flops(const ModelShape& shape, double token_budget,
                           double factor = 4.0);

}  // namespace sffn
