#pragma once

#include <cstdint>

#include "sffn/rng.hpp"
#include "sffn/trace.hpp"

namespace sffn {

// Expected number of memory cells shared by two tokens that independently
// select b of B blocks (size g) uniformly without replacement, written as the
// explicit hypergeometric series sum_{i=1..b} P(|overlap| = i) * i * g.
// Equals the closed form g * b^2 / B (see expected_overlap_closed_form).
double expected_overlap_analytical(int B, int b, int g);

// g * b^2 / B = k^2 / d_m: independent of g for fixed k and d_m.
double expected_overlap_closed_form(int B, int b, int g);

struct OverlapEstimate {
  double mean = 0.0;       // average shared cells per position pair
  double std_error = 0.0;  // standard error of the mean
  std::int64_t pairs = 0;  // samples actually taken
};

// Monte-Carlo estimate of the shared-cell count between two random distinct
// positions of the same sequence, averaged per layer and then across layers.
// Events are grouped by (layer, seq); sequences with fewer than two recorded
// positions are skipped. block_size scales block overlap to cells; pass the
// g the trace was recorded under (or 0 to use the trace's own annotation).
OverlapEstimate expected_overlap_empirical(const RoutingTrace& trace,
                                           int pairs_per_seq, RngStream& rng,
                                           int block_size = 0);

}  // namespace sffn
