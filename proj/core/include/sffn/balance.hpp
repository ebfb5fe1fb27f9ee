#pragma once

#include <vector>

#include "sffn/trace.hpp"

namespace sffn {

// Fraction of routing events landing on each block, sorted descending.
// Every (event, selected block) pair counts once; the fractions sum to 1.
// num_blocks = 0 uses the trace annotation, or failing that max id + 1.
std::vector<double> load_balance_histogram(const RoutingTrace& trace,
                                           int num_blocks = 0);

}  // namespace sffn
