#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "sffn/selectors.hpp"

namespace sffn {

// Published large-scale results kept for regression comparison of analytics
// and for reporting next to desk-scale runs. Perplexities are the
// out-of-domain averages of the 1.3B-token reference setup (d = 1024,
// 24 layers, memories at every sixth layer, E = 16 unless noted, k = 4096
// unless noted); compute is total training FLOPs in ZFLOPs (1e21).
struct ReferenceEntry {
  std::string method;    // selector_name() spelling
  double E = 0.0;        // memory size multiplier
  int g = 0;             // block size
  int k = 0;             // active memory cells
  double ood_ppl = 0.0;  // out-of-domain average perplexity
  double train_zflops = 0.0;
};

const std::vector<ReferenceEntry>& reference_table();

// Match by method, then by whichever of g / E / k are given. Returns nullptr
// when nothing matches or the description is ambiguous.
const ReferenceEntry* reference_lookup(std::string_view method,
                                       std::optional<int> g = std::nullopt,
                                       std::optional<double> E = std::nullopt,
                                       std::optional<int> k = std::nullopt);

// Aggregation ablation for the coefficient-aggregating selector at g = 4096:
// out-of-domain perplexity per aggregator.
double reference_aggregator_ppl(Aggregator agg);

}  // namespace sffn
