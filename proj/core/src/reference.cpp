#include "sffn/reference.hpp"

namespace sffn {

const std::vector<ReferenceEntry>& reference_table() {
  static const std::vector<ReferenceEntry> table = {
      // method,      E,    g,    k,     ood_ppl, train_zflops
      {"dense", 1.0, 0, 4096, 16.96, 0.212},
      {"pkm", 16.0, 1, 4096, 16.66, 0.205},
      {"pkm", 32.0, 1, 4096, 16.06, 0.205},
      {"pkm", 32.0, 1, 8192, 16.16, 0.213},
      {"vanillam", 16.0, 1, 4096, 14.69, 0.333},
      {"pkm-ffn", 16.0, 1, 4096, 15.19, 0.213},
      {"randhash", 16.0, 1, 4096, 15.35, 0.212},
      {"randhash", 16.0, 4096, 4096, 15.75, 0.212},
      {"switch", 16.0, 4096, 4096, 16.45, 0.212},
      {"avg-k", 16.0, 4096, 4096, 16.44, 0.212},
      {"avg-k", 16.0, 256, 4096, 14.91, 0.213},
      {"avg-k", 16.0, 64, 4096, 14.80, 0.214},
  };
  return table;
}

const ReferenceEntry* reference_lookup(std::string_view method,
                                       std::optional<int> g,
                                       std::optional<double> E,
                                       std::optional<int> k) {
  const ReferenceEntry* found = nullptr;
  for (const auto& entry : reference_table()) {
    if (entry.method != method) continue;
    if (g && entry.g != *g) continue;
    if (E && entry.E != *E) continue;
    if (k && entry.k != *k) continue;
    if (found != nullptr) return nullptr;  // ambiguous
    found = &entry;
  }
  return found;
}

double reference_aggregator_ppl(Aggregator agg) {
  switch (agg) {
    case Aggregator::Avg: return 15.56;
    case Aggregator::AvgAbs: return 15.67;
    case Aggregator::Max: return 16.11;
    case Aggregator::Min: return 94.86;
  }
  return 0.0;
}

}  // namespace sffn
