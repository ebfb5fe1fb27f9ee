#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sffn/selectors.hpp"

namespace sffn {

struct GradCheckCase {
  std::string name;
  SelectorKind kind = SelectorKind::Dense;
  Aggregator aggregator = Aggregator::Avg;
  bool batch_norm = false;
  bool controller_low_rank = false;
  double sabotage_pct = 0.0;
};

struct GradCheckReport {
  std::string case_name;
  std::string worst_tensor;  // tensor holding the largest relative error
  double max_abs_err = 0.0;
  double max_rel_err = 0.0;
  long entries = 0;  // gradient entries compared
  bool pass = false;
};

// Every selector variant exercised by the gradient suite.
std::vector<GradCheckCase> default_grad_check_cases();

// Compares the layer's analytical gradients (all parameter tensors plus the
// input) against central finite differences of a linear probe loss, with the
// routing frozen to the base forward pass. Switch adds the scaled balance
// penalty so the router-probability path is covered.
GradCheckReport grad_check_layer(const GradCheckCase& c, std::uint64_t seed);

// Same comparison through a small end-to-end language model (cross entropy
// plus, for Switch, the balance penalty), covering attention, normalization,
// embeddings, and the memory layer jointly.
GradCheckReport grad_check_model(SelectorKind kind, std::uint64_t seed);

}  // namespace sffn
