#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace sffn {

struct CheckResult {
  std::string name;
  bool pass = false;
  std::string detail;  // measured values, tolerances
};

// Mixture-of-experts <-> flat memory agreement, full-selection and zero-
// sabotage bit-identity, batched-versus-per-token layer consistency.
std::vector<CheckResult> verify_equivalence(std::uint64_t seed);

// Analytical gradients of every selector variant (and small end-to-end
// models) against central finite differences.
std::vector<CheckResult> verify_gradients(std::uint64_t seed);

// Analytical compute accounting against the published reference points
// (gate cost within 1%, whole-model training budgets within 5%) and the
// expected cost ordering.
std::vector<CheckResult> verify_flops();

// Hypergeometric expected-overlap series against its closed form, and a
// Monte-Carlo routing simulation against both.
std::vector<CheckResult> verify_overlap(std::uint64_t seed);

// Runs the named suite: "equivalence", "gradients", "flops", "overlap", or
// "all". Throws std::invalid_argument for anything else.
std::vector<CheckResult> verify_suite(const std::string& name,
                                      std::uint64_t seed);

}  // namespace sffn
