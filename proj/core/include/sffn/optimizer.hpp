#pragma once

#include <vector>

#include "sffn/layer.hpp"
#include "sffn/matrix.hpp"

namespace sffn {

struct OptimizerConfig {
  double peak_lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.98;
  double eps = 1e-8;
  double weight_decay = 0.01;
  long warmup_steps = 100;
  long total_steps = 1000;
  double decay_power = 1.0;  // polynomial decay exponent after warmup
};

// Learning rate at 1-based step t: linear warmup to peak_lr, then a
// polynomial decay to zero at total_steps.
double lr_at_step(const OptimizerConfig& cfg, long t);

// Adam with decoupled weight decay. Moment buffers are keyed by position in
// the parameter list, which must stay stable across steps.
class AdamW {
 public:
  AdamW() = default;
  explicit AdamW(OptimizerConfig cfg) : cfg_(cfg) {}

  const OptimizerConfig& config() const { return cfg_; }
  long step_count() const { return t_; }

  // Applies one update from the accumulated gradients. Returns the learning
  // rate used.
  double step(std::vector<ParamRef>& params);

 private:
  OptimizerConfig cfg_;
  long t_ = 0;
  std::vector<Matrix> m_, v_;
};

}  // namespace sffn
