#include "sffn/optimizer.hpp"

#include <cmath>
#include <stdexcept>

namespace sffn {

double lr_at_step(const OptimizerConfig& cfg, long t) {
  if (t <= 0) throw std::invalid_argument("schedule steps are 1-based");
  if (cfg.warmup_steps < 0 || cfg.total_steps <= 0)
    throw std::invalid_argument("schedule lengths must be positive");
  if (cfg.warmup_steps > 0 && t <= cfg.warmup_steps)
    return cfg.peak_lr * static_cast<double>(t) /
           static_cast<double>(cfg.warmup_steps);
  if (t >= cfg.total_steps) return 0.0;
  const double span =
      static_cast<double>(cfg.total_steps - cfg.warmup_steps);
  const double left = static_cast<double>(cfg.total_steps - t);
  return cfg.peak_lr * std::pow(left / span, cfg.decay_power);
}

double AdamW::step(std::vector<ParamRef>& params) {
  if (m_.empty()) {
    m_.reserve(params.size());
    v_.reserve(params.size());
    for (const ParamRef& p : params) {
      m_.emplace_back(p.value->rows, p.value->cols);
      v_.emplace_back(p.value->rows, p.value->cols);
    }
  }
  if (m_.size() != params.size())
    throw std::logic_error("parameter list changed between optimizer steps");
  ++t_;
  const double lr = lr_at_step(cfg_, t_);
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Matrix& value = *params[i].value;
    const Matrix& grad = *params[i].grad;
    if (value.rows != m_[i].rows || value.cols != m_[i].cols)
      throw std::logic_error("parameter shape changed between optimizer steps");
    for (std::size_t j = 0; j < value.data.size(); ++j) {
      const double gj = grad.data[j];
      m_[i].data[j] = cfg_.beta1 * m_[i].data[j] + (1.0 - cfg_.beta1) * gj;
      v_[i].data[j] = cfg_.beta2 * v_[i].data[j] + (1.0 - cfg_.beta2) * gj * gj;
      const double mhat = m_[i].data[j] / bc1;
      const double vhat = v_[i].data[j] / bc2;
      value.data[j] -= lr * (mhat / (std::sqrt(vhat) + cfg_.eps) +
                             cfg_.weight_decay * value.data[j]);
    }
  }
  return lr;
}

}  // namespace sffn
