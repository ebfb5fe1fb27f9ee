#include "sffn/flops.hpp"

#include <cmath>
#include <stdexcept>

namespace sffn {

double gate_flops(double d, double num_blocks, double n_gates, double tokens,
                  double factor) {
  if (d < 0 || num_blocks < 0 || n_gates < 0 || tokens < 0 || factor < 0) {
    throw std::invalid_argument("gate_flops: negative input");
  }
  return 2.0 * d * num_blocks * n_gates * tokens * factor;
}

FlopsBreakdown model_flops(const ModelShape& shape, double token_budget,
                           double factor) {
  if (shape.layers <= 0 || shape.d <= 0 || shape.seq_len <= 0 ||
      shape.vocab <= 0) {
    throw std::invalid_argument("model_flops: bad model shape");
  }
  if (shape.sffn_layer_count < 0 || shape.sffn_layer_count > shape.layers) {
    throw std::invalid_argument("model_flops: bad memory layer count");
  }
  const double d = shape.d;
  const double s = shape.seq_len;

  FlopsBreakdown out;
  out.factor = factor;
  out.attention_macs = shape.layers * (4.0 * d * d + 2.0 * s * d);

  const int sffn_count =
      shape.selector == SelectorKind::Dense ? 0 : shape.sffn_layer_count;
  const double dense_layers = shape.layers - sffn_count;
  out.dense_ffn_macs = dense_layers * 2.0 * (4.0 * d) * d;

  if (sffn_count > 0) {
    const auto& geom = shape.geom;
    const double d_m = geom.d_m;
    const double k = geom.k;
    const double B = geom.blocks();
    const double d_ell = shape.d_ell;
    const double root = std::sqrt(d_m);
    double key = 0.0, value = k * d;
    switch (shape.selector) {
      case SelectorKind::Dense:
        break;
      case SelectorKind::VanillaM:
      case SelectorKind::NaiveAnn:
        key = d_m * d;  // full coefficient scan drives the routing
        break;
      case SelectorKind::Controller:
        key = d_m * d;
        value = B * d;  // one winning cell per block
        break;
      case SelectorKind::AvgK:
        key = k * d + B * d;  // coefficients for chosen cells + mean-key gate
        break;
      case SelectorKind::Switch:
        key = k * d + B * d;
        break;
      case SelectorKind::RandHash:
        key = k * d;  // the static table costs nothing at run time
        break;
      case SelectorKind::Pkm:
        key = d * d_ell + 2.0 * root * (d_ell / 2.0);
        break;
      case SelectorKind::Lorkm:
        key = d * d_ell + d_m * d_ell;
        break;
      case SelectorKind::PkmFfn:
        key = k * d + (d * d_ell + 2.0 * root * (d_ell / 2.0));
        break;
    }
    out.sffn_key_macs = sffn_count * key;
    out.sffn_value_macs = sffn_count * value;
  }

  out.head_macs = d * shape.vocab;
  out.macs_per_token = out.attention_macs + out.dense_ffn_macs +
                       out.sffn_key_macs + out.sffn_value_macs +
                       out.head_macs;
  out.flops_per_token = 2.0 * out.macs_per_token * factor;
  out.train_total = out.flops_per_token * token_budget;
  return out;
}

}  // namespace sffn
