#include "sffn/gradcheck.hpp"

#include <cmath>
#include <functional>
#include <stdexcept>

#include "sffn/layer.hpp"
#include "sffn/loss.hpp"
#include "sffn/model.hpp"
#include "sffn/ops.hpp"
#include "sffn/rng.hpp"

namespace sffn {
namespace {

constexpr double kEps = 1e-5;
constexpr double kAbsTol = 1e-8;
constexpr double kRelTol = 1e-4;
constexpr double kBalanceScale = 0.01;

struct Probe {
  double abs_err = 0.0;
  double rel_err = 0.0;
};

// Central finite difference of loss() with respect to *slot.
double fd_slot(double* slot, const std::function<double()>& loss) {
  const double saved = *slot;
  *slot = saved + kEps;
  const double up = loss();
  *slot = saved - kEps;
  const double down = loss();
  *slot = saved;
  if (!std::isfinite(up) || !std::isfinite(down))
    throw std::runtime_error("non-finite loss during finite differences");
  return (up - down) / (2.0 * kEps);
}

void fold(GradCheckReport& rep, const std::string& tensor, double analytical,
          double fd) {
  const double abs_err = std::abs(analytical - fd);
  const double denom = std::max(std::abs(analytical), std::abs(fd));
  const double rel = denom > 0.0 ? abs_err / denom : 0.0;
  ++rep.entries;
  if (abs_err > rep.max_abs_err) {
    rep.max_abs_err = abs_err;
    // Track the absolute-error argmax until a tolerance-relevant relative
    // error (below) claims the slot.
    if (rep.max_rel_err == 0.0) rep.worst_tensor = tensor;
  }
  const bool within = abs_err <= std::max(kAbsTol, kRelTol * denom);
  if (rel > rep.max_rel_err && abs_err > kAbsTol) {
    rep.max_rel_err = rel;
    rep.worst_tensor = tensor;
  }
  if (!within) rep.pass = false;
}

std::vector<int> frozen_dispatch(const SffnLayerCache& cache) {
  std::vector<int> out;
  out.reserve(cache.routes.size());
  for (const TokenRouting& rt : cache.routes) out.push_back(rt.switch_block);
  return out;
}

}  // namespace

std::vector<GradCheckCase> default_grad_check_cases() {
  std::vector<GradCheckCase> cases;
  cases.push_back({"dense", SelectorKind::Dense});
  for (Aggregator agg : {Aggregator::Avg, Aggregator::AvgAbs, Aggregator::Max,
                         Aggregator::Min}) {
    cases.push_back({std::string("vanillam/") + aggregator_name(agg),
                     SelectorKind::VanillaM, agg});
  }
  cases.push_back({"avg-k", SelectorKind::AvgK});
  cases.push_back({"randhash", SelectorKind::RandHash});
  cases.push_back({"switch", SelectorKind::Switch});
  GradCheckCase pkm{"pkm", SelectorKind::Pkm};
  pkm.batch_norm = true;
  cases.push_back(pkm);
  GradCheckCase pkm_raw{"pkm/no-norm", SelectorKind::Pkm};
  cases.push_back(pkm_raw);
  cases.push_back({"lorkm", SelectorKind::Lorkm});
  GradCheckCase lorkm_bn{"lorkm/norm", SelectorKind::Lorkm};
  lorkm_bn.batch_norm = true;
  cases.push_back(lorkm_bn);
  GradCheckCase pf{"pkm-ffn", SelectorKind::PkmFfn};
  pf.batch_norm = true;
  cases.push_back(pf);
  cases.push_back({"controller", SelectorKind::Controller});
  GradCheckCase clr{"controller/low-rank", SelectorKind::Controller};
  clr.controller_low_rank = true;
  cases.push_back(clr);
  GradCheckCase na{"naive-ann", SelectorKind::NaiveAnn};
  na.sabotage_pct = 40.0;
  cases.push_back(na);
  return cases;
}

GradCheckReport grad_check_layer(const GradCheckCase& c, std::uint64_t seed) {
  GradCheckReport rep;
  rep.case_name = c.name;
  rep.pass = true;

  const int d = 6;
  const int d_m = 16;
  SffnLayerConfig cfg;
  cfg.kind = c.kind;
  cfg.aggregator = c.aggregator;
  cfg.batch_norm = c.batch_norm;
  cfg.controller_low_rank = c.controller_low_rank;
  cfg.sabotage_pct = c.sabotage_pct;
  cfg.vocab_size = 32;
  cfg.seed = seed;
  switch (c.kind) {
    case SelectorKind::Dense:
      cfg.geom = MemoryGeometry::make(d, d_m, d_m, d_m);
      break;
    case SelectorKind::VanillaM:
    case SelectorKind::AvgK:
    case SelectorKind::RandHash:
      cfg.geom = MemoryGeometry::make(d, d_m, 4, 8);
      break;
    case SelectorKind::Switch:
      cfg.geom = MemoryGeometry::make(d, d_m, 4, 4);
      break;
    case SelectorKind::Controller:
      cfg.geom = MemoryGeometry::make(d, d_m, 4, 4);
      cfg.d_ell = 4;
      break;
    case SelectorKind::Pkm:
    case SelectorKind::Lorkm:
    case SelectorKind::PkmFfn:
    case SelectorKind::NaiveAnn:
      cfg.geom = MemoryGeometry::make(d, d_m, 1, 5);
      cfg.d_ell = 4;
      break;
  }

  SffnLayer layer(cfg, "gc");
  layer.init_params(seed);

  const int N = 5;
  Matrix X(N, d);
  RngStream xr(seed, "gc.x");
  for (double& v : X.data) v = xr.next_normal();
  Matrix C(N, d);
  RngStream cr(seed, "gc.c");
  for (double& v : C.data) v = cr.next_normal();
  std::vector<int> tokens(N);
  RngStream tr(seed, "gc.tokens");
  for (int& t : tokens)
    t = static_cast<int>(tr.uniform_below(32));

  Matrix y0;
  SffnLayerCache base =
      layer.forward(X, tokens, RunMode::Train, 7, y0,
                    /*update_norm_stats=*/false);
  const std::vector<int> dispatch =
      c.kind == SelectorKind::Switch ? frozen_dispatch(base)
                                     : std::vector<int>{};

  auto probe_loss = [&](const SffnLayerCache& cache, const Matrix& y) {
    double loss = 0.0;
    for (std::size_t i = 0; i < y.data.size(); ++i)
      loss += C.data[i] * y.data[i];
    if (c.kind == SelectorKind::Switch)
      loss += kBalanceScale * switch_balance_loss(cache.probs, dispatch);
    return loss;
  };

  // Analytical gradients with the routing of the base pass.
  layer.zero_grads();
  Matrix dprobs;
  if (c.kind == SelectorKind::Switch) {
    dprobs = switch_balance_loss_grad(base.probs, dispatch);
    for (double& v : dprobs.data) v *= kBalanceScale;
  }
  Matrix dX = layer.backward(base, C, dprobs);

  Matrix x_work = X;
  auto frozen_loss = [&]() {
    Matrix y;
    SffnLayerCache cache = layer.forward_frozen(x_work, tokens, base, y);
    return probe_loss(cache, y);
  };

  for (ParamRef& p : layer.params()) {
    for (std::size_t i = 0; i < p.value->data.size(); ++i) {
      const double fd = fd_slot(&p.value->data[i], frozen_loss);
      fold(rep, p.name, p.grad->data[i], fd);
    }
  }
  for (std::size_t i = 0; i < x_work.data.size(); ++i) {
    const double fd = fd_slot(&x_work.data[i], frozen_loss);
    fold(rep, "input", dX.data[i], fd);
  }
  return rep;
}

GradCheckReport grad_check_model(SelectorKind kind, std::uint64_t seed) {
  GradCheckReport rep;
  rep.case_name = std::string("model/") + selector_name(kind);
  rep.pass = true;

  ModelConfig mc;
  mc.layers = 2;
  mc.d = 8;
  mc.heads = 2;
  mc.seq_len = 6;
  mc.vocab_size = 17;
  mc.seed = seed;
  mc.sffn_layers = {1};
  mc.sffn.kind = kind;
  switch (kind) {
    case SelectorKind::Dense:
      mc.sffn.geom = MemoryGeometry::make(mc.d, 16, 16, 16);
      break;
    case SelectorKind::Switch:
      mc.sffn.geom = MemoryGeometry::make(mc.d, 16, 4, 4);
      break;
    case SelectorKind::Pkm:
      mc.sffn.geom = MemoryGeometry::make(mc.d, 16, 1, 5);
      mc.sffn.d_ell = 4;
      mc.sffn.batch_norm = true;
      break;
    default:
      mc.sffn.geom = MemoryGeometry::make(mc.d, 16, 4, 8);
      break;
  }

  TransformerLM model(mc);
  model.init_params();

  const int S = 2;
  const int N = S * mc.seq_len;
  std::vector<int> tokens(static_cast<std::size_t>(N));
  std::vector<int> targets(static_cast<std::size_t>(N));
  RngStream tr(seed, "gc.model.tokens");
  for (int n = 0; n < N; ++n) {
    tokens[static_cast<std::size_t>(n)] =
        static_cast<int>(tr.uniform_below(static_cast<std::uint64_t>(mc.vocab_size)));
    targets[static_cast<std::size_t>(n)] =
        static_cast<int>(tr.uniform_below(static_cast<std::uint64_t>(mc.vocab_size)));
  }

  Matrix logits0;
  ModelCache base = model.forward(tokens, S, RunMode::Train, 3, logits0,
                                  /*update_norm_stats=*/false);
  const int mem_layer = mc.sffn_layers[0];
  const std::vector<int> dispatch =
      kind == SelectorKind::Switch
          ? frozen_dispatch(base.blocks[static_cast<std::size_t>(mem_layer)].ffn)
          : std::vector<int>{};

  auto total_loss = [&](const ModelCache& cache, const Matrix& logits) {
    double loss = cross_entropy_loss(logits, targets, nullptr);
    if (kind == SelectorKind::Switch) {
      const Matrix& probs =
          cache.blocks[static_cast<std::size_t>(mem_layer)].ffn.probs;
      loss += kBalanceScale * switch_balance_loss(probs, dispatch);
    }
    return loss;
  };

  model.zero_grads();
  Matrix dlogits;
  cross_entropy_loss(logits0, targets, &dlogits);
  std::vector<Matrix> dprobs;
  if (kind == SelectorKind::Switch) {
    dprobs.resize(static_cast<std::size_t>(mc.layers));
    Matrix g = switch_balance_loss_grad(
        base.blocks[static_cast<std::size_t>(mem_layer)].ffn.probs, dispatch);
    for (double& v : g.data) v *= kBalanceScale;
    dprobs[static_cast<std::size_t>(mem_layer)] = std::move(g);
  }
  model.backward(base, dlogits, dprobs);

  auto frozen_loss = [&]() {
    Matrix logits;
    ModelCache cache = model.forward_frozen(tokens, S, base, logits);
    return total_loss(cache, logits);
  };

  for (ParamRef& p : model.params()) {
    for (std::size_t i = 0; i < p.value->data.size(); ++i) {
      const double fd = fd_slot(&p.value->data[i], frozen_loss);
      fold(rep, p.name, p.grad->data[i], fd);
    }
  }
  return rep;
}

}  // namespace sffn
