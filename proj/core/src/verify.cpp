#include "sffn/verify.hpp"

#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "sffn/flops.hpp"
#include "sffn/gradcheck.hpp"
#include "sffn/layer.hpp"
#include "sffn/memory.hpp"
#include "sffn/ops.hpp"
#include "sffn/overlap.hpp"
#include "sffn/reference.hpp"
#include "sffn/rng.hpp"
#include "sffn/selectors.hpp"

namespace sffn {
namespace {

std::string fmt(const char* pattern, double a, double b = 0.0,
                double c = 0.0) {
  char buf[192];
  std::snprintf(buf, sizeof(buf), pattern, a, b, c);
  return buf;
}

double rel_diff(double a, double b) {
  const double denom = std::max(std::abs(a), std::abs(b));
  return denom == 0.0 ? 0.0 : std::abs(a - b) / denom;
}

}  // namespace

std::vector<CheckResult> verify_equivalence(std::uint64_t seed) {
  std::vector<CheckResult> out;

  // A mixture of B experts of size g equals one flat memory of B*g cells.
  {
    const int d = 16, B = 8, g = 4;
    RngStream rng(seed, "verify.moe");
    std::vector<Expert> experts;
    for (int i = 0; i < B; ++i) {
      Matrix K(g, d), V(g, d);
      for (double& v : K.data) v = rng.next_normal() * 0.5;
      for (double& v : V.data) v = rng.next_normal() * 0.5;
      experts.emplace_back(std::move(K), std::move(V));
    }
    double worst = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
      std::vector<double> x(d), gate(B);
      for (double& v : x) v = rng.next_normal();
      double z = 0.0;
      for (double& v : gate) {
        v = std::exp(rng.next_normal());
        z += v;
      }
      for (double& v : gate) v /= z;
      const auto a = moe_standard(x, experts, gate);
      const auto b = moe_as_memory(x, experts, gate);
      double num = 0.0, den = 0.0;
      for (int j = 0; j < d; ++j) {
        num += (a[j] - b[j]) * (a[j] - b[j]);
        den += a[j] * a[j];
      }
      worst = std::max(worst, std::sqrt(num) / std::max(std::sqrt(den), 1e-300));
    }
    out.push_back({"mixture equals flat memory (rel <= 1e-10)", worst <= 1e-10,
                   fmt("max relative error %.3g", worst)});
  }

  // Selecting every block with unit weight reproduces the dense memory
  // bit for bit.
  {
    const MemoryGeometry geom = MemoryGeometry::make(16, 32, 4, 32);
    RngStream rng(seed, "verify.full");
    Matrix K(geom.d_m, geom.d), V(geom.d_m, geom.d);
    for (double& v : K.data) v = rng.next_normal() * 0.4;
    for (double& v : V.data) v = rng.next_normal() * 0.4;
    BlockSelection all;
    for (int i = 0; i < geom.blocks(); ++i) {
      all.indices.push_back(i);
      all.weights.push_back(1.0);
    }
    bool identical = true;
    for (int trial = 0; trial < 10; ++trial) {
      std::vector<double> x(geom.d);
      for (double& v : x) v = rng.next_normal();
      const auto dense = dense_ffn(x, K, V);
      const auto sparse = sparse_apply(x, K, V, all, geom);
      for (int j = 0; j < geom.d; ++j)
        if (dense[j] != sparse[j]) identical = false;
    }
    out.push_back({"full selection is bit-identical to dense", identical,
                   identical ? "exact" : "mismatch"});
  }

  // Zero sabotage reproduces the exact top-k selection.
  {
    RngStream rng(seed, "verify.swap");
    bool identical = true;
    for (int trial = 0; trial < 20; ++trial) {
      std::vector<double> scores(64);
      for (double& v : scores) v = rng.next_normal();
      RngStream swap_rng(seed, "verify.swap.stream",
                         static_cast<std::uint64_t>(trial));
      const auto sel = select_naive_ann(scores, 16, 0.0, swap_rng);
      const auto exact = topk_indices(scores, 16);
      if (sel.indices != exact) identical = false;
    }
    out.push_back({"zero sabotage equals exact top-k", identical,
                   identical ? "exact" : "mismatch"});
  }

  // The batched layer path agrees bit for bit with the per-token memory.
  {
    const MemoryGeometry geom = MemoryGeometry::make(12, 24, 24, 24);
    SffnLayerConfig lc;
    lc.kind = SelectorKind::Dense;
    lc.geom = geom;
    SffnLayer layer(lc, "verify");
    layer.init_params(seed);
    const auto state = layer.state();
    const Matrix* K = nullptr;
    const Matrix* V = nullptr;
    for (const NamedTensor& t : state) {
      if (t.name == "verify.keys") K = &t.value;
      if (t.name == "verify.values") V = &t.value;
    }
    RngStream rng(seed, "verify.batch");
    Matrix X(7, geom.d);
    for (double& v : X.data) v = rng.next_normal();
    Matrix Y;
    std::vector<int> ids(7, 0);
    layer.forward(X, ids, RunMode::Eval, 0, Y);
    bool identical = true;
    for (int n = 0; n < X.rows; ++n) {
      const auto y = dense_ffn(X.row(n), *K, *V);
      for (int j = 0; j < geom.d; ++j)
        if (y[static_cast<std::size_t>(j)] != Y(n, j)) identical = false;
    }
    out.push_back({"batched layer matches per-token memory bit for bit",
                   identical, identical ? "exact" : "mismatch"});
  }
  return out;
}

std::vector<CheckResult> verify_gradients(std::uint64_t seed) {
  std::vector<CheckResult> out;
  for (const GradCheckCase& c : default_grad_check_cases()) {
    const GradCheckReport rep = grad_check_layer(c, seed);
    out.push_back({"layer gradients: " + rep.case_name, rep.pass,
                   fmt("max abs err %.3g, max rel err %.3g, worst tensor: ",
                       rep.max_abs_err, rep.max_rel_err) +
                       rep.worst_tensor});
  }
  for (SelectorKind kind :
       {SelectorKind::Dense, SelectorKind::VanillaM, SelectorKind::Switch,
        SelectorKind::Pkm}) {
    const GradCheckReport rep = grad_check_model(kind, seed);
    out.push_back({"model gradients: " + rep.case_name, rep.pass,
                   fmt("max abs err %.3g, max rel err %.3g, worst tensor: ",
                       rep.max_abs_err, rep.max_rel_err) +
                       rep.worst_tensor});
  }
  return out;
}

std::vector<CheckResult> verify_flops() {
  std::vector<CheckResult> out;

  // Learned-gate scoring cost for one 524288-token forward+backward at
  // d = 1024, E = 16 (d_m = 65536), 4 gated layers: the published TFLOPs
  // row across all nine block sizes.
  {
    struct GatePoint { int g; double tflops; };
    const GatePoint points[] = {{4096, 0.275}, {2048, 0.552}, {1024, 1.10},
                                {512, 2.20},   {256, 4.40},   {128, 8.80},
                                {64, 17.6},    {32, 35.2},    {1, 1124.0}};
    for (const GatePoint& p : points) {
      const double num_blocks = 65536.0 / p.g;
      const double got = gate_flops(1024, num_blocks, 4, 524288.0);
      const double rel = rel_diff(got, p.tflops * 1e12);
      out.push_back({fmt("gate cost at block size %g (within 1%%)",
                         static_cast<double>(p.g)),
                     rel <= 0.01,
                     fmt("%.6g TFLOPs vs %g published, rel %.3g", got / 1e12,
                         p.tflops, rel)});
    }
  }

  // Whole-model training budgets versus the published table (within 5%).
  const double budget = 60e9;
  auto shape_for = [&](SelectorKind kind, MemoryGeometry geom,
                       int d_ell) {
    ModelShape s;
    s.layers = 24;
    s.d = 1024;
    s.seq_len = 2048;
    s.vocab = 50257;
    s.sffn_layer_count = 4;
    s.selector = kind;
    s.geom = geom;
    s.d_ell = d_ell;
    return s;
  };
  struct Case {
    const char* label;
    SelectorKind kind;
    MemoryGeometry geom;
    int d_ell;
    double published_zflops;
  };
  const std::vector<Case> cases = {
      {"dense", SelectorKind::Dense,
       MemoryGeometry::make(1024, 4096, 4096, 4096), 0, 0.212},
      {"vanillam", SelectorKind::VanillaM,
       MemoryGeometry::make(1024, 65536, 16, 4096), 0, 0.333},
      {"pkm", SelectorKind::Pkm, MemoryGeometry::make(1024, 65536, 1, 4096),
       512, 0.205},
      {"randhash", SelectorKind::RandHash,
       MemoryGeometry::make(1024, 65536, 16, 4096), 0, 0.212},
      {"switch", SelectorKind::Switch,
       MemoryGeometry::make(1024, 65536, 4096, 4096), 0, 0.212},
  };
  double dense_total = 0.0, pkm_total = 0.0, vanilla_total = 0.0;
  for (const Case& c : cases) {
    const FlopsBreakdown fb = model_flops(shape_for(c.kind, c.geom, c.d_ell),
                                          budget);
    const double rel = rel_diff(fb.train_total, c.published_zflops * 1e21);
    out.push_back({std::string("training budget: ") + c.label +
                       " (within 5%)",
                   rel <= 0.05,
                   fmt("%.4g ZFLOPs vs %.4g published, rel %.3g",
                       fb.train_total / 1e21, c.published_zflops, rel)});
    if (std::string(c.label) == "dense") dense_total = fb.train_total;
    if (std::string(c.label) == "pkm") pkm_total = fb.train_total;
    if (std::string(c.label) == "vanillam") vanilla_total = fb.train_total;
  }
  out.push_back({"factorized scoring costs less than the dense baseline",
                 pkm_total < dense_total && dense_total < vanilla_total,
                 fmt("pkm %.4g < dense %.4g < full-scan %.4g (ZFLOPs)",
                     pkm_total / 1e21, dense_total / 1e21,
                     vanilla_total / 1e21)});
  return out;
}

std::vector<CheckResult> verify_overlap(std::uint64_t seed) {
  std::vector<CheckResult> out;

  // The explicit series equals the closed form g*b^2/B.
  {
    double worst = 0.0;
    for (const int B : {2, 4, 8, 64, 512}) {
      for (const int b : {1, 2, 4, 8}) {
        if (b > B) continue;
        for (const int g : {1, 4, 256}) {
          const double a = expected_overlap_analytical(B, b, g);
          const double c = expected_overlap_closed_form(B, b, g);
          worst = std::max(worst, rel_diff(a, c));
        }
      }
    }
    out.push_back({"overlap series equals g*b^2/B (rel <= 1e-9)",
                   worst <= 1e-9, fmt("max relative error %.3g", worst)});
  }

  // Monte-Carlo routing simulation: uniformly random block choices per
  // position must land on the analytical expectation.
  {
    const int B = 64, b = 8, g = 4;
    RoutingTrace trace;
    trace.num_blocks = B;
    trace.block_size = g;
    RngStream pick(seed, "verify.overlap.pick");
    for (int s = 0; s < 48; ++s) {
      for (int p = 0; p < 24; ++p) {
        RouteEvent ev;
        ev.layer = 0;
        ev.seq = s;
        ev.pos = p;
        ev.token = 0;
        ev.blocks = pick.sample_without_replacement(B, b);
        trace.events.push_back(std::move(ev));
      }
    }
    RngStream pair_rng(seed, "verify.overlap.pairs");
    const OverlapEstimate est =
        expected_overlap_empirical(trace, 64, pair_rng);
    const double expect = expected_overlap_analytical(B, b, g);
    const double tol = std::max(4.0 * est.std_error, 0.02 * expect);
    out.push_back(
        {"simulated routing overlap matches the expectation",
         std::abs(est.mean - expect) <= tol,
         fmt("measured %.4g +- %.3g vs expected %.4g", est.mean,
             est.std_error, expect)});
  }
  return out;
}

std::vector<CheckResult> verify_suite(const std::string& name,
                                      std::uint64_t seed) {
  if (name == "equivalence") return verify_equivalence(seed);
  if (name == "gradcheck" || name == "gradients") return verify_gradients(seed);
  if (name == "flops") return verify_flops();
  if (name == "overlap") return verify_overlap(seed);
  if (name == "all") {
    std::vector<CheckResult> out = verify_equivalence(seed);
    for (auto& r : verify_gradients(seed)) out.push_back(std::move(r));
    for (auto& r : verify_flops()) out.push_back(std::move(r));
    for (auto& r : verify_overlap(seed)) out.push_back(std::move(r));
    return out;
  }
  throw std::invalid_argument("unknown verification suite: " + name);
}

}  // namespace sffn
