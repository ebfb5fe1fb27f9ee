// Acceptance gate: ten end-to-end criteria, one [PASS]/[FAIL] line each.
// Every tolerance is pinned here in code. Exit status is the number of
// failed criteria (0 = all green). Pass criterion numbers as arguments to
// run a subset, e.g. `sffn_acceptance 9 10`.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "sffn/balance.hpp"
#include "sffn/config.hpp"
#include "sffn/corpus.hpp"
#include "sffn/flops.hpp"
#include "sffn/gradcheck.hpp"
#include "sffn/layer.hpp"
#include "sffn/loss.hpp"
#include "sffn/memory.hpp"
#include "sffn/model.hpp"
#include "sffn/ops.hpp"
#include "sffn/overlap.hpp"
#include "sffn/rng.hpp"
#include "sffn/selectors.hpp"
#include "sffn/train.hpp"
#include "sffn/trace.hpp"

using namespace sffn;
namespace fs = std::filesystem;

namespace {

// Shared artifact directory: criterion 9 leaves a routing trace here that
// criterion 10 inspects qualitatively.
const char* kArtifactDir = "acceptance_artifacts";

double now_seconds() {
  using clock = std::chrono::steady_clock;
  static const clock::time_point t0 = clock::now();
  return std::chrono::duration<double>(clock::now() - t0).count();
}

double rel_err(double got, double want) {
  const double denom = std::max(1.0, std::abs(want));
  return std::abs(got - want) / denom;
}

double max_abs(std::span<const double> v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

std::string fmt(const char* pattern, ...) {
  va_list args;
  va_start(args, pattern);
  char buf[512];
  std::vsnprintf(buf, sizeof(buf), pattern, args);
  va_end(args);
  return buf;
}

// --------------------------------------------------------------------------
// 1. Mixture-of-experts and flat-memory forms agree on random instances.
// --------------------------------------------------------------------------
bool criterion1(std::string& detail) {
  const double kTol = 1e-10;
  const double start = now_seconds();
  RngStream rng(1001, "moe");
  double worst = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    const int d = 1 + static_cast<int>(rng.uniform_below(8));
    const int g = 1 + static_cast<int>(rng.uniform_below(8));
    const int B = 1 + static_cast<int>(rng.uniform_below(8));
    std::vector<Expert> experts;
    for (int i = 0; i < B; ++i) {
      Matrix K(g, d), V(g, d);
      for (auto& v : K.data) v = rng.next_normal();
      for (auto& v : V.data) v = rng.next_normal();
      experts.emplace_back(std::move(K), std::move(V));
    }
    std::vector<double> gate(static_cast<std::size_t>(B));
    for (auto& w : gate) w = rng.next_normal();
    std::vector<double> x(static_cast<std::size_t>(d));
    for (auto& v : x) v = rng.next_normal();

    const auto a = moe_standard(x, experts, gate);
    const auto b = moe_as_memory(x, experts, gate);
    const double scale = std::max(1.0, max_abs(a));
    for (int j = 0; j < d; ++j) {
      worst = std::max(worst, std::abs(a[static_cast<std::size_t>(j)] -
                                       b[static_cast<std::size_t>(j)]) /
                                  scale);
    }
  }
  const double elapsed = now_seconds() - start;
  detail = fmt("200 instances, max rel err %.3g (tol %.0e), %.2fs (limit 5s)",
               worst, kTol, elapsed);
  return worst <= kTol && elapsed < 5.0;
}

// --------------------------------------------------------------------------
// 2. Mean-key block scores are linear in the input.
// --------------------------------------------------------------------------
bool criterion2(std::string& detail) {
  const double kTol = 1e-12;
  RngStream rng(1002, "avgk");
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const int d = 2 + static_cast<int>(rng.uniform_below(7));
    const int g = 1 + static_cast<int>(rng.uniform_below(4));
    const int B = 1 + static_cast<int>(rng.uniform_below(8));
    const MemoryGeometry geom = MemoryGeometry::make(d, B * g, g, g);
    Matrix K(B * g, d);
    for (auto& v : K.data) v = rng.next_normal();
    std::vector<double> x1(static_cast<std::size_t>(d)),
        x2(static_cast<std::size_t>(d));
    for (auto& v : x1) v = rng.next_normal();
    for (auto& v : x2) v = rng.next_normal();
    const double alpha = rng.next_normal();
    const double beta = rng.next_normal();

    std::vector<double> mix(static_cast<std::size_t>(d));
    for (int j = 0; j < d; ++j)
      mix[static_cast<std::size_t>(j)] = alpha * x1[static_cast<std::size_t>(j)] +
                                         beta * x2[static_cast<std::size_t>(j)];

    const auto s1 = score_avgk(x1, K, geom);
    const auto s2 = score_avgk(x2, K, geom);
    const auto sm = score_avgk(mix, K, geom);
    double scale = 1.0;
    for (double s : sm) scale = std::max(scale, std::abs(s));
    for (int i = 0; i < B; ++i) {
      const double lin = alpha * s1[static_cast<std::size_t>(i)] +
                         beta * s2[static_cast<std::size_t>(i)];
      worst = std::max(
          worst, std::abs(sm[static_cast<std::size_t>(i)] - lin) / scale);
    }
  }
  detail = fmt("100 instances, max rel err %.3g (tol %.0e)", worst, kTol);
  return worst <= kTol;
}

// --------------------------------------------------------------------------
// 3. Factorized coefficient scorers equal their materialized key tables,
//    and the product-key index map pairs cell i with rows (i/r, i mod r).
// --------------------------------------------------------------------------
bool criterion3(std::string& detail) {
  const double kTol = 1e-10;
  RngStream rng(1003, "fact");
  double worst = 0.0;

  // Product keys: materialized key row i = D * concat(C[i/r], C'[i mod r]).
  {
    const int d = 8, d_m = 16, d_ell = 6;
    ProductKeys pk = make_product_keys(d, d_m, d_ell, /*use_norm=*/false);
    for (auto& v : pk.D.data) v = rng.next_normal();
    for (auto& v : pk.C.data) v = rng.next_normal();
    for (auto& v : pk.Cprime.data) v = rng.next_normal();
    const int r = pk.side();
    std::vector<double> x(static_cast<std::size_t>(d));
    for (auto& v : x) v = rng.next_normal();
    const auto m = pkm_scores(x, pk);

    std::vector<double> t(static_cast<std::size_t>(d_ell));
    for (int j = 0; j < d_ell; ++j) {
      double acc = 0.0;
      for (int i = 0; i < d; ++i)
        acc += x[static_cast<std::size_t>(i)] * pk.D(i, j);
      t[static_cast<std::size_t>(j)] = acc;
    }
    for (int cell = 0; cell < d_m; ++cell) {
      const int c1 = cell / r, c2 = cell % r;
      double u = 0.0;
      for (int j = 0; j < d_ell / 2; ++j)
        u += t[static_cast<std::size_t>(j)] * pk.C(c1, j) +
             t[static_cast<std::size_t>(j + d_ell / 2)] * pk.Cprime(c2, j);
      worst = std::max(worst,
                       rel_err(m[static_cast<std::size_t>(cell)], gelu(u)));
    }
  }

  // Low-rank keys: materialized table K = Ktilde * D^T.
  {
    const int d = 8, d_m = 24, d_ell = 5;
    LowRankKeys lk = make_low_rank_keys(d, d_m, d_ell, /*use_norm=*/false);
    for (auto& v : lk.D.data) v = rng.next_normal();
    for (auto& v : lk.Ktilde.data) v = rng.next_normal();
    std::vector<double> x(static_cast<std::size_t>(d));
    for (auto& v : x) v = rng.next_normal();
    const auto m = lorkm_scores(x, lk);
    const Matrix K = matmul_nt(lk.Ktilde, lk.D);  // Ktilde * D^T: d_m x d
    for (int cell = 0; cell < d_m; ++cell) {
      const double u = dot(x, K.row(cell));
      worst = std::max(worst,
                       rel_err(m[static_cast<std::size_t>(cell)], gelu(u)));
    }
  }

  // Index map spot check at r = 2: cell 3 must read sub-key rows (1, 1).
  bool index_ok = true;
  {
    const int d = 2, d_m = 4, d_ell = 2;
    ProductKeys pk = make_product_keys(d, d_m, d_ell, /*use_norm=*/false);
    pk.D(0, 0) = 1.0; pk.D(0, 1) = 0.0;  // t = x for the identity projection
    pk.D(1, 0) = 0.0; pk.D(1, 1) = 1.0;
    pk.C(0, 0) = 10.0; pk.C(1, 0) = 20.0;
    pk.Cprime(0, 0) = 1.0; pk.Cprime(1, 0) = 2.0;
    const std::vector<double> x{1.0, 1.0};  // s = {10, 20}, s' = {1, 2}
    const auto m = pkm_scores(x, pk);
    const double want[4] = {gelu(11.0), gelu(12.0), gelu(21.0), gelu(22.0)};
    for (int i = 0; i < 4; ++i)
      index_ok = index_ok && m[static_cast<std::size_t>(i)] == want[i];
  }

  detail = fmt("max rel err %.3g (tol %.0e); r=2 cell->sub-key map %s", worst,
               kTol, index_ok ? "exact" : "WRONG");
  return worst <= kTol && index_ok;
}

// --------------------------------------------------------------------------
// 4. Degeneracy: selecting everything reproduces the dense layer bit for
//    bit, and zero sabotage equals the exact full scan at g = 1.
// --------------------------------------------------------------------------
bool criterion4(std::string& detail) {
  RngStream rng(1004, "degen");
  bool full_ok = true, sab_ok = true;

  // Full-width block selection == dense scan, bit-identical.
  {
    const int d = 6, d_m = 24, g = 4;
    SffnLayerConfig cfg;
    cfg.kind = SelectorKind::VanillaM;
    cfg.geom = MemoryGeometry::make(d, d_m, g, d_m);  // b = B: all blocks
    SffnLayer layer(cfg, "t");
    layer.init_params(404);

    Matrix K, V;
    for (const NamedTensor& t : layer.state()) {
      if (t.name == "t.keys") K = t.value;
      if (t.name == "t.values") V = t.value;
    }

    const int N = 5;
    Matrix X(N, d);
    for (auto& v : X.data) v = rng.next_normal();
    Matrix Y;
    std::vector<int> token_ids(static_cast<std::size_t>(N), 0);
    layer.forward(X, token_ids, RunMode::Eval, 0, Y);
    for (int n = 0; n < N && full_ok; ++n) {
      const auto want = dense_ffn(X.row(n), K, V);
      for (int j = 0; j < d; ++j)
        full_ok = full_ok && Y(n, j) == want[static_cast<std::size_t>(j)];
    }
  }

  // Zero-sabotage approximate search == exact top-k scan (g = 1 view).
  {
    const int d = 6, d_m = 24, k = 5;
    SffnLayerConfig exact_cfg;
    exact_cfg.kind = SelectorKind::VanillaM;
    exact_cfg.geom = MemoryGeometry::make(d, d_m, 1, k);
    SffnLayerConfig sab_cfg = exact_cfg;
    sab_cfg.kind = SelectorKind::NaiveAnn;
    sab_cfg.sabotage_pct = 0.0;

    SffnLayer exact(exact_cfg, "t"), sab(sab_cfg, "t");
    exact.init_params(405);
    sab.init_params(405);

    const int N = 7;
    Matrix X(N, d);
    for (auto& v : X.data) v = rng.next_normal();
    std::vector<int> token_ids(static_cast<std::size_t>(N), 0);
    Matrix Ya, Yb;
    const SffnLayerCache ca = exact.forward(X, token_ids, RunMode::Eval, 0, Ya);
    const SffnLayerCache cb = sab.forward(X, token_ids, RunMode::Eval, 3, Yb);
    sab_ok = Ya.data == Yb.data;
    for (int n = 0; n < N && sab_ok; ++n)
      sab_ok = ca.routes[static_cast<std::size_t>(n)].view ==
               cb.routes[static_cast<std::size_t>(n)].view;
  }

  detail = fmt("full selection == dense scan: %s; zero sabotage == exact "
               "top-k: %s (both bit-level)",
               full_ok ? "yes" : "NO", sab_ok ? "yes" : "NO");
  return full_ok && sab_ok;
}

// --------------------------------------------------------------------------
// 5. Analytical gradients match finite differences for every selector,
//    layer-level and through a small end-to-end model.
// --------------------------------------------------------------------------
bool criterion5(std::string& detail) {
  const double start = now_seconds();
  int passed = 0, total = 0;
  double worst_rel = 0.0;
  std::string worst_case;
  for (const GradCheckCase& c : default_grad_check_cases()) {
    const GradCheckReport rep = grad_check_layer(c, 2024);
    ++total;
    if (rep.pass) ++passed;
    if (rep.max_rel_err > worst_rel) {
      worst_rel = rep.max_rel_err;
      worst_case = rep.case_name;
    }
  }
  for (SelectorKind kind : {SelectorKind::Dense, SelectorKind::VanillaM,
                            SelectorKind::Switch, SelectorKind::Pkm}) {
    const GradCheckReport rep = grad_check_model(kind, 2024);
    ++total;
    if (rep.pass) ++passed;
    if (rep.max_rel_err > worst_rel) {
      worst_rel = rep.max_rel_err;
      worst_case = rep.case_name;
    }
  }
  const double elapsed = now_seconds() - start;
  detail = fmt("%d/%d checks at rel 1e-4 / abs 1e-8; worst rel %.3g (%s); "
               "%.1fs (limit 60s)",
               passed, total, worst_rel, worst_case.c_str(), elapsed);
  return passed == total && elapsed < 60.0;
}

// --------------------------------------------------------------------------
// 6. The expected-overlap series equals g*b^2/B, and a Monte-Carlo
//    simulation of hash routing agrees within three standard errors.
// --------------------------------------------------------------------------
bool criterion6(std::string& detail) {
  const double kSeriesTol = 1e-9;
  double worst = 0.0;
  for (int B = 1; B <= 64; ++B)
    for (int b = 1; b <= B; ++b)
      for (int g : {1, 4, 4096}) {
        const double series = expected_overlap_analytical(B, b, g);
        const double closed = expected_overlap_closed_form(B, b, g);
        worst = std::max(
            worst, std::abs(series - closed) / std::max(1.0, std::abs(closed)));
      }
  const bool series_ok = worst <= kSeriesTol;

  // Hash-routed tokens at B = 16, b = 1, g = 4096: expect 256 shared cells.
  const MemoryGeometry geom = MemoryGeometry::make(64, 65536, 4096, 4096);
  const HashGateTable table = build_randhash(65536, geom, 606);
  RoutingTrace trace;
  trace.num_blocks = 16;
  trace.block_size = 4096;
  RngStream tokens(607, "tokens");
  const int events = 20000;
  trace.events.reserve(static_cast<std::size_t>(events));
  for (int i = 0; i < events; ++i) {
    RouteEvent e;
    e.layer = 0;
    e.seq = 0;
    e.pos = i;
    e.token = static_cast<int>(tokens.uniform_below(65536));
    const auto row = table.row(e.token);
    e.blocks.assign(row.begin(), row.end());
    trace.events.push_back(std::move(e));
  }
  RngStream pair_rng(608, "pairs");
  const OverlapEstimate est =
      expected_overlap_empirical(trace, 100000, pair_rng, 4096);
  const double want = expected_overlap_closed_form(16, 1, 4096);
  const bool mc_ok = std::abs(est.mean - want) <= 3.0 * est.std_error;

  detail = fmt("series max rel err %.3g over B<=64 (tol %.0e); MC %.4g +- "
               "%.3g vs %g at %lld pairs (3 sigma)",
               worst, kSeriesTol, est.mean, est.std_error, want,
               static_cast<long long>(est.pairs));
  return series_ok && mc_ok;
}

// --------------------------------------------------------------------------
// 7. Compute accounting reproduces the published cost table.
// --------------------------------------------------------------------------
bool criterion7(std::string& detail) {
  // Gate-scoring cost across all nine published block sizes (TFLOPs).
  struct GatePoint {
    int g;
    double tflops;
  };
  const GatePoint points[] = {{4096, 0.275}, {2048, 0.552}, {1024, 1.10},
                              {512, 2.20},   {256, 4.40},   {128, 8.80},
                              {64, 17.6},    {32, 35.2},    {1, 1124.0}};
  double worst_gate = 0.0;
  for (const GatePoint& p : points) {
    const double got = gate_flops(1024, 65536.0 / p.g, 4, 524288.0);
    worst_gate = std::max(worst_gate,
                          std::abs(got - p.tflops * 1e12) / (p.tflops * 1e12));
  }
  const bool gates_ok = worst_gate <= 0.01;

  // Whole-model training budgets at the published shape (ZFLOPs).
  ModelShape s;
  s.layers = 24;
  s.d = 1024;
  s.seq_len = 2048;
  s.vocab = 50257;
  s.sffn_layer_count = 4;
  s.selector = SelectorKind::Dense;
  s.geom = MemoryGeometry::make(1024, 4096, 4096, 4096);
  const double dense = model_flops(s, 60e9).train_total;
  s.selector = SelectorKind::VanillaM;
  s.geom = MemoryGeometry::make(1024, 65536, 4096, 4096);
  const double vanilla = model_flops(s, 60e9).train_total;
  s.selector = SelectorKind::Pkm;
  s.d_ell = 512;
  const double pkm = model_flops(s, 60e9).train_total;

  const double dense_err = std::abs(dense - 0.212e21) / 0.212e21;
  const double vanilla_err = std::abs(vanilla - 0.333e21) / 0.333e21;
  const double pkm_err = std::abs(pkm - 0.205e21) / 0.205e21;
  const bool budget_ok =
      dense_err <= 0.05 && vanilla_err <= 0.05 && pkm_err <= 0.05;
  const bool order_ok = pkm < dense && dense < vanilla;

  detail = fmt("9 gate entries max rel %.3g (tol 1%%); budgets dense/full-scan"
               "/product-key %.3g/%.3g/%.3g ZFLOPs rel (%.3g, %.3g, %.3g) "
               "(tol 5%%); ordering: %s",
               worst_gate, dense / 1e21, vanilla / 1e21, pkm / 1e21, dense_err,
               vanilla_err, pkm_err, order_ok ? "yes" : "NO");
  return gates_ok && budget_ok && order_ok;
}

// --------------------------------------------------------------------------
// 8. The balance penalty hits its analytic extremes exactly, and expert
//    gradients scale by exactly 1/sqrt(B).
// --------------------------------------------------------------------------
bool criterion8(std::string& detail) {
  bool ok = true;

  for (const int B : {4, 16}) {
    const int N = B;
    Matrix probs(N, B, 1.0 / B);
    std::vector<int> dispatch(static_cast<std::size_t>(N));
    for (int n = 0; n < N; ++n) dispatch[static_cast<std::size_t>(n)] = n;
    ok = ok && switch_balance_loss(probs, dispatch) == 1.0;

    Matrix onehot(N, B, 0.0);
    for (int n = 0; n < N; ++n) onehot(n, 0) = 1.0;
    std::vector<int> collapsed(static_cast<std::size_t>(N), 0);
    ok = ok && switch_balance_loss(onehot, collapsed) == static_cast<double>(B);
  }

  Matrix w(2, 2), grad_expert(2, 2, 3.0), grad_shared(2, 2, 3.0);
  std::vector<ParamRef> params{{"e", &w, &grad_expert, true},
                               {"s", &w, &grad_shared, false}};
  scale_expert_grads(params, 16);
  for (double v : grad_expert.data) ok = ok && v == 0.75;  // 3 / sqrt(16)
  for (double v : grad_shared.data) ok = ok && v == 3.0;

  detail = ok ? "uniform -> 1.0 and collapse -> B exact for B in {4, 16}; "
                "expert grads scale 3.0 -> 0.75 exactly at B = 16"
              : "an exact identity failed";
  return ok;
}

// --------------------------------------------------------------------------
// 9. Desk-scale training smoke across eight selector variants.
// --------------------------------------------------------------------------
struct Variant {
  const char* name;
  SelectorKind kind;
  int g;
  int k;
  int d_ell = 0;
  bool emit_trace = false;
};

ExperimentConfig variant_config(const Variant& v) {
  ExperimentConfig cfg;
  cfg.model.layers = 4;
  cfg.model.d = 64;
  cfg.model.heads = 1;
  cfg.model.seq_len = 128;
  cfg.model.vocab_size = 256;
  cfg.model.sffn_layers = {3};
  cfg.model.sffn.kind = v.kind;
  cfg.model.sffn.geom = MemoryGeometry::make(64, 1024, v.g, v.k);
  cfg.model.sffn.d_ell = v.d_ell;
  cfg.model.sffn.batch_norm =
      v.kind == SelectorKind::Pkm || v.kind == SelectorKind::PkmFfn;
  cfg.optimizer.peak_lr = 1e-3;
  cfg.optimizer.warmup_steps = 200;
  cfg.optimizer.total_steps = 2000;
  cfg.data.val_fraction = 0.1;
  cfg.data.batch_sequences = 2;
  cfg.data.val_windows = 8;
  cfg.steps = 2000;
  cfg.eval_interval = 200;
  cfg.seed = 2024;
  cfg.model.seed = 2024;
  return cfg;
}

double moving_avg(const std::vector<double>& v, std::size_t begin,
                  std::size_t count) {
  double acc = 0.0;
  for (std::size_t i = begin; i < begin + count; ++i) acc += v[i];
  return acc / static_cast<double>(count);
}

bool criterion9(std::string& detail) {
  const double start = now_seconds();
  const Variant variants[] = {
      {"dense", SelectorKind::Dense, 1024, 1024},
      {"vanillam-g16", SelectorKind::VanillaM, 16, 256},
      {"randhash-g256", SelectorKind::RandHash, 256, 256},
      {"switch-g256", SelectorKind::Switch, 256, 256},
      {"avg-k-g256", SelectorKind::AvgK, 256, 256},
      {"avg-k-g16", SelectorKind::AvgK, 16, 256, 0, true},
      {"pkm", SelectorKind::Pkm, 1, 256, 32},
      {"pkm-ffn", SelectorKind::PkmFfn, 1, 256, 32},
  };

  const std::string corpus = generate_corpus(1 << 20, 424242);
  std::printf("        corpus: %zu bytes of generated prose\n", corpus.size());

  struct Outcome {
    std::string name;
    double initial = 0.0, final_ppl = 0.0, seconds = 0.0;
    bool ok = false;
    std::string why;
  };
  std::vector<Outcome> outcomes;
  fs::create_directories(kArtifactDir);

  TrainResult pkm_first;
  std::vector<NamedTensor> pkm_state;

  for (const Variant& v : variants) {
    const double t0 = now_seconds();
    ExperimentConfig cfg = variant_config(v);
    TransformerLM model;
    const TrainResult r = train_lm(cfg, corpus, &model);

    Outcome o;
    o.name = v.name;
    o.initial = r.initial_val_ppl;
    o.final_ppl = r.final_val_ppl;
    o.seconds = now_seconds() - t0;
    o.ok = true;
    if (r.diverged || r.steps_run != 2000) {
      o.ok = false;
      o.why = "diverged or stopped early";
    }
    for (const MetricsRow& row : r.metrics)
      if (!std::isfinite(row.val_ppl)) {
        o.ok = false;
        o.why = "non-finite validation perplexity";
      }
    for (double l : r.step_losses)
      if (!std::isfinite(l)) {
        o.ok = false;
        o.why = "non-finite training loss";
      }
    if (o.ok && !(r.final_val_ppl < r.initial_val_ppl)) {
      o.ok = false;
      o.why = "no improvement over the initial model";
    }
    if (o.ok) {
      const double head = moving_avg(r.step_losses, 0, 200);
      const double tail = moving_avg(r.step_losses, 1800, 200);
      if (!(tail < head)) {
        o.ok = false;
        o.why = fmt("trailing loss average %.4g not below leading %.4g", tail,
                    head);
      }
    }

    if (std::strcmp(v.name, "pkm") == 0) {
      pkm_first = r;
      pkm_state = model.state();
    }
    if (v.emit_trace && o.ok) {
      const RoutingTrace trace = routing_trace(model, cfg, corpus);
      write_trace_csv(std::string(kArtifactDir) + "/avgk_g16_trace.csv", trace);
    }

    std::printf("        %-14s ppl %8.3f -> %8.3f   %6.1fs  %s%s\n", v.name,
                o.initial, o.final_ppl, o.seconds, o.ok ? "ok" : "FAIL ",
                o.why.c_str());
    std::fflush(stdout);
    outcomes.push_back(std::move(o));
  }

  // Reproducibility: retraining the product-key variant must reproduce the
  // losses and the final parameters bit for bit.
  bool repro_ok = true;
  {
    ExperimentConfig cfg = variant_config(variants[6]);
    TransformerLM model;
    const TrainResult r = train_lm(cfg, corpus, &model);
    repro_ok = r.step_losses == pkm_first.step_losses &&
               r.final_val_ppl == pkm_first.final_val_ppl;
    const auto state = model.state();
    repro_ok = repro_ok && state.size() == pkm_state.size();
    for (std::size_t i = 0; repro_ok && i < state.size(); ++i)
      repro_ok = state[i].name == pkm_state[i].name &&
                 state[i].value.data == pkm_state[i].value.data;
    std::printf("        pkm retrained: %s\n",
                repro_ok ? "bit-identical" : "MISMATCH");
    std::fflush(stdout);
  }

  // Cross-variant orderings are environment-sensitive at this scale, so they
  // are reported, never asserted.
  std::vector<const Outcome*> order;
  for (const Outcome& o : outcomes) order.push_back(&o);
  std::sort(order.begin(), order.end(), [](const Outcome* a, const Outcome* b) {
    return a->final_ppl < b->final_ppl;
  });
  std::string ranking = "        final ppl ranking (reported only):";
  for (const Outcome* o : order)
    ranking += fmt(" %s %.1f;", o->name.c_str(), o->final_ppl);
  std::printf("%s\n", ranking.c_str());

  bool all_ok = repro_ok;
  int good = 0;
  for (const Outcome& o : outcomes) {
    all_ok = all_ok && o.ok;
    good += o.ok ? 1 : 0;
  }
  const double minutes = (now_seconds() - start) / 60.0;
  detail = fmt("%d/8 variants trained 2000 steps and improved; pkm rerun %s; "
               "%.1f min (30 min target, reported only)",
               good, repro_ok ? "bit-identical" : "MISMATCH", minutes);
  return all_ok;
}

// --------------------------------------------------------------------------
// 10. Static hash routing stays near-uniform at scale; the learned
//     mean-key histogram is reported for qualitative comparison.
// --------------------------------------------------------------------------
bool criterion10(std::string& detail) {
  const MemoryGeometry geom = MemoryGeometry::make(8, 16, 1, 2);  // B=16, b=2
  const HashGateTable table = build_randhash(65536, geom, 909);
  RngStream tokens(910, "tokens");
  RoutingTrace trace;
  trace.num_blocks = 16;
  trace.block_size = 1;
  const int events = 1000000;
  trace.events.reserve(static_cast<std::size_t>(events));
  for (int i = 0; i < events; ++i) {
    RouteEvent e;
    e.pos = i;
    e.token = static_cast<int>(tokens.uniform_below(65536));
    const auto row = table.row(e.token);
    e.blocks.assign(row.begin(), row.end());
    trace.events.push_back(std::move(e));
  }
  const std::vector<double> hist = load_balance_histogram(trace);
  double sum = 0.0;
  for (double f : hist) sum += f;
  const double ratio = hist.front() / hist.back();
  const bool ratio_ok = hist.size() == 16 && ratio <= 1.2;
  const bool sum_ok = std::abs(sum - 1.0) <= 1e-12;

  // Qualitative: the trained mean-key selector's histogram from criterion 9.
  const std::string trace_path =
      std::string(kArtifactDir) + "/avgk_g16_trace.csv";
  if (fs::exists(trace_path)) {
    const RoutingTrace learned = read_trace_csv(trace_path);
    const std::vector<double> lh = load_balance_histogram(learned);
    std::string top;
    for (std::size_t i = 0; i < lh.size() && i < 8; ++i)
      top += fmt(" %.3f", lh[i]);
    std::printf("        learned mean-key histogram (B=%d, top shares, "
                "uniform=%.4f):%s ...\n",
                learned.num_blocks, 1.0 / learned.num_blocks, top.c_str());
  } else {
    std::printf("        (no learned trace on disk; run criterion 9 first "
                "for the qualitative comparison)\n");
  }
  std::fflush(stdout);

  detail = fmt("hash histogram over 1e6 events: max/min %.4f (limit 1.2), "
               "fraction sum 1%+.2g",
               ratio, sum - 1.0);
  return ratio_ok && sum_ok;
}

struct Criterion {
  int id;
  const char* name;
  bool (*fn)(std::string&);
};

const Criterion kCriteria[] = {
    {1, "mixture-of-experts equals flat blocked memory", criterion1},
    {2, "mean-key block scores are linear", criterion2},
    {3, "factorized scorers equal materialized key tables", criterion3},
    {4, "full selection and zero sabotage degeneracies are bit-exact",
     criterion4},
    {5, "analytical gradients match finite differences", criterion5},
    {6, "expected overlap: series, closed form, Monte Carlo", criterion6},
    {7, "compute accounting matches the published cost table", criterion7},
    {8, "balance penalty extremes and expert-gradient scaling are exact",
     criterion8},
    {9, "eight selector variants train deterministically end to end",
     criterion9},
    {10, "static hash routing stays near-uniform at scale", criterion10},
};

}  // namespace

int main(int argc, char** argv) {
  std::set<int> wanted;
  for (int i = 1; i < argc; ++i) wanted.insert(std::atoi(argv[i]));

  int failures = 0;
  for (const Criterion& c : kCriteria) {
    if (!wanted.empty() && !wanted.contains(c.id)) continue;
    std::printf("[....] criterion %2d: %s\n", c.id, c.name);
    std::fflush(stdout);
    std::string detail;
    bool pass = false;
    try {
      pass = c.fn(detail);
    } catch (const std::exception& e) {
      detail = std::string("exception: ") + e.what();
    }
    std::printf("[%s] criterion %2d: %s\n        %s\n", pass ? "PASS" : "FAIL",
                c.id, c.name, detail.c_str());
    std::fflush(stdout);
    failures += pass ? 0 : 1;
  }
  if (failures == 0) {
    std::printf("all acceptance criteria passed\n");
  } else {
    std::printf("%d acceptance criteria FAILED\n", failures);
  }
  return failures;
}
