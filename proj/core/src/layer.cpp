#include "sffn/layer.hpp"

#include <cmath>
#include <stdexcept>
#include <utility>

#include "sffn/ops.hpp"
#include "sffn/rng.hpp"

namespace sffn {
namespace {

// Keys the per-token NaiveAnn swap stream by (step, position in batch).
std::uint64_t swap_counter(long step, int token_index) {
  return (static_cast<std::uint64_t>(step) << 20) |
         static_cast<std::uint64_t>(token_index);
}

void fill_normal(Matrix& m, RngStream& rng, double scale) {
  for (double& v : m.data) v = rng.next_normal() * scale;
}

}  // namespace

SffnLayer::SffnLayer(const SffnLayerConfig& cfg, std::string param_prefix)
    : cfg_(cfg), prefix_(std::move(param_prefix)) {
  const MemoryGeometry& gm = cfg_.geom;
  keys_ = Matrix(gm.d_m, gm.d);
  values_ = Matrix(gm.d_m, gm.d);
  d_keys_ = Matrix(gm.d_m, gm.d);
  d_values_ = Matrix(gm.d_m, gm.d);

  switch (cfg_.kind) {
    case SelectorKind::Dense:
      if (gm.k != gm.d_m)
        throw std::invalid_argument("dense layer requires k == d_m");
      break;
    case SelectorKind::VanillaM:
    case SelectorKind::AvgK:
      break;
    case SelectorKind::NaiveAnn:
      if (cfg_.sabotage_pct < 0.0)
        throw std::invalid_argument("sabotage_pct must be >= 0");
      break;
    case SelectorKind::RandHash:
      if (cfg_.vocab_size <= 0)
        throw std::invalid_argument("randhash selector requires vocab_size");
      table_ = build_randhash(cfg_.vocab_size, gm, cfg_.seed);
      break;
    case SelectorKind::Switch:
      if (gm.active_blocks() != 1)
        throw std::invalid_argument(
            "switch selector routes each token to one block (k must equal g)");
      gate_ = Matrix(gm.blocks(), gm.d);
      d_gate_ = Matrix(gm.blocks(), gm.d);
      break;
    case SelectorKind::Lorkm: {
      LowRankKeys lk = make_low_rank_keys(gm.d, gm.d_m,
                                          cfg_.d_ell, cfg_.batch_norm);
      qproj_ = std::move(lk.D);
      lrk_ = std::move(lk.Ktilde);
      d_qproj_ = Matrix(gm.d, cfg_.d_ell);
      d_lrk_ = Matrix(gm.d_m, cfg_.d_ell);
      break;
    }
    case SelectorKind::Pkm:
    case SelectorKind::PkmFfn: {
      ProductKeys pk = make_product_keys(gm.d, gm.d_m,
                                         cfg_.d_ell, cfg_.batch_norm);
      qproj_ = std::move(pk.D);
      suba_ = std::move(pk.C);
      subb_ = std::move(pk.Cprime);
      d_qproj_ = Matrix(gm.d, cfg_.d_ell);
      d_suba_ = Matrix(suba_.rows, suba_.cols);
      d_subb_ = Matrix(subb_.rows, subb_.cols);
      break;
    }
    case SelectorKind::Controller:
      if (gm.k != gm.blocks())
        throw std::invalid_argument(
            "controller selects one cell per block (k must equal d_m / g)");
      if (cfg_.controller_low_rank) {
        if (cfg_.d_ell <= 0 || cfg_.d_ell > gm.d)
          throw std::invalid_argument("controller d_ell must be in (0, d]");
        cproj_ = Matrix(gm.d, cfg_.d_ell);
        ckeys_ = Matrix(gm.d_m, cfg_.d_ell);
        d_cproj_ = Matrix(gm.d, cfg_.d_ell);
        d_ckeys_ = Matrix(gm.d_m, cfg_.d_ell);
      }
      break;
  }

  if (cfg_.batch_norm) {
    if (cfg_.kind != SelectorKind::Pkm && cfg_.kind != SelectorKind::PkmFfn &&
        cfg_.kind != SelectorKind::Lorkm)
      throw std::invalid_argument(
          "batch_norm applies only to factorized-query selectors");
    norm_ = BatchNorm1d(cfg_.d_ell);
    d_gamma_ = Matrix(1, cfg_.d_ell);
    d_beta_ = Matrix(1, cfg_.d_ell);
  }
}

bool SffnLayer::has_full_keys() const {
  switch (cfg_.kind) {
    case SelectorKind::Pkm:
    case SelectorKind::Lorkm:
      return false;
    default:
      return true;
  }
}

bool SffnLayer::has_product_keys() const {
  return cfg_.kind == SelectorKind::Pkm || cfg_.kind == SelectorKind::PkmFfn;
}

bool SffnLayer::cell_level() const {
  switch (cfg_.kind) {
    case SelectorKind::Pkm:
    case SelectorKind::Lorkm:
    case SelectorKind::PkmFfn:
    case SelectorKind::Controller:
    case SelectorKind::NaiveAnn:
      return true;
    default:
      return false;
  }
}

int SffnLayer::view_blocks() const {
  return cell_level() ? cfg_.geom.d_m : cfg_.geom.blocks();
}

int SffnLayer::view_block_size() const {
  return cell_level() ? 1 : cfg_.geom.g;
}

void SffnLayer::init_params(std::uint64_t seed) {
  const MemoryGeometry& gm = cfg_.geom;
  const double key_scale = 1.0 / std::sqrt(static_cast<double>(gm.d));
  RngStream kr(seed, prefix_ + ".keys");
  fill_normal(keys_, kr, key_scale);
  RngStream vr(seed, prefix_ + ".values");
  fill_normal(values_, vr, 1.0 / std::sqrt(static_cast<double>(gm.d_m)));
  if (gate_.rows > 0) {
    RngStream gr(seed, prefix_ + ".gate");
    fill_normal(gate_, gr, key_scale);
  }
  if (qproj_.rows > 0) {
    RngStream qr(seed, prefix_ + ".qproj");
    fill_normal(qproj_, qr, key_scale);
  }
  const double sub_scale =
      cfg_.d_ell > 0 ? 1.0 / std::sqrt(cfg_.d_ell / 2.0) : 0.0;
  if (suba_.rows > 0) {
    RngStream ar(seed, prefix_ + ".subkeys_a");
    fill_normal(suba_, ar, sub_scale);
    RngStream br(seed, prefix_ + ".subkeys_b");
    fill_normal(subb_, br, sub_scale);
  }
  if (lrk_.rows > 0) {
    RngStream lr(seed, prefix_ + ".lr_keys");
    fill_normal(lrk_, lr, 1.0 / std::sqrt(static_cast<double>(cfg_.d_ell)));
  }
  if (cproj_.rows > 0) {
    RngStream cr(seed, prefix_ + ".ctrl_proj");
    fill_normal(cproj_, cr, key_scale);
    RngStream kr2(seed, prefix_ + ".ctrl_keys");
    fill_normal(ckeys_, kr2, 1.0 / std::sqrt(static_cast<double>(cfg_.d_ell)));
  }
}

SffnLayerCache SffnLayer::forward(const Matrix& X,
                                  const std::vector<int>& token_ids,
                                  RunMode mode, long step, Matrix& Y,
                                  bool update_norm_stats) {
  return run(X, token_ids, mode, step, Y, update_norm_stats, nullptr);
}

SffnLayerCache SffnLayer::forward_frozen(const Matrix& X,
                                         const std::vector<int>& token_ids,
                                         const SffnLayerCache& base,
                                         Matrix& Y) {
  return run(X, token_ids, base.mode, 0, Y, false, &base);
}

SffnLayerCache SffnLayer::run(const Matrix& X,
                              const std::vector<int>& token_ids, RunMode mode,
                              long step, Matrix& Y, bool update_norm_stats,
                              const SffnLayerCache* frozen) {
  const MemoryGeometry& gm = cfg_.geom;
  if (X.cols != gm.d)
    throw std::invalid_argument("layer input width does not match geometry");
  const int N = X.rows;
  if (cfg_.kind == SelectorKind::RandHash &&
      static_cast<int>(token_ids.size()) != N)
    throw std::invalid_argument("token_ids must cover every row");
  if (frozen && static_cast<int>(frozen->routes.size()) != N &&
      cfg_.kind != SelectorKind::Dense)
    throw std::invalid_argument("frozen routing does not match batch");

  SffnLayerCache cache;
  cache.X = X;
  cache.token_ids = token_ids;
  cache.mode = mode;
  cache.routes.resize(cfg_.kind == SelectorKind::Dense ? 0 : N);
  Y = Matrix(N, gm.d);

  const int B = gm.blocks();
  const int b = gm.active_blocks();
  const int g = gm.g;

  // Expands ascending block ids into ascending cell ids; all per-token
  // accumulation below walks cells in this fixed order.
  auto block_cells = [&](const std::vector<int>& blocks) {
    std::vector<int> cells;
    cells.reserve(blocks.size() * static_cast<std::size_t>(g));
    for (int blk : blocks)
      for (int j = 0; j < g; ++j) cells.push_back(blk * g + j);
    return cells;
  };

  switch (cfg_.kind) {
    case SelectorKind::Dense: {
      cache.U = matmul_nt(X, keys_);
      Matrix M = gelu(cache.U);
      Y = matmul(M, values_);
      break;
    }
    case SelectorKind::VanillaM:
    case SelectorKind::NaiveAnn: {
      cache.U = matmul_nt(X, keys_);
      for (int n = 0; n < N; ++n) {
        std::span<const double> urow = cache.U.row(n);
        std::vector<double> mvals(gm.d_m);
        for (int c = 0; c < gm.d_m; ++c) mvals[c] = gelu(urow[c]);
        TokenRouting& rt = cache.routes[n];
        if (frozen) {
          rt.view = frozen->routes[n].view;
        } else if (cfg_.kind == SelectorKind::VanillaM) {
          std::vector<double> scores =
              aggregate_block_scores(mvals, g, cfg_.aggregator);
          rt.view = topk_indices(scores, b);
        } else {
          RngStream swap_rng(cfg_.seed, prefix_ + ".swap",
                             swap_counter(step, n));
          BlockSelection sel = select_naive_ann(mvals, gm.k,
                                                cfg_.sabotage_pct, swap_rng);
          rt.view = std::move(sel.indices);
        }
        const std::vector<int> cells =
            cfg_.kind == SelectorKind::VanillaM ? block_cells(rt.view)
                                                : rt.view;
        for (int c : cells) axpy(mvals[c], values_.row(c), Y.row(n));
      }
      break;
    }
    case SelectorKind::AvgK: {
      Matrix block_keys(B, gm.d);
      for (int blk = 0; blk < B; ++blk) {
        std::span<double> out = block_keys.row(blk);
        for (int j = 0; j < g; ++j) {
          std::span<const double> kr = keys_.row(blk * g + j);
          for (int cidx = 0; cidx < gm.d; ++cidx) out[cidx] += kr[cidx];
        }
        for (double& v : out) v /= static_cast<double>(g);
      }
      Matrix S = matmul_nt(X, block_keys);
      for (int n = 0; n < N; ++n) {
        TokenRouting& rt = cache.routes[n];
        if (frozen) {
          rt.view = frozen->routes[n].view;
        } else {
          std::vector<double> srow(S.row(n).begin(), S.row(n).end());
          rt.view = topk_indices(srow, b);
        }
        const std::vector<int> cells = block_cells(rt.view);
        rt.u.reserve(cells.size());
        for (int c : cells) rt.u.push_back(dot(X.row(n), keys_.row(c)));
        for (std::size_t j = 0; j < cells.size(); ++j)
          axpy(gelu(rt.u[j]), values_.row(cells[j]), Y.row(n));
      }
      break;
    }
    case SelectorKind::RandHash: {
      for (int n = 0; n < N; ++n) {
        TokenRouting& rt = cache.routes[n];
        if (frozen) {
          rt.view = frozen->routes[n].view;
        } else {
          BlockSelection sel = select_randhash(token_ids[n], table_);
          rt.view = std::move(sel.indices);
        }
        const std::vector<int> cells = block_cells(rt.view);
        rt.u.reserve(cells.size());
        for (int c : cells) rt.u.push_back(dot(X.row(n), keys_.row(c)));
        for (std::size_t j = 0; j < cells.size(); ++j)
          axpy(gelu(rt.u[j]), values_.row(cells[j]), Y.row(n));
      }
      break;
    }
    case SelectorKind::Switch: {
      Matrix logits = matmul_nt(X, gate_);
      cache.probs = Matrix(N, B);
      for (int n = 0; n < N; ++n) {
        std::vector<double> p =
            softmax(std::vector<double>(logits.row(n).begin(),
                                        logits.row(n).end()));
        std::copy(p.begin(), p.end(), cache.probs.row(n).begin());
        TokenRouting& rt = cache.routes[n];
        int a;
        if (frozen) {
          a = frozen->routes[n].switch_block;
        } else {
          a = 0;
          for (int i = 1; i < B; ++i)
            if (p[i] > p[a]) a = i;
        }
        rt.switch_block = a;
        rt.view = {a};
        const double wgt = p[a];
        rt.u.reserve(g);
        for (int j = 0; j < g; ++j) {
          const int c = a * g + j;
          rt.u.push_back(dot(X.row(n), keys_.row(c)));
          axpy(wgt * gelu(rt.u.back()), values_.row(c), Y.row(n));
        }
      }
      break;
    }
    case SelectorKind::Pkm:
    case SelectorKind::Lorkm:
    case SelectorKind::PkmFfn: {
      cache.T_pre = matmul(X, qproj_);
      if (cfg_.batch_norm) {
        if (mode == RunMode::Train)
          cache.T = norm_.forward_train(cache.T_pre, &cache.bn,
                                        update_norm_stats);
        else
          cache.T = norm_.forward_eval(cache.T_pre);
      } else {
        cache.T = cache.T_pre;
      }
      const int r = has_product_keys() ? suba_.rows : 0;
      const int half = cfg_.d_ell / 2;
      Matrix S, Sp, Mpre;
      if (has_product_keys()) {
        Matrix Th(N, half), Tt(N, half);
        for (int n = 0; n < N; ++n)
          for (int j = 0; j < half; ++j) {
            Th(n, j) = cache.T(n, j);
            Tt(n, j) = cache.T(n, half + j);
          }
        S = matmul_nt(Th, suba_);
        Sp = matmul_nt(Tt, subb_);
      } else {
        Mpre = matmul_nt(cache.T, lrk_);
      }
      for (int n = 0; n < N; ++n) {
        std::vector<double> qv(gm.d_m), mv(gm.d_m);
        if (has_product_keys()) {
          std::span<const double> srow = S.row(n);
          std::span<const double> sprow = Sp.row(n);
          for (int c = 0; c < gm.d_m; ++c) qv[c] = srow[c / r] + sprow[c % r];
        } else {
          std::copy(Mpre.row(n).begin(), Mpre.row(n).end(), qv.begin());
        }
        for (int c = 0; c < gm.d_m; ++c) mv[c] = gelu(qv[c]);
        TokenRouting& rt = cache.routes[n];
        rt.view = frozen ? frozen->routes[n].view : topk_indices(mv, gm.k);
        rt.q.reserve(rt.view.size());
        rt.m.reserve(rt.view.size());
        for (int c : rt.view) {
          rt.q.push_back(qv[c]);
          rt.m.push_back(mv[c]);
        }
        if (cfg_.kind == SelectorKind::PkmFfn) {
          rt.u.reserve(rt.view.size());
          for (std::size_t j = 0; j < rt.view.size(); ++j) {
            const int c = rt.view[j];
            rt.u.push_back(dot(X.row(n), keys_.row(c)));
            axpy(rt.m[j] * gelu(rt.u[j]), values_.row(c), Y.row(n));
          }
        } else {
          for (std::size_t j = 0; j < rt.view.size(); ++j)
            axpy(rt.m[j], values_.row(rt.view[j]), Y.row(n));
        }
      }
      break;
    }
    case SelectorKind::Controller: {
      Matrix G;
      if (cfg_.controller_low_rank) {
        cache.Tc = matmul(X, cproj_);
        G = matmul_nt(cache.Tc, ckeys_);
      } else {
        cache.U = matmul_nt(X, keys_);
      }
      const Matrix& score = cfg_.controller_low_rank ? G : cache.U;
      for (int n = 0; n < N; ++n) {
        TokenRouting& rt = cache.routes[n];
        if (frozen) {
          rt.view = frozen->routes[n].view;
        } else {
          rt.view.reserve(B);
          std::span<const double> srow = score.row(n);
          for (int blk = 0; blk < B; ++blk) {
            int best = blk * g;
            for (int j = 1; j < g; ++j)
              if (srow[blk * g + j] > srow[best]) best = blk * g + j;
            rt.view.push_back(best);
          }
        }
        rt.u.reserve(rt.view.size());
        if (cfg_.controller_low_rank) rt.w.reserve(rt.view.size());
        for (std::size_t j = 0; j < rt.view.size(); ++j) {
          const int c = rt.view[j];
          const double uv = cfg_.controller_low_rank
                                ? dot(X.row(n), keys_.row(c))
                                : cache.U(n, c);
          rt.u.push_back(uv);
          double wgt = 1.0;
          if (cfg_.controller_low_rank) {
            wgt = G(n, c);
            rt.w.push_back(wgt);
          }
          axpy(wgt * gelu(uv), values_.row(c), Y.row(n));
        }
      }
      break;
    }
  }
  return cache;
}

Matrix SffnLayer::backward(const SffnLayerCache& cache, const Matrix& dY,
                           const Matrix& dProbs) {
  const MemoryGeometry& gm = cfg_.geom;
  const int N = cache.X.rows;
  if (cache.mode != RunMode::Train)
    throw std::logic_error(
        "backward needs a training-mode cache (eval caches lack the "
        "batch statistics the normalizer gradient depends on)");
  if (dY.rows != N || dY.cols != gm.d)
    throw std::invalid_argument("layer output gradient has the wrong shape");
  Matrix dX(N, gm.d);
  const int g = gm.g;

  switch (cfg_.kind) {
    case SelectorKind::Dense: {
      Matrix M = gelu(cache.U);
      Matrix dM = matmul_nt(dY, values_);
      Matrix dV = matmul_tn(M, dY);
      for (std::size_t i = 0; i < dV.data.size(); ++i)
        d_values_.data[i] += dV.data[i];
      Matrix dU(N, gm.d_m);
      for (std::size_t i = 0; i < dU.data.size(); ++i)
        dU.data[i] = dM.data[i] * gelu_grad(cache.U.data[i]);
      Matrix dK = matmul_tn(dU, cache.X);
      for (std::size_t i = 0; i < dK.data.size(); ++i)
        d_keys_.data[i] += dK.data[i];
      dX = matmul(dU, keys_);
      break;
    }
    case SelectorKind::VanillaM:
    case SelectorKind::NaiveAnn: {
      for (int n = 0; n < N; ++n) {
        const TokenRouting& rt = cache.routes[n];
        std::span<const double> dyr = dY.row(n);
        std::span<const double> xr = cache.X.row(n);
        auto cell_back = [&](int c) {
          const double u = cache.U(n, c);
          const double m = gelu(u);
          axpy(m, dyr, d_values_.row(c));
          const double dm = dot(dyr, values_.row(c));
          const double du = dm * gelu_grad(u);
          axpy(du, xr, d_keys_.row(c));
          axpy(du, keys_.row(c), dX.row(n));
        };
        if (cfg_.kind == SelectorKind::VanillaM) {
          for (int blk : rt.view)
            for (int j = 0; j < g; ++j) cell_back(blk * g + j);
        } else {
          for (int c : rt.view) cell_back(c);
        }
      }
      break;
    }
    case SelectorKind::AvgK:
    case SelectorKind::RandHash: {
      for (int n = 0; n < N; ++n) {
        const TokenRouting& rt = cache.routes[n];
        std::span<const double> dyr = dY.row(n);
        std::span<const double> xr = cache.X.row(n);
        std::size_t slot = 0;
        for (int blk : rt.view)
          for (int j = 0; j < g; ++j, ++slot) {
            const int c = blk * g + j;
            const double u = rt.u[slot];
            axpy(gelu(u), dyr, d_values_.row(c));
            const double dm = dot(dyr, values_.row(c));
            const double du = dm * gelu_grad(u);
            axpy(du, xr, d_keys_.row(c));
            axpy(du, keys_.row(c), dX.row(n));
          }
      }
      break;
    }
    case SelectorKind::Switch: {
      const int B = gm.blocks();
      Matrix dLogits(N, B);
      for (int n = 0; n < N; ++n) {
        const TokenRouting& rt = cache.routes[n];
        const int a = rt.switch_block;
        const double wgt = cache.probs(n, a);
        std::span<const double> dyr = dY.row(n);
        std::span<const double> xr = cache.X.row(n);
        double dw = 0.0;
        for (int j = 0; j < g; ++j) {
          const int c = a * g + j;
          const double u = rt.u[static_cast<std::size_t>(j)];
          const double m = gelu(u);
          axpy(wgt * m, dyr, d_values_.row(c));
          const double dcoeff = dot(dyr, values_.row(c));
          dw += dcoeff * m;
          const double du = dcoeff * wgt * gelu_grad(u);
          axpy(du, xr, d_keys_.row(c));
          axpy(du, keys_.row(c), dX.row(n));
        }
        std::vector<double> dp(static_cast<std::size_t>(B), 0.0);
        dp[static_cast<std::size_t>(a)] = dw;
        if (dProbs.rows == N && dProbs.cols == B) {
          std::span<const double> extra = dProbs.row(n);
          for (int i = 0; i < B; ++i) dp[static_cast<std::size_t>(i)] += extra[i];
        }
        std::span<const double> p = cache.probs.row(n);
        double pdot = 0.0;
        for (int i = 0; i < B; ++i) pdot += dp[static_cast<std::size_t>(i)] * p[i];
        for (int i = 0; i < B; ++i)
          dLogits(n, i) = p[i] * (dp[static_cast<std::size_t>(i)] - pdot);
      }
      Matrix dG = matmul_tn(dLogits, cache.X);
      for (std::size_t i = 0; i < dG.data.size(); ++i)
        d_gate_.data[i] += dG.data[i];
      Matrix dXg = matmul(dLogits, gate_);
      for (std::size_t i = 0; i < dXg.data.size(); ++i)
        dX.data[i] += dXg.data[i];
      break;
    }
    case SelectorKind::Pkm:
    case SelectorKind::Lorkm:
    case SelectorKind::PkmFfn: {
      const int half = cfg_.d_ell / 2;
      const int r = has_product_keys() ? suba_.rows : 0;
      Matrix dS, dSp;
      Matrix dT(N, cfg_.d_ell);
      if (has_product_keys()) {
        dS = Matrix(N, r);
        dSp = Matrix(N, r);
      }
      for (int n = 0; n < N; ++n) {
        const TokenRouting& rt = cache.routes[n];
        std::span<const double> dyr = dY.row(n);
        std::span<const double> xr = cache.X.row(n);
        for (std::size_t j = 0; j < rt.view.size(); ++j) {
          const int c = rt.view[j];
          const double m = rt.m[j];
          double dm;
          if (cfg_.kind == SelectorKind::PkmFfn) {
            const double u = rt.u[j];
            const double gu = gelu(u);
            axpy(m * gu, dyr, d_values_.row(c));
            const double dcoeff = dot(dyr, values_.row(c));
            const double du = dcoeff * m * gelu_grad(u);
            axpy(du, xr, d_keys_.row(c));
            axpy(du, keys_.row(c), dX.row(n));
            dm = dcoeff * gu;
          } else {
            axpy(m, dyr, d_values_.row(c));
            dm = dot(dyr, values_.row(c));
          }
          const double dq = dm * gelu_grad(rt.q[j]);
          if (has_product_keys()) {
            dS(n, c / r) += dq;
            dSp(n, c % r) += dq;
          } else {
            axpy(dq, cache.T.row(n), d_lrk_.row(c));
            axpy(dq, lrk_.row(c), dT.row(n));
          }
        }
      }
      if (has_product_keys()) {
        Matrix Th(N, half), Tt(N, half);
        for (int n = 0; n < N; ++n)
          for (int j = 0; j < half; ++j) {
            Th(n, j) = cache.T(n, j);
            Tt(n, j) = cache.T(n, half + j);
          }
        Matrix dA = matmul_tn(dS, Th);
        for (std::size_t i = 0; i < dA.data.size(); ++i)
          d_suba_.data[i] += dA.data[i];
        Matrix dB = matmul_tn(dSp, Tt);
        for (std::size_t i = 0; i < dB.data.size(); ++i)
          d_subb_.data[i] += dB.data[i];
        Matrix dTh = matmul(dS, suba_);
        Matrix dTt = matmul(dSp, subb_);
        for (int n = 0; n < N; ++n)
          for (int j = 0; j < half; ++j) {
            dT(n, j) = dTh(n, j);
            dT(n, half + j) = dTt(n, j);
          }
      }
      Matrix dTpre;
      if (cfg_.batch_norm) {
        if (cache.mode != RunMode::Train)
          throw std::logic_error(
              "backward through the normalizer requires a train-mode cache");
        dTpre = norm_.backward(dT, cache.bn, d_gamma_, d_beta_);
      } else {
        dTpre = std::move(dT);
      }
      Matrix dD = matmul_tn(cache.X, dTpre);
      for (std::size_t i = 0; i < dD.data.size(); ++i)
        d_qproj_.data[i] += dD.data[i];
      Matrix dXq = matmul_nt(dTpre, qproj_);
      for (std::size_t i = 0; i < dXq.data.size(); ++i)
        dX.data[i] += dXq.data[i];
      break;
    }
    case SelectorKind::Controller: {
      Matrix dTc;
      if (cfg_.controller_low_rank) dTc = Matrix(N, cfg_.d_ell);
      for (int n = 0; n < N; ++n) {
        const TokenRouting& rt = cache.routes[n];
        std::span<const double> dyr = dY.row(n);
        std::span<const double> xr = cache.X.row(n);
        for (std::size_t j = 0; j < rt.view.size(); ++j) {
          const int c = rt.view[j];
          const double u = rt.u[j];
          const double gu = gelu(u);
          const double wgt = cfg_.controller_low_rank ? rt.w[j] : 1.0;
          axpy(wgt * gu, dyr, d_values_.row(c));
          const double dcoeff = dot(dyr, values_.row(c));
          const double du = dcoeff * wgt * gelu_grad(u);
          axpy(du, xr, d_keys_.row(c));
          axpy(du, keys_.row(c), dX.row(n));
          if (cfg_.controller_low_rank) {
            const double dscore = dcoeff * gu;
            axpy(dscore, cache.Tc.row(n), d_ckeys_.row(c));
            axpy(dscore, ckeys_.row(c), dTc.row(n));
          }
        }
      }
      if (cfg_.controller_low_rank) {
        Matrix dP = matmul_tn(cache.X, dTc);
        for (std::size_t i = 0; i < dP.data.size(); ++i)
          d_cproj_.data[i] += dP.data[i];
        Matrix dXc = matmul_nt(dTc, cproj_);
        for (std::size_t i = 0; i < dXc.data.size(); ++i)
          dX.data[i] += dXc.data[i];
      }
      break;
    }
  }
  return dX;
}

std::vector<ParamRef> SffnLayer::params() {
  std::vector<ParamRef> out;
  auto add = [&](const char* name, Matrix& v, Matrix& gr, bool expert) {
    if (v.rows > 0) out.push_back({prefix_ + "." + name, &v, &gr, expert});
  };
  add("keys", keys_, d_keys_, true);
  add("values", values_, d_values_, true);
  add("gate", gate_, d_gate_, false);
  add("qproj", qproj_, d_qproj_, false);
  add("subkeys_a", suba_, d_suba_, false);
  add("subkeys_b", subb_, d_subb_, false);
  add("lr_keys", lrk_, d_lrk_, false);
  add("ctrl_proj", cproj_, d_cproj_, false);
  add("ctrl_keys", ckeys_, d_ckeys_, false);
  if (cfg_.batch_norm) {
    add("norm_gamma", norm_.gamma, d_gamma_, false);
    add("norm_beta", norm_.beta, d_beta_, false);
  }
  return out;
}

std::vector<NamedTensor> SffnLayer::state() const {
  std::vector<NamedTensor> out;
  auto* self = const_cast<SffnLayer*>(this);
  for (const ParamRef& p : self->params()) out.push_back({p.name, *p.value});
  if (cfg_.batch_norm) {
    out.push_back({prefix_ + ".norm_running_mean", norm_.running_mean});
    out.push_back({prefix_ + ".norm_running_var", norm_.running_var});
  }
  return out;
}

void SffnLayer::load_state(const std::vector<NamedTensor>& tensors) {
  auto find = [&](const std::string& name) -> const Matrix* {
    for (const NamedTensor& t : tensors)
      if (t.name == name) return &t.value;
    return nullptr;
  };
  for (ParamRef& p : params()) {
    const Matrix* src = find(p.name);
    if (!src) throw std::runtime_error("checkpoint missing tensor: " + p.name);
    if (src->rows != p.value->rows || src->cols != p.value->cols)
      throw std::runtime_error("checkpoint tensor shape mismatch: " + p.name);
    *p.value = *src;
  }
  if (cfg_.batch_norm) {
    for (const char* suffix : {".norm_running_mean", ".norm_running_var"}) {
      const std::string name = prefix_ + suffix;
      const Matrix* src = find(name);
      if (!src) throw std::runtime_error("checkpoint missing tensor: " + name);
      Matrix& dst = suffix == std::string(".norm_running_mean")
                        ? norm_.running_mean
                        : norm_.running_var;
      if (src->rows != dst.rows || src->cols != dst.cols)
        throw std::runtime_error("checkpoint tensor shape mismatch: " + name);
      dst = *src;
    }
  }
}

void SffnLayer::zero_grads() {
  for (ParamRef& p : params()) p.grad->fill(0.0);
}

}  // namespace sffn
