#include <cmath>
#include <vector>

#include "doctest.h"
#include "sffn/norm.hpp"
#include "sffn/ops.hpp"
#include "sffn/rng.hpp"

using namespace sffn;

namespace {

Matrix random_matrix(int r, int c, RngStream& rng) {
  Matrix m(r, c);
  for (auto& x : m.data) x = rng.next_normal();
  return m;
}

}  // namespace

TEST_CASE("batch norm training mode normalizes with batch statistics") {
  RngStream rng(41, "bn.fwd");
  const int N = 7, C = 3;
  Matrix x = random_matrix(N, C, rng);
  BatchNorm1d bn(C);
  // Non-trivial affine so the test sees gamma/beta too.
  bn.gamma(0, 1) = 2.0;
  bn.beta(0, 2) = -0.5;

  BatchNormCache cache;
  const Matrix y = bn.forward_train(x, &cache, false);

  for (int c = 0; c < C; ++c) {
    double mean = 0.0;
    for (int i = 0; i < N; ++i) mean += x(i, c);
    mean /= N;
    double var = 0.0;
    for (int i = 0; i < N; ++i) var += (x(i, c) - mean) * (x(i, c) - mean);
    var /= N;  // biased
    for (int i = 0; i < N; ++i) {
      const double xhat = (x(i, c) - mean) / std::sqrt(var + bn.eps);
      CHECK(y(i, c) == doctest::Approx(bn.gamma(0, c) * xhat + bn.beta(0, c))
                           .epsilon(1e-12));
      CHECK(cache.xhat(i, c) == doctest::Approx(xhat).epsilon(1e-12));
    }
  }
  // update_running = false leaves the running stats at their init.
  for (int c = 0; c < C; ++c) {
    CHECK(bn.running_mean(0, c) == 0.0);
    CHECK(bn.running_var(0, c) == 1.0);
  }
}

TEST_CASE("batch norm running statistics fold in with momentum 0.1") {
  RngStream rng(42, "bn.run");
  const int N = 5, C = 2;
  Matrix x = random_matrix(N, C, rng);
  BatchNorm1d bn(C);
  BatchNormCache cache;
  bn.forward_train(x, &cache, true);

  for (int c = 0; c < C; ++c) {
    double mean = 0.0;
    for (int i = 0; i < N; ++i) mean += x(i, c);
    mean /= N;
    // Normalization uses the biased batch variance, but the running average
    // tracks the unbiased estimate (divide by N - 1).
    double var = 0.0;
    for (int i = 0; i < N; ++i) var += (x(i, c) - mean) * (x(i, c) - mean);
    var /= (N - 1);
    CHECK(bn.running_mean(0, c) ==
          doctest::Approx(0.9 * 0.0 + 0.1 * mean).epsilon(1e-12));
    CHECK(bn.running_var(0, c) ==
          doctest::Approx(0.9 * 1.0 + 0.1 * var).epsilon(1e-12));
  }

  // Eval mode uses the running averages, not the batch.
  Matrix z(1, C);
  z(0, 0) = 1.5;
  z(0, 1) = -2.0;
  const Matrix ye = bn.forward_eval(z);
  for (int c = 0; c < C; ++c) {
    const double want = (z(0, c) - bn.running_mean(0, c)) /
                        std::sqrt(bn.running_var(0, c) + bn.eps);
    CHECK(ye(0, c) == doctest::Approx(want).epsilon(1e-12));
  }
}

TEST_CASE("batch norm backward matches finite differences") {
  RngStream rng(43, "bn.bwd");
  const int N = 6, C = 3;
  const Matrix x0 = random_matrix(N, C, rng);
  const Matrix cmat = random_matrix(N, C, rng);  // probe weights

  BatchNorm1d bn(C);
  for (auto& v : bn.gamma.data) v = 1.0 + 0.3 * rng.next_normal();
  for (auto& v : bn.beta.data) v = 0.2 * rng.next_normal();

  // loss(x) = sum cmat .* forward_train(x), a smooth function of the batch.
  auto loss_at = [&](const Matrix& xm) {
    BatchNormCache c2;
    BatchNorm1d copy = bn;
    const Matrix y = copy.forward_train(xm, &c2, false);
    double s = 0.0;
    for (std::size_t i = 0; i < y.data.size(); ++i) s += cmat.data[i] * y.data[i];
    return s;
  };

  BatchNormCache cache;
  const Matrix y = bn.forward_train(x0, &cache, false);
  (void)y;
  Matrix dgamma(1, C), dbeta(1, C);
  const Matrix dx = bn.backward(cmat, cache, dgamma, dbeta);

  const double eps = 1e-6;
  Matrix xp = x0;
  for (int i = 0; i < N; ++i)
    for (int c = 0; c < C; ++c) {
      const double saved = xp(i, c);
      xp(i, c) = saved + eps;
      const double up = loss_at(xp);
      xp(i, c) = saved - eps;
      const double down = loss_at(xp);
      xp(i, c) = saved;
      const double fd = (up - down) / (2 * eps);
      CHECK(dx(i, c) == doctest::Approx(fd).epsilon(1e-5));
    }

  // Parameter gradients via FD on gamma and beta.
  for (int c = 0; c < C; ++c) {
    BatchNorm1d pb = bn;
    const double saved = pb.gamma(0, c);
    pb.gamma(0, c) = saved + eps;
    BatchNormCache c1;
    const Matrix yu = pb.forward_train(x0, &c1, false);
    pb.gamma(0, c) = saved - eps;
    const Matrix yd = pb.forward_train(x0, &c1, false);
    double up = 0.0, down = 0.0;
    for (std::size_t i = 0; i < yu.data.size(); ++i) {
      up += cmat.data[i] * yu.data[i];
      down += cmat.data[i] * yd.data[i];
    }
    CHECK(dgamma(0, c) ==
          doctest::Approx((up - down) / (2 * eps)).epsilon(1e-5));
  }
  for (int c = 0; c < C; ++c) {
    // d/dbeta of sum cmat .* y is the column sum of cmat.
    double want = 0.0;
    for (int i = 0; i < N; ++i) want += cmat(i, c);
    CHECK(dbeta(0, c) == doctest::Approx(want).epsilon(1e-10));
  }
}

TEST_CASE("layer norm normalizes each row and backward matches FD") {
  RngStream rng(44, "ln");
  const int N = 5, C = 4;
  const Matrix x0 = random_matrix(N, C, rng);
  const Matrix cmat = random_matrix(N, C, rng);

  LayerNorm ln(C);
  for (auto& v : ln.gamma.data) v = 1.0 + 0.2 * rng.next_normal();
  for (auto& v : ln.beta.data) v = 0.1 * rng.next_normal();

  LayerNormCache cache;
  const Matrix y = ln.forward(x0, &cache);

  // Forward oracle: per-row mean / biased variance.
  for (int i = 0; i < N; ++i) {
    double mean = 0.0;
    for (int c = 0; c < C; ++c) mean += x0(i, c);
    mean /= C;
    double var = 0.0;
    for (int c = 0; c < C; ++c) var += (x0(i, c) - mean) * (x0(i, c) - mean);
    var /= C;
    for (int c = 0; c < C; ++c) {
      const double xhat = (x0(i, c) - mean) / std::sqrt(var + ln.eps);
      CHECK(y(i, c) == doctest::Approx(ln.gamma(0, c) * xhat + ln.beta(0, c))
                           .epsilon(1e-12));
    }
  }

  Matrix dgamma(1, C), dbeta(1, C);
  const Matrix dx = ln.backward(cmat, cache, dgamma, dbeta);

  auto loss_at = [&](const Matrix& xm) {
    LayerNormCache c2;
    const Matrix ym = ln.forward(xm, &c2);
    double s = 0.0;
    for (std::size_t i = 0; i < ym.data.size(); ++i)
      s += cmat.data[i] * ym.data[i];
    return s;
  };
  const double eps = 1e-6;
  Matrix xp = x0;
  for (int i = 0; i < N; ++i)
    for (int c = 0; c < C; ++c) {
      const double saved = xp(i, c);
      xp(i, c) = saved + eps;
      const double up = loss_at(xp);
      xp(i, c) = saved - eps;
      const double down = loss_at(xp);
      xp(i, c) = saved;
      CHECK(dx(i, c) ==
            doctest::Approx((up - down) / (2 * eps)).epsilon(1e-5));
    }
}
