#include "sffn/norm.hpp"

#include <cmath>
#include <stdexcept>

namespace sffn {

BatchNorm1d::BatchNorm1d(int features)
    : gamma(1, features, 1.0),
      beta(1, features, 0.0),
      running_mean(1, features, 0.0),
      running_var(1, features, 1.0) {}

Matrix BatchNorm1d::forward_train(const Matrix& x, BatchNormCache* cache,
                                  bool update_running) {
  const int n = x.rows, c = x.cols;
  if (c != features()) throw std::invalid_argument("BatchNorm1d: bad width");
  if (n < 1) throw std::invalid_argument("BatchNorm1d: empty batch");
  Matrix out(n, c);
  if (cache != nullptr) {
    cache->xhat = Matrix(n, c);
    cache->inv_std.assign(static_cast<size_t>(c), 0.0);
  }
  for (int j = 0; j < c; ++j) {
    double mean = 0.0;
    for (int i = 0; i < n; ++i) mean += x(i, j);
    mean /= n;
    double var = 0.0;  // biased (1/N), used for normalization
    for (int i = 0; i < n; ++i) {
      const double d = x(i, j) - mean;
      var += d * d;
    }
    var /= n;
    const double inv = 1.0 / std::sqrt(var + eps);
    for (int i = 0; i < n; ++i) {
      const double xh = (x(i, j) - mean) * inv;
      if (cache != nullptr) cache->xhat(i, j) = xh;
      out(i, j) = gamma(0, j) * xh + beta(0, j);
    }
    if (cache != nullptr) cache->inv_std[static_cast<size_t>(j)] = inv;
    if (update_running) {
      // Running averages track the unbiased variance.
      const double unbiased = n > 1 ? var * n / (n - 1) : var;
      running_mean(0, j) = (1.0 - momentum) * running_mean(0, j) +
                           momentum * mean;
      running_var(0, j) = (1.0 - momentum) * running_var(0, j) +
                          momentum * unbiased;
    }
  }
  return out;
}

Matrix BatchNorm1d::forward_eval(const Matrix& x) const {
  const int n = x.rows, c = x.cols;
  if (c != features()) throw std::invalid_argument("BatchNorm1d: bad width");
  Matrix out(n, c);
  for (int j = 0; j < c; ++j) {
    const double inv = 1.0 / std::sqrt(running_var(0, j) + eps);
    for (int i = 0; i < n; ++i) {
      out(i, j) = gamma(0, j) * (x(i, j) - running_mean(0, j)) * inv +
                  beta(0, j);
    }
  }
  return out;
}

Matrix BatchNorm1d::backward(const Matrix& dy, const BatchNormCache& cache,
                             Matrix& dgamma, Matrix& dbeta) const {
  const int n = dy.rows, c = dy.cols;
  if (c != features() || cache.xhat.rows != n) {
    throw std::invalid_argument("BatchNorm1d::backward: cache mismatch");
  }
  Matrix dx(n, c);
  for (int j = 0; j < c; ++j) {
    double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
    for (int i = 0; i < n; ++i) {
      const double dxh = dy(i, j) * gamma(0, j);
      sum_dxhat += dxh;
      sum_dxhat_xhat += dxh * cache.xhat(i, j);
      dgamma(0, j) += dy(i, j) * cache.xhat(i, j);
      dbeta(0, j) += dy(i, j);
    }
    const double inv = cache.inv_std[static_cast<size_t>(j)];
    for (int i = 0; i < n; ++i) {
      const double dxh = dy(i, j) * gamma(0, j);
      dx(i, j) = inv / n *
                 (n * dxh - sum_dxhat - cache.xhat(i, j) * sum_dxhat_xhat);
    }
  }
  return dx;
}

LayerNorm::LayerNorm(int features)
    : gamma(1, features, 1.0), beta(1, features, 0.0) {}

Matrix LayerNorm::forward(const Matrix& x, LayerNormCache* cache) const {
  const int n = x.rows, c = x.cols;
  if (c != features()) throw std::invalid_argument("LayerNorm: bad width");
  Matrix out(n, c);
  if (cache != nullptr) {
    cache->xhat = Matrix(n, c);
    cache->inv_std.assign(static_cast<size_t>(n), 0.0);
  }
  for (int i = 0; i < n; ++i) {
    double mean = 0.0;
    for (int j = 0; j < c; ++j) mean += x(i, j);
    mean /= c;
    double var = 0.0;
    for (int j = 0; j < c; ++j) {
      const double d = x(i, j) - mean;
      var += d * d;
    }
    var /= c;
    const double inv = 1.0 / std::sqrt(var + eps);
    for (int j = 0; j < c; ++j) {
      const double xh = (x(i, j) - mean) * inv;
      if (cache != nullptr) cache->xhat(i, j) = xh;
      out(i, j) = gamma(0, j) * xh + beta(0, j);
    }
    if (cache != nullptr) cache->inv_std[static_cast<size_t>(i)] = inv;
  }
  return out;
}

Matrix LayerNorm::backward(const Matrix& dy, const LayerNormCache& cache,
                           Matrix& dgamma, Matrix& dbeta) const {
  const int n = dy.rows, c = dy.cols;
  if (c != features() || cache.xhat.rows != n) {
    throw std::invalid_argument("LayerNorm::backward: cache mismatch");
  }
  Matrix dx(n, c);
  for (int i = 0; i < n; ++i) {
    double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
    for (int j = 0; j < c; ++j) {
      const double dxh = dy(i, j) * gamma(0, j);
      sum_dxhat += dxh;
      sum_dxhat_xhat += dxh * cache.xhat(i, j);
      dgamma(0, j) += dy(i, j) * cache.xhat(i, j);
      dbeta(0, j) += dy(i, j);
    }
    const double inv = cache.inv_std[static_cast<size_t>(i)];
    for (int j = 0; j < c; ++j) {
      const double dxh = dy(i, j) * gamma(0, j);
      dx(i, j) = inv / c *
                 (c * dxh - sum_dxhat - cache.xhat(i, j) * sum_dxhat_xhat);
    }
  }
  return dx;
}

}  // namespace sffn
