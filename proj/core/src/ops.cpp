#include "sffn/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

#include "sffn/threads.hpp"

namespace sffn {

namespace {

[[noreturn]] void shape_error(const char* op, const Matrix& a,
                              const Matrix& b) {
  throw std::invalid_argument(std::string(op) + ": incompatible shapes (" +
                              std::to_string(a.rows) + "x" +
                              std::to_string(a.cols) + ") vs (" +
                              std::to_string(b.rows) + "x" +
                              std::to_string(b.cols) + ")");
}

}  // namespace

bool Matrix::all_finite() const {
  for (const double v : data) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw std::invalid_argument("dot: length mismatch " +
                                std::to_string(a.size()) + " vs " +
                                std::to_string(b.size()));
  }
  double acc = 0.0;
  for (size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  if (x.size() != y.size()) {
    throw std::invalid_argument("axpy: length mismatch");
  }
  for (size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols != b.rows) shape_error("matmul", a, b);
  Matrix c(a.rows, b.cols);
  const long cost = 1L * a.rows * a.cols * b.cols;
  // i-k-j order: for each output element the k terms still add in ascending
  // order (same association as a plain dot), while b streams by rows.
  parallel_for(0, a.rows, cost, [&](int lo, int hi) {
    for (int i = lo; i < hi; ++i) {
      double* crow = c.data.data() + static_cast<size_t>(i) * b.cols;
      for (int k = 0; k < a.cols; ++k) {
        const double aik = a(i, k);
        const double* brow = b.data.data() + static_cast<size_t>(k) * b.cols;
        for (int j = 0; j < b.cols; ++j) crow[j] += aik * brow[j];
      }
    }
  });
  return c;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
  if (a.cols != b.cols) shape_error("matmul_nt", a, b);
  Matrix c(a.rows, b.rows);
  const long cost = 1L * a.rows * a.cols * b.rows;
  parallel_for(0, a.rows, cost, [&](int lo, int hi) {
    for (int i = lo; i < hi; ++i) {
      const auto arow = a.row(i);
      for (int j = 0; j < b.rows; ++j) c(i, j) = dot(arow, b.row(j));
    }
  });
  return c;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
  if (a.rows != b.rows) shape_error("matmul_tn", a, b);
  Matrix c(a.cols, b.cols);
  // Accumulate rank-1 updates; every output element sums over k ascending.
  for (int k = 0; k < a.rows; ++k) {
    const double* arow = a.data.data() + static_cast<size_t>(k) * a.cols;
    const double* brow = b.data.data() + static_cast<size_t>(k) * b.cols;
    for (int i = 0; i < a.cols; ++i) {
      double* crow = c.data.data() + static_cast<size_t>(i) * b.cols;
      const double aki = arow[i];
      for (int j = 0; j < b.cols; ++j) crow[j] += aki * brow[j];
    }
  }
  return c;
}

Matrix transpose(const Matrix& a) {
  Matrix t(a.cols, a.rows);
  for (int i = 0; i < a.rows; ++i) {
    for (int j = 0; j < a.cols; ++j) t(j, i) = a(i, j);
  }
  return t;
}

double gelu(double x) {
  return 0.5 * x * (1.0 + std::erf(x / std::numbers::sqrt2));
}

double gelu_grad(double x) {
  const double cdf = 0.5 * (1.0 + std::erf(x / std::numbers::sqrt2));
  const double pdf = std::exp(-0.5 * x * x) /
                     std::sqrt(2.0 * std::numbers::pi);
  return cdf + x * pdf;
}

Matrix gelu(const Matrix& m) {
  Matrix out(m.rows, m.cols);
  for (size_t i = 0; i < m.data.size(); ++i) out.data[i] = gelu(m.data[i]);
  return out;
}

std::vector<double> softmax(std::span<const double> v) {
  if (v.empty()) throw std::invalid_argument("softmax: empty input");
  double mx = v[0];
  for (const double x : v) mx = std::max(mx, x);
  std::vector<double> out(v.size());
  double denom = 0.0;
  for (size_t i = 0; i < v.size(); ++i) {
    out[i] = std::exp(v[i] - mx);
    denom += out[i];
  }
  for (double& x : out) x /= denom;
  return out;
}

std::vector<int> topk_indices(std::span<const double> v, int k) {
  const int n = static_cast<int>(v.size());
  if (k < 0 || k > n) {
    throw std::invalid_argument("topk_indices: k=" + std::to_string(k) +
                                " out of range for length " +
                                std::to_string(n));
  }
  std::vector<int> idx(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) idx[static_cast<size_t>(i)] = i;
  // Total order (value desc, index asc) makes the selected set unique, so
  // nth_element's internal ordering cannot leak into the result.
  const auto better = [&](int a, int b) {
    if (v[static_cast<size_t>(a)] != v[static_cast<size_t>(b)]) {
      return v[static_cast<size_t>(a)] > v[static_cast<size_t>(b)];
    }
    return a < b;
  };
  if (k < n) {
    std::nth_element(idx.begin(), idx.begin() + k, idx.end(), better);
  }
  idx.resize(static_cast<size_t>(k));
  std::sort(idx.begin(), idx.end());
  return idx;
}

std::vector<double> finite_diff_grad(
    const std::function<double(std::span<const double>)>& f,
    std::span<const double> x, double eps) {
  if (eps <= 0.0) throw std::invalid_argument("finite_diff_grad: eps <= 0");
  std::vector<double> point(x.begin(), x.end());
  std::vector<double> grad(x.size());
  for (size_t i = 0; i < point.size(); ++i) {
    const double keep = point[i];
    point[i] = keep + eps;
    const double up = f(point);
    point[i] = keep - eps;
    const double down = f(point);
    point[i] = keep;
    if (!std::isfinite(up) || !std::isfinite(down)) {
      throw std::runtime_error(
          "finite_diff_grad: non-finite function value at coordinate " +
          std::to_string(i));
    }
    grad[i] = (up - down) / (2.0 * eps);
  }
  return grad;
}

}  // namespace sffn
