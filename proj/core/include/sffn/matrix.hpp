#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace sffn {

// Dense row-major matrix of 64-bit floats. The whole library standardizes on
// this type; every op that consumes one documents (and checks) its shape.
struct Matrix {
  int rows = 0;
  int cols = 0;
  std::vector<double> data;  // rows * cols, row-major

  Matrix() = default;
  Matrix(int r, int c, double fill = 0.0)
      : rows(r), cols(c),
        data(static_cast<size_t>(r) * static_cast<size_t>(c), fill) {}

  double& operator()(int i, int j) {
    return data[static_cast<size_t>(i) * static_cast<size_t>(cols) +
                static_cast<size_t>(j)];
  }
  double operator()(int i, int j) const {
    return data[static_cast<size_t>(i) * static_cast<size_t>(cols) +
                static_cast<size_t>(j)];
  }

  std::span<double> row(int i) {
    return {data.data() + static_cast<size_t>(i) * static_cast<size_t>(cols),
            static_cast<size_t>(cols)};
  }
  std::span<const double> row(int i) const {
    return {data.data() + static_cast<size_t>(i) * static_cast<size_t>(cols),
            static_cast<size_t>(cols)};
  }

  std::size_t size() const { return data.size(); }
  void fill(double v) { std::fill(data.begin(), data.end(), v); }

  static Matrix identity(int n) {
    Matrix m(n, n);
    for (int i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  bool all_finite() const;
};

}  // namespace sffn
