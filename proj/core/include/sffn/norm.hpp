#pragma once

#include <vector>

#include "sffn/matrix.hpp"

namespace sffn {

struct BatchNormCache {
  Matrix xhat;                   // N x C normalized input
  std::vector<double> inv_std;   // per-feature 1/sqrt(var + eps)
};

// 1-D batch normalization over feature columns with learned affine.
// Training mode normalizes with the current batch's biased variance and
// (optionally) folds the batch statistics into the running averages with
// momentum 0.1; eval mode normalizes with the running averages.
struct BatchNorm1d {
  Matrix gamma;         // 1 x C, init 1
  Matrix beta;          // 1 x C, init 0
  Matrix running_mean;  // 1 x C, init 0
  Matrix running_var;   // 1 x C, init 1
  double eps = 1e-5;
  double momentum = 0.1;

  BatchNorm1d() = default;
  explicit BatchNorm1d(int features);

  int features() const { return gamma.cols; }

  Matrix forward_train(const Matrix& x, BatchNormCache* cache,
                       bool update_running);
  Matrix forward_eval(const Matrix& x) const;

  // Training-mode backward through the batch statistics. Accumulates into
  // dgamma/dbeta (1 x C) and returns dX.
  Matrix backward(const Matrix& dy, const BatchNormCache& cache,
                  Matrix& dgamma, Matrix& dbeta) const;
};

struct LayerNormCache {
  Matrix xhat;                  // N x C normalized input
  std::vector<double> inv_std;  // per-row 1/sqrt(var + eps)
};

// Per-token (row-wise) normalization with learned affine.
struct LayerNorm {
  Matrix gamma;  // 1 x C, init 1
  Matrix beta;   // 1 x C, init 0
  double eps = 1e-5;

  LayerNorm() = default;
  explicit LayerNorm(int features);

  int features() const { return gamma.cols; }

  Matrix forward(const Matrix& x, LayerNormCache* cache) const;
  // Accumulates into dgamma/dbeta (1 x C) and returns dX.
  Matrix backward(const Matrix& dy, const LayerNormCache& cache,
                  Matrix& dgamma, Matrix& dbeta) const;
};

}  // namespace sffn
