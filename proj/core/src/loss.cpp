#include "sffn/loss.hpp"

#include <cmath>
#include <stdexcept>

#include "sffn/ops.hpp"

namespace sffn {

double cross_entropy_loss(const Matrix& logits, const std::vector<int>& targets,
                          Matrix* dlogits) {
  const int N = logits.rows;
  const int V = logits.cols;
  if (static_cast<int>(targets.size()) != N)
    throw std::invalid_argument("targets must cover every logits row");
  if (N == 0) throw std::invalid_argument("cross entropy over empty batch");
  if (dlogits) *dlogits = Matrix(N, V);
  double total = 0.0;
  for (int n = 0; n < N; ++n) {
    const int t = targets[static_cast<std::size_t>(n)];
    if (t < 0 || t >= V)
      throw std::out_of_range("target id outside vocabulary");
    std::span<const double> row = logits.row(n);
    double mx = row[0];
    for (int j = 1; j < V; ++j)
      if (row[j] > mx) mx = row[j];
    double z = 0.0;
    for (int j = 0; j < V; ++j) z += std::exp(row[j] - mx);
    const double log_z = std::log(z) + mx;
    total += log_z - row[t];
    if (dlogits) {
      std::span<double> drow = dlogits->row(n);
      const double inv = 1.0 / static_cast<double>(N);
      for (int j = 0; j < V; ++j)
        drow[j] = std::exp(row[j] - log_z) * inv;
      drow[t] -= inv;
    }
  }
  return total / static_cast<double>(N);
}

double switch_balance_loss(const Matrix& probs,
                           const std::vector<int>& dispatch) {
  const int N = probs.rows;
  const int B = probs.cols;
  if (static_cast<int>(dispatch.size()) != N)
    throw std::invalid_argument("dispatch must cover every probs row");
  if (N == 0) throw std::invalid_argument("balance loss over empty batch");
  std::vector<double> frac(static_cast<std::size_t>(B), 0.0);
  std::vector<double> mean_p(static_cast<std::size_t>(B), 0.0);
  for (int n = 0; n < N; ++n) {
    const int a = dispatch[static_cast<std::size_t>(n)];
    if (a < 0 || a >= B) throw std::out_of_range("dispatch id outside blocks");
    frac[static_cast<std::size_t>(a)] += 1.0;
    std::span<const double> row = probs.row(n);
    for (int i = 0; i < B; ++i) mean_p[static_cast<std::size_t>(i)] += row[i];
  }
  double acc = 0.0;
  const double inv_n = 1.0 / static_cast<double>(N);
  for (int i = 0; i < B; ++i)
    acc += (frac[static_cast<std::size_t>(i)] * inv_n) *
           (mean_p[static_cast<std::size_t>(i)] * inv_n);
  return static_cast<double>(B) * acc;
}

Matrix switch_balance_loss_grad(const Matrix& probs,
                                const std::vector<int>& dispatch) {
  const int N = probs.rows;
  const int B = probs.cols;
  if (static_cast<int>(dispatch.size()) != N)
    throw std::invalid_argument("dispatch must cover every probs row");
  std::vector<double> frac(static_cast<std::size_t>(B), 0.0);
  for (int a : dispatch) {
    if (a < 0 || a >= B) throw std::out_of_range("dispatch id outside blocks");
    frac[static_cast<std::size_t>(a)] += 1.0;
  }
  const double inv_n = 1.0 / static_cast<double>(N);
  Matrix grad(N, B);
  // dL/dp_{n,i} = B * f_i / N: the dispatch fractions are constants.
  for (int n = 0; n < N; ++n) {
    std::span<double> row = grad.row(n);
    for (int i = 0; i < B; ++i)
      row[i] = static_cast<double>(B) * frac[static_cast<std::size_t>(i)] *
               inv_n * inv_n;
  }
  return grad;
}

void scale_expert_grads(std::vector<ParamRef>& params, int num_experts) {
  if (num_experts <= 0)
    throw std::invalid_argument("num_experts must be positive");
  const double scale = 1.0 / std::sqrt(static_cast<double>(num_experts));
  for (ParamRef& p : params) {
    if (!p.expert) continue;
    for (double& v : p.grad->data) v *= scale;
  }
}

}  // namespace sffn
