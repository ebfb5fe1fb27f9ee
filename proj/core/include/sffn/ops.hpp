#pragma once

#include <functional>
#include <span>
#include <vector>

#include "sffn/matrix.hpp"

namespace sffn {

// Every reduction below accumulates left-to-right in ascending index order,
// one scalar accumulator per output element. That order is part of the
// contract: identical inputs give bit-identical outputs, serial or threaded.

double dot(std::span<const double> a, std::span<const double> b);

// y += alpha * x
void axpy(double alpha, std::span<const double> x, std::span<double> y);

Matrix matmul(const Matrix& a, const Matrix& b);     // (m,p)x(p,n) -> (m,n)
Matrix matmul_nt(const Matrix& a, const Matrix& b);  // (m,p)x(n,p)^T -> (m,n)
Matrix matmul_tn(const Matrix& a, const Matrix& b);  // (p,m)^Tx(p,n) -> (m,n)
Matrix transpose(const Matrix& a);

// Gaussian-error-linear unit, exact form: x * Phi(x) with Phi the standard
// normal CDF evaluated through erf.
double gelu(double x);
// d/dx gelu(x) = Phi(x) + x * phi(x)
double gelu_grad(double x);
Matrix gelu(const Matrix& m);

// Numerically-stable softmax (max subtraction). Rejects empty input.
std::vector<double> softmax(std::span<const double> v);

// Indices of the k largest values; ties broken toward the lower index; the
// returned indices are sorted ascending. 0 <= k <= v.size().
std::vector<int> topk_indices(std::span<const double> v, int k);

// Central-difference gradient of f at x. Rejects non-finite f evaluations.
std::vector<double> finite_diff_grad(
    const std::function<double(std::span<const double>)>& f,
    std::span<const double> x, double eps = 1e-5);

}  // namespace sffn
