#include "chaneq/eigen.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "chaneq/error.hpp"

namespace chaneq {

namespace {

double off_diagonal_norm(const Matrix& a) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j)
      if (i != j) s += a(i, j) * a(i, j);
  return std::sqrt(s);
}

}  // namespace

EigenDecomposition jacobi_eigh(const Matrix& m) {
  if (m.rows() != m.cols()) throw ShapeError("jacobi_eigh: matrix is not square");
  const double scale = std::max(1.0, frobenius_norm(m));
  if (!is_symmetric(m, 1e-9 * scale)) throw ContractError("jacobi_eigh: matrix is not symmetric");

  const std::size_t n = m.rows();
  Matrix a = m;
  Matrix v = Matrix::identity(n);
  int sweep = 0;
  for (; sweep < 100; ++sweep) {
    if (off_diagonal_norm(a) < 1e-12 * scale) break;
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (apq == 0.0) continue;
        // Symmetric Schur 2x2: choose the smaller rotation angle.
        const double tau = (a(q, q) - a(p, p)) / (2.0 * apq);
        const double t = (tau >= 0.0 ? 1.0 : -1.0) / (std::abs(tau) + std::sqrt(1.0 + tau * tau));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a(k, p);
          const double akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a(p, k);
          const double aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double vkp = v(k, p);
          const double vkq = v(k, q);
          v(k, p) = c * vkp - s * vkq;
          v(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t i, std::size_t j) { return a(i, i) > a(j, j); });
  EigenDecomposition out;
  out.values.resize(n);
  out.vectors = Matrix(n, n);
  out.sweeps = sweep;
  for (std::size_t k = 0; k < n; ++k) {
    out.values[k] = a(order[k], order[k]);
    for (std::size_t i = 0; i < n; ++i) out.vectors(i, k) = v(i, order[k]);
  }
  return out;
}

Matrix inv_sqrt_eigen(const Matrix& m) {
  const EigenDecomposition e = jacobi_eigh(m);
  if (e.values.empty() || e.values.back() <= 0.0) {
    throw ContractError("inv_sqrt_eigen: matrix is not positive definite");
  }
  return spectral_apply(e, [](double l) { return 1.0 / std::sqrt(l); });
}

}  // namespace chaneq
