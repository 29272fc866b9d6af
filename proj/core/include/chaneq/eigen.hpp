#pragma once

#include "chaneq/tensor.hpp"

namespace chaneq {

struct EigenDecomposition {
  Vector values;   ///< descending
  Matrix vectors;  ///< column k pairs with values[k]
  int sweeps = 0;
};

/// Cyclic Jacobi rotations until the off-diagonal Frobenius norm drops below
/// 1e-12 (scaled by max(1, |m|_F)) or 100 sweeps have run.
/// Throws ContractError for non-symmetric input.
EigenDecomposition jacobi_eigh(const Matrix& m);

/// V diag(f(lambda)) V^T for a symmetric matrix.
template <typename F>
Matrix spectral_apply(const EigenDecomposition& e, F&& f) {
  const std::size_t n = e.values.size();
  Matrix out(n, n);
  for (std::size_t k = 0; k < n; ++k) {
    const double fk = f(e.values[k]);
    for (std::size_t i = 0; i < n; ++i) {
      const double vik = e.vectors(i, k) * fk;
      for (std::size_t j = 0; j < n; ++j) out(i, j) += vik * e.vectors(j, k);
    }
  }
  return out;
}

/// Exact m^{-1/2} through the eigendecomposition. Throws ContractError if the
/// smallest eigenvalue is not strictly positive.
Matrix inv_sqrt_eigen(const Matrix& m);

}  // namespace chaneq
