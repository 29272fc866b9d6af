#pragma once

#include <algorithm>
#include <cmath>
#include <functional>

#include "chaneq/ce_block.hpp"
#include "chaneq/rng.hpp"
#include "chaneq/tensor.hpp"

namespace testing {

using namespace chaneq;

inline FeatureMap random_map(Shape4 s, Rng& rng, double sd = 1.0) {
  std::vector<double> v(s.count());
  for (double& x : v) x = rng.normal(0.0, sd);
  return FeatureMap(s, std::move(v));
}

inline Matrix random_matrix(std::size_t r, std::size_t c, Rng& rng, double sd = 1.0) {
  Matrix m(r, c);
  for (double& x : m.values()) x = rng.normal(0.0, sd);
  return m;
}

/// Q diag(lambda) Q^T with Q from Gram-Schmidt on a Gaussian matrix.
inline Matrix random_orthogonal(std::size_t n, Rng& rng) {
  Matrix a = random_matrix(n, n, rng);
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t k = 0; k < j; ++k) {
      double d = 0.0;
      for (std::size_t i = 0; i < n; ++i) d += a(i, j) * a(i, k);
      for (std::size_t i = 0; i < n; ++i) a(i, j) -= d * a(i, k);
    }
    double nrm = 0.0;
    for (std::size_t i = 0; i < n; ++i) nrm += a(i, j) * a(i, j);
    nrm = std::sqrt(nrm);
    for (std::size_t i = 0; i < n; ++i) a(i, j) /= nrm;
  }
  return a;
}

inline Matrix with_spectrum(const Matrix& q, const std::vector<double>& lambda) {
  const std::size_t n = q.rows();
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < n; ++k) acc += q(i, k) * lambda[k] * q(j, k);
      m(i, j) = acc;
    }
  return m;
}

/// Random trace-one SPD matrix whose eigenvalues are all >= min_eig.
inline Matrix random_trace_normalized_spd(std::size_t n, double min_eig, Rng& rng) {
  std::vector<double> lam(n);
  double total = 0.0;
  for (double& l : lam) total += (l = rng.uniform());
  const double free = 1.0 - min_eig * static_cast<double>(n);
  for (double& l : lam) l = min_eig + free * l / total;
  return with_spectrum(random_orthogonal(n, rng), lam);
}

inline double rel_err(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-6});
}

inline double central_difference(double& param, const std::function<double()>& loss,
                                 double h = 1e-5) {
  const double saved = param;
  param = saved + h;
  const double up = loss();
  param = saved - h;
  const double down = loss();
  param = saved;
  return (up - down) / (2.0 * h);
}

}  // namespace testing
