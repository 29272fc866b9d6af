#include <doctest.h>

#include <cmath>

#include "../support.hpp"
#include "chaneq/decorrelate.hpp"
#include "chaneq/eigen.hpp"
#include "chaneq/error.hpp"
#include "chaneq/norm_act.hpp"

using namespace testing;

namespace {

FeatureMap standardized(Shape4 s, Rng& rng) {
  const FeatureMap x = random_map(s, rng);
  return standardize(x, compute_stats(x, NormKind::BN));
}

/// Covariance of gamma .* xbar by an explicit loop over channel pairs.
Matrix pairwise_cov(const FeatureMap& xb, const Vector& gamma) {
  const auto& s = xb.shape();
  const double M = static_cast<double>(s.n * s.plane());
  Matrix out(s.c, s.c);
  for (std::size_t a = 0; a < s.c; ++a)
    for (std::size_t b = 0; b < s.c; ++b) {
      double acc = 0.0;
      for (std::size_t n = 0; n < s.n; ++n)
        for (std::size_t p = 0; p < s.plane(); ++p) acc += gamma[a] * xb.plane(n, a)[p] * gamma[b] * xb.plane(n, b)[p];
      out(a, b) = acc / M;
    }
  return out;
}

Matrix block(const Matrix& m, std::size_t b, std::size_t e) {
  Matrix out(e - b, e - b);
  for (std::size_t i = b; i < e; ++i)
    for (std::size_t j = b; j < e; ++j) out(i - b, j - b) = m(i, j);
  return out;
}

}  // namespace

TEST_CASE("covariance of perfectly correlated rows is all ones") {
  FeatureMap xb({1, 2, 1, 4});
  xb.values() = {1, -1, 1, -1, 1, -1, 1, -1};
  const Matrix s = covariance_bn(xb, Vector{1.0, 1.0});
  CHECK(max_abs_diff(s, Matrix{{1, 1}, {1, 1}}) < 1e-15);
}

TEST_CASE("zero gamma kills a row and column") {
  Rng rng(1);
  const Matrix s = covariance_bn(standardized({4, 2, 2, 2}, rng), Vector{0.0, 1.0});
  CHECK(s(0, 0) == 0.0);
  CHECK(s(0, 1) == 0.0);
  CHECK(s(1, 0) == 0.0);
}

TEST_CASE("covariance matches the pairwise loop") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    const std::size_t C = 1 + rng.below(6);
    const FeatureMap xb = standardized({2 + rng.below(4), C, 2, 2}, rng);
    Vector g(C);
    for (double& v : g) v = rng.normal();
    const Matrix s = covariance_bn(xb, g);
    CHECK(max_abs_diff(s, pairwise_cov(xb, g)) < 1e-10);
    CHECK(is_symmetric(s, 1e-12));
    for (double e : jacobi_eigh(s).values) CHECK(e >= -1e-7);
  }
}

TEST_CASE("trace normalization") {
  CHECK(max_abs_diff(trace_normalize(Matrix::identity(2)), Matrix{{0.5, 0}, {0, 0.5}}) < 1e-15);
  const Matrix ones = trace_normalize(Matrix{{1, 1}, {1, 1}});
  CHECK(max_abs_diff(ones, Matrix{{0.5, 0.5}, {0.5, 0.5}}) < 1e-15);
  const auto e = jacobi_eigh(ones);
  CHECK(e.values[0] == doctest::Approx(1.0));
  CHECK(std::abs(e.values[1]) < 1e-12);
  CHECK_THROWS_AS(trace_normalize(Matrix(2, 2)), DegenerateInputError);
}

TEST_CASE("trace-normalized spectra lie in [0, 1] and sum to one") {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    Rng rng(seed);
    const std::size_t C = 1 + rng.below(10);
    const Matrix a = random_matrix(C, C + rng.below(4), rng);
    const Matrix s = trace_normalize(matmul(a, transpose(a)));
    CHECK(std::abs(trace(s) - 1.0) < 1e-12);
    double sum = 0.0;
    for (double e : jacobi_eigh(s).values) {
      CHECK(e >= -1e-12);
      CHECK(e <= 1.0 + 1e-12);
      sum += e;
    }
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-10));
  }
}

TEST_CASE("full-rank trace-normalized spectra lie strictly inside (0, 1)") {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    Rng rng(seed);
    const std::size_t C = 2 + rng.below(15);
    for (double e : jacobi_eigh(random_trace_normalized_spd(C, 1e-4, rng)).values) {
      CHECK(e > 0.0);
      CHECK(e < 1.0);
    }
  }
}

TEST_CASE("identity is a fixed point") {
  for (int t : {1, 3, 7}) {
    NewtonConfig cfg;
    cfg.iterations = t;
    CHECK(max_abs_diff(newton_inv_sqrt(Matrix::identity(3), cfg), Matrix::identity(3)) < 1e-15);
  }
}

TEST_CASE("scalar recurrence at one half") {
  // y <- (3y - y^3 / 2) / 2 from y = 1.
  double y = 1.0;
  for (int k = 0; k < 3; ++k) y = (3.0 * y - 0.5 * y * y * y) / 2.0;
  const Matrix r = newton_inv_sqrt(Matrix{{0.5, 0}, {0, 0.5}});
  CHECK(r(0, 0) == doctest::Approx(y).epsilon(1e-15));
  CHECK(r(0, 0) == doctest::Approx(1.41341).epsilon(1e-5));
  CHECK(r(0, 1) == 0.0);
  const auto it = newton_iterates(Matrix{{0.5, 0}, {0, 0.5}}, 3);
  CHECK(it[1](0, 0) == doctest::Approx(1.25));
  CHECK(it[2](0, 0) == doctest::Approx(1.38672).epsilon(1e-5));
}

TEST_CASE("ten iterations match the eigen oracle") {
  Rng rng(16);
  NewtonConfig cfg;
  cfg.iterations = 10;
  for (int t = 0; t < 10; ++t) {
    const Matrix s = random_trace_normalized_spd(16, 0.01, rng);
    const Matrix y = newton_inv_sqrt(s, cfg);
    CHECK(frobenius_norm(matmul(matmul(y, s), y) - Matrix::identity(16)) < 1e-6);
    CHECK(max_abs_diff(y, inv_sqrt_eigen(s)) < 1e-5);
  }
}

TEST_CASE("iterates commute with the input, stay symmetric and never raise the residual") {
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    Rng rng(seed);
    const std::size_t C = 1 + rng.below(32);
    const Matrix s = random_trace_normalized_spd(C, 0.2 / static_cast<double>(C), rng);
    const auto it = newton_iterates(s, 8);
    double prev = INFINITY;
    for (std::size_t k = 1; k < it.size(); ++k) {
      CHECK(frobenius_norm(matmul(it[k], s) - matmul(s, it[k])) < 1e-8);
      CHECK(is_symmetric(it[k], 1e-9));
      const double r = newton_residual(it[k], s);
      CHECK(r <= prev + 1e-12);
      prev = r;
    }
  }
}

TEST_CASE("divergence is reported with the residual") {
  try {
    newton_iterates(Matrix{{6.0, 0}, {0, 0.1}}, 8);
    FAIL("expected a numerical error");
  } catch (const NumericalError& e) {
    CHECK(e.residual() > 1.0);
  }
}

TEST_CASE("groups of one give per-channel inverse square roots") {
  Rng rng(3);
  const FeatureMap xb = standardized({5, 4, 2, 2}, rng);
  const Vector g{0.5, 1.0, 2.0, 1.5};
  NewtonConfig cfg;
  cfg.iterations = 30;
  const Matrix r = groupwise_inv_sqrt(xb, g, GroupScheme::contiguous(4, 1), cfg);
  for (std::size_t c = 0; c < 4; ++c) {
    CHECK(r(c, c) == doctest::Approx(1.0).epsilon(1e-9));  // 1x1 trace normalization yields 1
    for (std::size_t d = 0; d < 4; ++d)
      if (d != c) CHECK(r(c, d) == 0.0);
  }
}

TEST_CASE("one group equals the full path") {
  Rng rng(4);
  const FeatureMap xb = standardized({6, 5, 2, 2}, rng);
  Vector g(5);
  for (double& v : g) v = rng.uniform(0.5, 2.0);
  const NewtonConfig cfg;
  Matrix sigma = covariance_bn(xb, g);
  for (std::size_t i = 0; i < 5; ++i) sigma(i, i) += cfg.diag_eps;
  const Matrix full = newton_inv_sqrt(trace_normalize(sigma), cfg);
  CHECK(max_abs_diff(groupwise_inv_sqrt(xb, g, GroupScheme::contiguous(5, 5), cfg), full) < 1e-12);
}

TEST_CASE("two groups equal two independent runs") {
  Rng rng(5);
  const FeatureMap xb = standardized({6, 4, 2, 2}, rng);
  const Vector g{1.0, 0.7, 1.3, 0.9};
  const NewtonConfig cfg;
  const Matrix r = groupwise_inv_sqrt(xb, g, GroupScheme::contiguous(4, 2), cfg);
  for (std::size_t b : {0u, 2u}) {
    FeatureMap part({6, 2, 2, 2});
    for (std::size_t n = 0; n < 6; ++n)
      for (std::size_t c = 0; c < 2; ++c) {
        const auto src = xb.plane(n, b + c);
        std::copy(src.begin(), src.end(), part.plane(n, c).begin());
      }
    const Matrix sub = groupwise_inv_sqrt(part, Vector{g[b], g[b + 1]}, GroupScheme::contiguous(2, 2), cfg);
    CHECK(max_abs_diff(block(r, b, b + 2), sub) < 1e-14);
  }
  CHECK(r(0, 2) == 0.0);
  CHECK(r(3, 1) == 0.0);
}

TEST_CASE("group schemes partition the channels") {
  const GroupScheme g = GroupScheme::contiguous(37, 16);
  CHECK(g.ranges.size() == 3);
  CHECK(g.ranges.back() == std::pair<std::size_t, std::size_t>{32, 37});
  CHECK_NOTHROW(g.validate(37));
  CHECK_THROWS_AS(g.validate(38), ContractError);
  CHECK(GroupScheme::for_channels(8).group_size == 8);
  CHECK(GroupScheme::for_channels(40).group_size == 16);
}

TEST_CASE("pooling kicks in above the threshold") {
  Rng rng(6);
  const FeatureMap x = random_map({2, 2, 5, 4}, rng);
  const Pooled p = maxpool2x2(x);
  CHECK(p.values.shape() == Shape4{2, 2, 2, 2});
  CHECK(p.values.at(1, 1, 1, 0) == std::max({x.at(1, 1, 2, 0), x.at(1, 1, 2, 1), x.at(1, 1, 3, 0), x.at(1, 1, 3, 1)}));
  NewtonConfig cfg;
  cfg.pool_threshold = 4;
  const FeatureMap xb = standardize(x, compute_stats(x, NormKind::BN));
  CHECK(decorrelate(xb, Vector{1.0, 1.0}, GroupScheme::contiguous(2, 2), cfg).pooled);
  cfg.pool_threshold = 64;
  CHECK_FALSE(decorrelate(xb, Vector{1.0, 1.0}, GroupScheme::contiguous(2, 2), cfg).pooled);
}

TEST_CASE("decorrelation backward matches finite differences") {
  Rng rng(12);
  FeatureMap xb = standardized({4, 3, 2, 2}, rng);
  Vector g{0.8, 1.2, 1.0};
  const Matrix w = random_matrix(3, 3, rng);
  const GroupScheme scheme = GroupScheme::contiguous(3, 3);
  const NewtonConfig cfg;
  auto loss = [&] {
    const Matrix r = groupwise_inv_sqrt(xb, g, scheme, cfg);
    return dot(r.values(), w.values());
  };
  const DecorrelationResult fwd = decorrelate(xb, g, scheme, cfg);
  const DecorrelationGrad grad = decorrelate_backward(fwd, w, xb, g, cfg);
  for (std::size_t i = 0; i < xb.size(); ++i) CHECK(rel_err(grad.dxbar.values()[i], central_difference(xb.values()[i], loss)) < 1e-6);
  for (std::size_t c = 0; c < 3; ++c) CHECK(rel_err(grad.dgamma[c], central_difference(g[c], loss)) < 1e-6);
}
