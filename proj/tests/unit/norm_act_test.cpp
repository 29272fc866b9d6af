#include <doctest.h>

#include <cmath>

#include "../support.hpp"
#include "chaneq/error.hpp"
#include "chaneq/norm_act.hpp"

using namespace testing;

TEST_CASE("stats of a constant field") {
  const FeatureMap x({2, 3, 2, 2}, 3.0);
  const NormStats s = compute_stats(x, NormKind::BN);
  for (std::size_t c = 0; c < 3; ++c) {
    CHECK(s.mean[c] == 3.0);
    CHECK(s.var[c] == 0.0);
  }
}

TEST_CASE("stats of a +-1 channel") {
  FeatureMap x({2, 1, 1, 2});
  x.values() = {-1, 1, 1, -1};
  const NormStats s = compute_stats(x, NormKind::BN);
  CHECK(s.mean[0] == 0.0);
  CHECK(s.var[0] == 1.0);
}

TEST_CASE("stat shapes per kind") {
  Rng rng(1);
  const FeatureMap x = random_map({3, 4, 2, 2}, rng);
  CHECK(compute_stats(x, NormKind::BN).mean.size() == 4);
  CHECK(compute_stats(x, NormKind::IN).mean.size() == 12);
  CHECK(compute_stats(x, NormKind::LN).mean.size() == 3);
}

TEST_CASE("batch variance decomposes into instance statistics") {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    Rng rng(seed);
    const Shape4 s{1 + rng.below(5), 1 + rng.below(5), 1 + rng.below(4), 1 + rng.below(4)};
    const FeatureMap x = random_map(s, rng, rng.uniform(0.1, 3.0));
    const NormStats bn = compute_stats(x, NormKind::BN);
    const NormStats in = compute_stats(x, NormKind::IN);
    for (std::size_t c = 0; c < s.c; ++c) {
      double mean_var = 0.0, mean_mu = 0.0, mean_mu2 = 0.0;
      for (std::size_t n = 0; n < s.n; ++n) {
        mean_var += in.var[n * s.c + c];
        mean_mu += in.mean[n * s.c + c];
        mean_mu2 += in.mean[n * s.c + c] * in.mean[n * s.c + c];
      }
      const double N = static_cast<double>(s.n);
      mean_var /= N;
      mean_mu /= N;
      const double var_mu = mean_mu2 / N - mean_mu * mean_mu;
      CHECK(std::abs(bn.var[c] - (mean_var + var_mu)) < 1e-10);
    }
  }
}

TEST_CASE("layer statistics ignore channel order") {
  Rng rng(4);
  const FeatureMap x = random_map({2, 5, 2, 3}, rng);
  const auto perm = rng.sample_without_replacement(5, 5);
  FeatureMap y(x.shape());
  for (std::size_t n = 0; n < 2; ++n)
    for (std::size_t c = 0; c < 5; ++c) {
      const auto src = x.plane(n, perm[c]);
      std::copy(src.begin(), src.end(), y.plane(n, c).begin());
    }
  const NormStats a = compute_stats(x, NormKind::LN);
  const NormStats b = compute_stats(y, NormKind::LN);
  CHECK(max_abs_diff(a.mean, b.mean) < 1e-12);
  CHECK(max_abs_diff(a.var, b.var) < 1e-12);
}

TEST_CASE("affine examples") {
  FeatureMap x({1, 1, 1, 2});
  x.values() = {0.0, 2.0};
  NormStats s = compute_stats(x, NormKind::BN, 0.0);
  const Normalized out = normalize_affine(x, s, {{2.0}, {1.0}});
  CHECK(out.xtilde.values()[0] == doctest::Approx(-1.0));
  CHECK(out.xtilde.values()[1] == doctest::Approx(3.0));

  Rng rng(2);
  const FeatureMap r = random_map({4, 2, 2, 2}, rng);
  s = compute_stats(r, NormKind::BN);
  const Normalized id = normalize_affine(r, s, AffineParams::identity(2));
  CHECK(id.xtilde.values() == id.xbar.values());
  const Normalized dead = normalize_affine(r, s, {{0.0, 0.0}, {5.0, 5.0}});
  for (double v : dead.xtilde.values()) CHECK(v == 5.0);
}

TEST_CASE("standardized units have zero mean and unit variance") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(50 + seed);
    const FeatureMap x = random_map({4, 3, 3, 3}, rng, 10.0);
    for (NormKind k : {NormKind::BN, NormKind::IN, NormKind::LN}) {
      const NormStats s = compute_stats(x, k);
      const NormStats t = compute_stats(standardize(x, s), k, 0.0);
      for (double m : t.mean) CHECK(std::abs(m) < 1e-8);
      for (double v : t.var) CHECK(std::abs(v - 1.0) < 1e-6);
    }
  }
}

TEST_CASE("activation examples") {
  const Activation relu{};
  CHECK(relu.apply(-2.0) == 0.0);
  CHECK(relu.apply(3.0) == 3.0);
  const Activation lrelu{ActKind::LReLU, 0.1};
  CHECK(lrelu.apply(-2.0) == doctest::Approx(-0.2));
  const Activation elu{ActKind::ELU, 0.0, 1.0};
  CHECK(elu.apply(-1.0) == doctest::Approx(std::exp(-1.0) - 1.0).epsilon(1e-12));
  CHECK(elu.apply(-1.0) == doctest::Approx(-0.63212).epsilon(1e-5));
  CHECK(elu.apply(2.0) == 2.0);
}

TEST_CASE("leaky slope outside (0, 1) is rejected") {
  CHECK_THROWS_AS((Activation{ActKind::LReLU, 0.0}.validate()), ContractError);
  CHECK_THROWS_AS((Activation{ActKind::LReLU, 1.0}.validate()), ContractError);
  CHECK_THROWS_AS(rectify(FeatureMap({1, 1, 1, 1}), Activation{ActKind::LReLU, 1.5}), ContractError);
  CHECK_NOTHROW((Activation{ActKind::LReLU, 0.5}.validate()));
}

TEST_CASE("normalize then ReLU is never negative") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    const FeatureMap x = random_map({3, 4, 2, 2}, rng, 4.0);
    AffineParams p{Vector(4), Vector(4)};
    for (double& g : p.gamma) g = rng.normal(0.0, 2.0);
    for (double& b : p.beta) b = rng.normal(0.0, 2.0);
    const auto y = rectify(normalize_affine(x, compute_stats(x, NormKind::BN), p).xtilde, Activation{});
    for (double v : y.values()) CHECK(v >= 0.0);
  }
}

TEST_CASE("standardize backward matches finite differences") {
  Rng rng(8);
  for (NormKind k : {NormKind::BN, NormKind::IN, NormKind::LN}) {
    FeatureMap x = random_map({3, 2, 2, 2}, rng);
    const FeatureMap w = random_map(x.shape(), rng);
    auto loss = [&] {
      const FeatureMap xb = standardize(x, compute_stats(x, k));
      return dot(xb.values(), w.values());
    };
    const NormStats s = compute_stats(x, k);
    const FeatureMap dx = standardize_backward(w, standardize(x, s), s);
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double fd = central_difference(x.values()[i], loss);
      CHECK(rel_err(dx.values()[i], fd) < 1e-6);
    }
  }
}

TEST_CASE("activation backward matches finite differences") {
  Rng rng(9);
  for (const Activation a : {Activation{}, Activation{ActKind::LReLU, 0.2}, Activation{ActKind::ELU, 0.0, 1.5}}) {
    FeatureMap x = random_map({2, 2, 2, 2}, rng);
    const FeatureMap w = random_map(x.shape(), rng);
    auto loss = [&] { return dot(rectify(x, a).values(), w.values()); };
    const FeatureMap dx = rectify_backward(w, x, a);
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(rel_err(dx.values()[i], central_difference(x.values()[i], loss)) < 1e-6);
  }
}

TEST_CASE("moving average endpoints") {
  Vector r{1.0, 2.0};
  const Vector cur{5.0, 6.0};
  moving_average(r, cur, 0.0);
  CHECK(r == Vector{1.0, 2.0});
  moving_average(r, cur, 1.0);
  CHECK(r == cur);
}

TEST_CASE("kind names round-trip") {
  for (NormKind k : {NormKind::BN, NormKind::IN, NormKind::LN}) CHECK(parse_norm_kind(to_string(k)) == k);
  for (ActKind k : {ActKind::ReLU, ActKind::LReLU, ActKind::ELU, ActKind::Identity}) CHECK(parse_act_kind(to_string(k)) == k);
  CHECK_THROWS(parse_norm_kind("gn"));
}
