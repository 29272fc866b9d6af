#include "chaneq/decorrelate.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "chaneq/error.hpp"

namespace chaneq {

void NewtonConfig::validate() const {
  if (iterations < 1) throw ContractError("NewtonConfig: iterations must be >= 1");
  if (!(diag_eps >= 0.0)) throw ContractError("NewtonConfig: diag_eps must be >= 0");
}

GroupScheme GroupScheme::contiguous(std::size_t channels, std::size_t group_size) {
  if (group_size == 0) throw ContractError("GroupScheme: group size must be positive");
  GroupScheme g;
  g.group_size = group_size;
  for (std::size_t b = 0; b < channels; b += group_size)
    g.ranges.emplace_back(b, std::min(channels, b + group_size));
  return g;
}

GroupScheme GroupScheme::for_channels(std::size_t channels) {
  return contiguous(channels, std::min<std::size_t>(channels, 16));
}

void GroupScheme::validate(std::size_t channels) const {
  std::size_t next = 0;
  for (const auto& [b, e] : ranges) {
    if (b != next || e <= b || e - b > group_size) {
      throw ContractError("GroupScheme: ranges do not partition the channels contiguously");
    }
    next = e;
  }
  if (next != channels) throw ContractError("GroupScheme: ranges do not cover every channel");
}

namespace {

Matrix correlation_block(const FeatureMap& xbar, std::size_t begin, std::size_t end) {
  const auto& s = xbar.shape();
  const std::size_t g = end - begin;
  const double m = static_cast<double>(s.n * s.plane());
  Matrix a(g, g);
  for (std::size_t n = 0; n < s.n; ++n)
    for (std::size_t p = 0; p < g; ++p) {
      const auto xp = xbar.plane(n, begin + p);
      for (std::size_t q = p; q < g; ++q) {
        const auto xq = xbar.plane(n, begin + q);
        double acc = 0.0;
        for (std::size_t k = 0; k < xp.size(); ++k) acc += xp[k] * xq[k];
        a(p, q) += acc;
      }
    }
  for (std::size_t p = 0; p < g; ++p)
    for (std::size_t q = p; q < g; ++q) {
      a(p, q) /= m;
      a(q, p) = a(p, q);
    }
  return a;
}

Matrix scale_by_gamma(const Matrix& corr, std::span<const double> gamma, std::size_t begin) {
  Matrix s = corr;
  for (std::size_t p = 0; p < s.rows(); ++p)
    for (std::size_t q = 0; q < s.cols(); ++q) s(p, q) *= gamma[begin + p] * gamma[begin + q];
  return s;
}

}  // namespace

CovMatrix covariance_bn(const FeatureMap& xbar, std::span<const double> gamma) {
  if (gamma.size() != xbar.channels()) throw ShapeError("covariance_bn: gamma length != channels");
  if (xbar.batch() * xbar.shape().plane() == 0) throw ContractError("covariance_bn: M = 0");
  return scale_by_gamma(correlation_block(xbar, 0, xbar.channels()), gamma, 0);
}

CovMatrix trace_normalize(const CovMatrix& sigma) {
  const double t = trace(sigma);
  if (!std::isfinite(t)) throw NumericalError("trace_normalize: trace overflowed", t);
  if (!(t > 0.0)) {
    throw DegenerateInputError("trace_normalize: trace is " + std::to_string(t));
  }
  return (1.0 / t) * sigma;
}

double newton_residual(const Matrix& y, const Matrix& s) {
  Matrix r = matmul(matmul(y, y), s);
  for (std::size_t i = 0; i < r.rows(); ++i) r(i, i) -= 1.0;
  return frobenius_norm(r);
}

std::vector<Matrix> newton_iterates(const CovMatrix& s, int iterations) {
  if (iterations < 1) throw ContractError("newton_iterates: iterations must be >= 1");
  if (s.rows() != s.cols()) throw ShapeError("newton_iterates: matrix is not square");
  std::vector<Matrix> ys;
  ys.reserve(static_cast<std::size_t>(iterations) + 1);
  ys.push_back(Matrix::identity(s.rows()));
  double prev = newton_residual(ys.back(), s);
  int growth = 0;
  for (int k = 1; k <= iterations; ++k) {
    const Matrix& y = ys.back();
    const Matrix y3 = matmul(matmul(y, y), y);
    Matrix next = 3.0 * y;
    next -= matmul(y3, s);
    next *= 0.5;
    const double r = newton_residual(next, s);
    if (!std::isfinite(r)) throw NumericalError("Newton iteration produced non-finite values", r);
    // Below the floor the residual is rounding noise.
    growth = r > prev && r > 1e-8 ? growth + 1 : 0;
    if (growth >= 2) {
      throw NumericalError("Newton iteration diverged at step " + std::to_string(k), r);
    }
    prev = r;
    ys.push_back(std::move(next));
  }
  return ys;
}

CovMatrix newton_inv_sqrt(const CovMatrix& sigma_n, const NewtonConfig& cfg) {
  cfg.validate();
  return newton_iterates(sigma_n, cfg.iterations).back();
}

Matrix newton_backward(const std::vector<Matrix>& iterates, const Matrix& s, const Matrix& d_last) {
  Matrix g = d_last;
  Matrix ds(s.rows(), s.cols());
  const Matrix st = transpose(s);
  for (std::size_t k = iterates.size() - 1; k >= 1; --k) {
    const Matrix& y = iterates[k - 1];
    const Matrix yt = transpose(y);
    const Matrix y2 = matmul(y, y);
    const Matrix y2t = transpose(y2);
    // Y_k = 1.5 Y - 0.5 Y Y Y S
    ds -= 0.5 * matmul(transpose(matmul(y2, y)), g);
    Matrix gy = 1.5 * g;
    gy -= 0.5 * matmul(g, transpose(matmul(y2, s)));
    gy -= 0.5 * matmul(matmul(yt, g), transpose(matmul(y, s)));
    gy -= 0.5 * matmul(matmul(y2t, g), st);
    g = std::move(gy);
  }
  return ds;
}

Pooled maxpool2x2(const FeatureMap& x) {
  const auto& s = x.shape();
  if (s.h < 2 || s.w < 2) throw ContractError("maxpool2x2: spatial dims must be >= 2");
  const Shape4 ps{s.n, s.c, s.h / 2, s.w / 2};
  Pooled out{FeatureMap(ps), std::vector<std::size_t>(ps.count())};
  for (std::size_t n = 0; n < s.n; ++n)
    for (std::size_t c = 0; c < s.c; ++c)
      for (std::size_t i = 0; i < ps.h; ++i)
        for (std::size_t j = 0; j < ps.w; ++j) {
          std::size_t best = x.index(n, c, 2 * i, 2 * j);
          for (std::size_t di = 0; di < 2; ++di)
            for (std::size_t dj = 0; dj < 2; ++dj) {
              const std::size_t k = x.index(n, c, 2 * i + di, 2 * j + dj);
              if (x.values()[k] > x.values()[best]) best = k;
            }
          const std::size_t o = out.values.index(n, c, i, j);
          out.values.values()[o] = x.values()[best];
          out.argmax[o] = best;
        }
  return out;
}

DecorrelationResult decorrelate(const FeatureMap& xbar, std::span<const double> gamma,
                                const GroupScheme& scheme, const NewtonConfig& cfg) {
  cfg.validate();
  const std::size_t channels = xbar.channels();
  if (gamma.size() != channels) throw ShapeError("decorrelate: gamma length != channels");
  scheme.validate(channels);

  DecorrelationResult res;
  const auto& s = xbar.shape();
  res.pooled = s.plane() > cfg.pool_threshold && s.h >= 2 && s.w >= 2;
  if (res.pooled) res.pool = maxpool2x2(xbar);
  const FeatureMap& src = res.pooled ? res.pool.values : xbar;

  res.inv_sqrt = Matrix(channels, channels);
  for (const auto& [b, e] : scheme.ranges) {
    GroupCache gc;
    gc.begin = b;
    gc.end = e;
    gc.corr = correlation_block(src, b, e);
    gc.sigma = scale_by_gamma(gc.corr, gamma, b);
    for (std::size_t p = 0; p < e - b; ++p) gc.sigma(p, p) += cfg.diag_eps;
    if (cfg.trace_normalize) {
      gc.trace = trace(gc.sigma);
      gc.sigma_n = trace_normalize(gc.sigma);
    } else {
      gc.trace = 1.0;
      gc.sigma_n = gc.sigma;
    }
    gc.iterates = newton_iterates(gc.sigma_n, cfg.iterations);
    const double post = cfg.rescale ? 1.0 / std::sqrt(gc.trace) : 1.0;
    const Matrix& y = gc.iterates.back();
    for (std::size_t p = 0; p < e - b; ++p)
      for (std::size_t q = 0; q < e - b; ++q) res.inv_sqrt(b + p, b + q) = post * y(p, q);
    res.groups.push_back(std::move(gc));
  }
  return res;
}

CovMatrix groupwise_inv_sqrt(const FeatureMap& xbar, std::span<const double> gamma,
                             const GroupScheme& scheme, const NewtonConfig& cfg) {
  return decorrelate(xbar, gamma, scheme, cfg).inv_sqrt;
}

DecorrelationGrad decorrelate_backward(const DecorrelationResult& fwd, const Matrix& d_inv_sqrt,
                                       const FeatureMap& xbar, std::span<const double> gamma,
                                       const NewtonConfig& cfg) {
  const FeatureMap& src = fwd.pooled ? fwd.pool.values : xbar;
  const auto& s = src.shape();
  const double m = static_cast<double>(s.n * s.plane());
  FeatureMap dsrc(s);
  Vector dgamma(gamma.size(), 0.0);

  for (const auto& gc : fwd.groups) {
    const std::size_t g = gc.end - gc.begin;
    Matrix dy(g, g);
    for (std::size_t p = 0; p < g; ++p)
      for (std::size_t q = 0; q < g; ++q) dy(p, q) = d_inv_sqrt(gc.begin + p, gc.begin + q);

    double dtrace = 0.0;
    if (cfg.rescale) {
      const double t = gc.trace;
      const Matrix& y = gc.iterates.back();
      double inner = 0.0;
      for (std::size_t k = 0; k < dy.size(); ++k) inner += dy.values()[k] * y.values()[k];
      dtrace += inner * -0.5 * std::pow(t, -1.5);
      dy *= 1.0 / std::sqrt(t);
    }

    const Matrix ds = newton_backward(gc.iterates, gc.sigma_n, dy);
    Matrix dsigma(g, g);
    if (cfg.trace_normalize) {
      const double t = gc.trace;
      double inner = 0.0;
      for (std::size_t k = 0; k < ds.size(); ++k) inner += ds.values()[k] * gc.sigma.values()[k];
      dsigma = (1.0 / t) * ds;
      dtrace -= inner / (t * t);
    } else {
      dsigma = ds;
    }
    for (std::size_t p = 0; p < g; ++p) dsigma(p, p) += dtrace;

    // sigma = (gamma gamma^T) .* corr (+ eps I)
    Matrix dcorr(g, g);
    for (std::size_t p = 0; p < g; ++p) {
      const double gp = gamma[gc.begin + p];
      for (std::size_t q = 0; q < g; ++q) {
        const double gq = gamma[gc.begin + q];
        dcorr(p, q) = dsigma(p, q) * gp * gq;
        dgamma[gc.begin + p] += (dsigma(p, q) + dsigma(q, p)) * gq * gc.corr(p, q);
      }
    }
    // corr = (1/M) X X^T  =>  dX = (1/M) (dcorr + dcorr^T) X
    Matrix sym = dcorr + transpose(dcorr);
    for (std::size_t n = 0; n < s.n; ++n)
      for (std::size_t p = 0; p < g; ++p) {
        auto out = dsrc.plane(n, gc.begin + p);
        for (std::size_t q = 0; q < g; ++q) {
          const double w = sym(p, q) / m;
          if (w == 0.0) continue;
          const auto xq = src.plane(n, gc.begin + q);
          for (std::size_t k = 0; k < out.size(); ++k) out[k] += w * xq[k];
        }
      }
  }

  if (!fwd.pooled) return {std::move(dsrc), std::move(dgamma)};

  FeatureMap dxbar(xbar.shape());
  for (std::size_t k = 0; k < dsrc.size(); ++k)
    dxbar.values()[fwd.pool.argmax[k]] += dsrc.values()[k];
  return {std::move(dxbar), std::move(dgamma)};
}

}  // namespace chaneq
