#include "chaneq/norm_act.hpp"

#include <cmath>
#include <string>

#include "chaneq/error.hpp"

namespace chaneq {

const char* to_string(NormKind k) {
  switch (k) {
    case NormKind::BN: return "BN";
    case NormKind::IN: return "IN";
    case NormKind::LN: return "LN";
  }
  return "?";
}

NormKind parse_norm_kind(std::string_view s) {
  if (s == "BN" || s == "bn") return NormKind::BN;
  if (s == "IN" || s == "in") return NormKind::IN;
  if (s == "LN" || s == "ln") return NormKind::LN;
  throw ConfigError("unknown normalizer '" + std::string(s) + "' (expected BN, IN or LN)");
}

const char* to_string(ActKind k) {
  switch (k) {
    case ActKind::ReLU: return "relu";
    case ActKind::LReLU: return "lrelu";
    case ActKind::ELU: return "elu";
    case ActKind::Identity: return "identity";
  }
  return "?";
}

ActKind parse_act_kind(std::string_view s) {
  if (s == "relu") return ActKind::ReLU;
  if (s == "lrelu") return ActKind::LReLU;
  if (s == "elu") return ActKind::ELU;
  if (s == "identity") return ActKind::Identity;
  throw ConfigError("unknown activation '" + std::string(s) + "'");
}

namespace {

unsigned reduce_axes(NormKind kind) {
  switch (kind) {
    case NormKind::BN: return kAxisN | kAxisH | kAxisW;
    case NormKind::IN: return kAxisH | kAxisW;
    case NormKind::LN: return kAxisC | kAxisH | kAxisW;
  }
  return 0;
}

std::size_t unit_count(NormKind kind, const Shape4& s) {
  switch (kind) {
    case NormKind::BN: return s.c;
    case NormKind::IN: return s.n * s.c;
    case NormKind::LN: return s.n;
  }
  return 0;
}

void check_stats(const NormStats& stats, const Shape4& s) {
  const std::size_t want = unit_count(stats.kind, s);
  if (stats.mean.size() != want || stats.var.size() != want) {
    throw ShapeError(std::string("NormStats(") + to_string(stats.kind) + "): expected " +
                     std::to_string(want) + " units, got " + std::to_string(stats.mean.size()));
  }
}

}  // namespace

NormStats compute_stats(const FeatureMap& x, NormKind kind, double eps) {
  NormStats st;
  st.kind = kind;
  st.eps = eps;
  st.mean = mean_over(x, reduce_axes(kind));
  st.var = variance_over(x, reduce_axes(kind));
  return st;
}

FeatureMap standardize(const FeatureMap& x, const NormStats& stats) {
  const auto& s = x.shape();
  check_stats(stats, s);
  FeatureMap out(s);
  for (std::size_t n = 0; n < s.n; ++n)
    for (std::size_t c = 0; c < s.c; ++c) {
      const std::size_t u = stats.unit(n, c, s.c);
      const double mu = stats.mean[u];
      const double inv = 1.0 / std::sqrt(stats.var[u] + stats.eps);
      const auto in = x.plane(n, c);
      auto o = out.plane(n, c);
      for (std::size_t k = 0; k < in.size(); ++k) o[k] = (in[k] - mu) * inv;
    }
  return out;
}

FeatureMap apply_affine(const FeatureMap& xbar, const AffineParams& params) {
  const auto& s = xbar.shape();
  if (params.gamma.size() != s.c || params.beta.size() != s.c) {
    throw ShapeError("apply_affine: gamma/beta length != channels");
  }
  FeatureMap out(s);
  for (std::size_t n = 0; n < s.n; ++n)
    for (std::size_t c = 0; c < s.c; ++c) {
      const auto in = xbar.plane(n, c);
      auto o = out.plane(n, c);
      for (std::size_t k = 0; k < in.size(); ++k) o[k] = params.gamma[c] * in[k] + params.beta[c];
    }
  return out;
}

Normalized normalize_affine(const FeatureMap& x, const NormStats& stats,
                            const AffineParams& params) {
  FeatureMap xbar = standardize(x, stats);
  FeatureMap xtilde = apply_affine(xbar, params);
  return {std::move(xbar), std::move(xtilde)};
}

FeatureMap standardize_backward(const FeatureMap& dxbar, const FeatureMap& xbar,
                                const NormStats& stats) {
  const auto& s = xbar.shape();
  check_stats(stats, s);
  const std::size_t units = stats.mean.size();
  Vector sum_d(units, 0.0);
  Vector sum_dx(units, 0.0);
  Vector count(units, 0.0);
  for (std::size_t n = 0; n < s.n; ++n)
    for (std::size_t c = 0; c < s.c; ++c) {
      const std::size_t u = stats.unit(n, c, s.c);
      const auto d = dxbar.plane(n, c);
      const auto xb = xbar.plane(n, c);
      for (std::size_t k = 0; k < d.size(); ++k) {
        sum_d[u] += d[k];
        sum_dx[u] += d[k] * xb[k];
      }
      count[u] += static_cast<double>(d.size());
    }
  FeatureMap dx(s);
  for (std::size_t n = 0; n < s.n; ++n)
    for (std::size_t c = 0; c < s.c; ++c) {
      const std::size_t u = stats.unit(n, c, s.c);
      const double inv = 1.0 / std::sqrt(stats.var[u] + stats.eps);
      const double md = sum_d[u] / count[u];
      const double mdx = sum_dx[u] / count[u];
      const auto d = dxbar.plane(n, c);
      const auto xb = xbar.plane(n, c);
      auto o = dx.plane(n, c);
      for (std::size_t k = 0; k < d.size(); ++k) o[k] = inv * (d[k] - md - xb[k] * mdx);
    }
  return dx;
}

FeatureMap standardize_backward_frozen(const FeatureMap& dxbar, const NormStats& stats) {
  const auto& s = dxbar.shape();
  check_stats(stats, s);
  FeatureMap dx(s);
  for (std::size_t n = 0; n < s.n; ++n)
    for (std::size_t c = 0; c < s.c; ++c) {
      const double inv = 1.0 / std::sqrt(stats.var[stats.unit(n, c, s.c)] + stats.eps);
      const auto d = dxbar.plane(n, c);
      auto o = dx.plane(n, c);
      for (std::size_t k = 0; k < d.size(); ++k) o[k] = inv * d[k];
    }
  return dx;
}

double Activation::apply(double x) const noexcept {
  switch (kind) {
    case ActKind::ReLU: return x >= 0.0 ? x : 0.0;
    case ActKind::LReLU: return x >= 0.0 ? x : slope * x;
    case ActKind::ELU: return x >= 0.0 ? x : alpha * std::expm1(x);
    case ActKind::Identity: return x;
  }
  return x;
}

double Activation::derivative(double x) const noexcept {
  switch (kind) {
    case ActKind::ReLU: return x >= 0.0 ? 1.0 : 0.0;
    case ActKind::LReLU: return x >= 0.0 ? 1.0 : slope;
    case ActKind::ELU: return x >= 0.0 ? 1.0 : alpha * std::exp(x);
    case ActKind::Identity: return 1.0;
  }
  return 1.0;
}

void Activation::validate() const {
  if (kind == ActKind::LReLU && !(slope > 0.0 && slope < 1.0)) {
    throw ContractError("LReLU slope must lie in (0, 1), got " + std::to_string(slope));
  }
  if (kind == ActKind::ELU && !(alpha > 0.0)) {
    throw ContractError("ELU alpha must be positive");
  }
}

FeatureMap rectify(const FeatureMap& x, const Activation& act) {
  act.validate();
  FeatureMap out(x.shape());
  const auto& in = x.values();
  auto& o = out.values();
  for (std::size_t k = 0; k < in.size(); ++k) o[k] = act.apply(in[k]);
  return out;
}

FeatureMap rectify_backward(const FeatureMap& dy, const FeatureMap& x, const Activation& act) {
  if (!(dy.shape() == x.shape())) throw ShapeError("rectify_backward: shape mismatch");
  FeatureMap dx(x.shape());
  for (std::size_t k = 0; k < x.size(); ++k)
    dx.values()[k] = dy.values()[k] * act.derivative(x.values()[k]);
  return dx;
}

void moving_average(std::span<double> running, std::span<const double> current, double momentum) {
  if (running.size() != current.size()) throw ShapeError("moving_average: length mismatch");
  if (!(momentum >= 0.0 && momentum <= 1.0)) {
    throw ContractError("moving_average: momentum must lie in [0, 1]");
  }
  for (std::size_t k = 0; k < running.size(); ++k)
    running[k] = (1.0 - momentum) * running[k] + momentum * current[k];
}

}  // namespace chaneq
