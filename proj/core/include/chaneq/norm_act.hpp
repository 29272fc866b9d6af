#pragma once

// Normalization statistics (BN / IN / LN), the standardize-then-affine
// transform, rectified units, and their backward passes.

#include <span>
#include <string_view>

#include "chaneq/tensor.hpp"

namespace chaneq {

inline constexpr double kNormEpsilon = 1e-5;

enum class NormKind { BN, IN, LN };

const char* to_string(NormKind k);
NormKind parse_norm_kind(std::string_view s);

/// Means and biased variances per normalization unit.
/// BN: length C. IN: N*C, indexed n*C + c. LN: length N.
struct NormStats {
  NormKind kind = NormKind::BN;
  Vector mean;
  Vector var;
  double eps = kNormEpsilon;

  /// Which unit (n, c) belongs to.
  std::size_t unit(std::size_t n, std::size_t c, std::size_t channels) const noexcept {
    switch (kind) {
      case NormKind::BN: return c;
      case NormKind::IN: return n * channels + c;
      case NormKind::LN: return n;
    }
    return c;
  }
};

struct AffineParams {
  ChannelVector gamma;
  ChannelVector beta;

  static AffineParams identity(std::size_t channels) {
    return {ChannelVector(channels, 1.0), ChannelVector(channels, 0.0)};
  }
};

/// BN over (N,H,W), IN over (H,W), LN over (C,H,W).
NormStats compute_stats(const FeatureMap& x, NormKind kind, double eps = kNormEpsilon);

/// xbar = (x - mean) / sqrt(var + eps). Stats may come from x (training) or be
/// running estimates (BN inference); sizes must match the kind.
FeatureMap standardize(const FeatureMap& x, const NormStats& stats);

/// xtilde = gamma_c * xbar + beta_c.
FeatureMap apply_affine(const FeatureMap& xbar, const AffineParams& params);

struct Normalized {
  FeatureMap xbar;
  FeatureMap xtilde;
};

Normalized normalize_affine(const FeatureMap& x, const NormStats& stats, const AffineParams& params);

/// Gradient through standardization when the stats were computed from the
/// same batch: dx = (dxbar - mean(dxbar) - xbar * mean(dxbar * xbar)) / sigma
/// over each normalization unit.
FeatureMap standardize_backward(const FeatureMap& dxbar, const FeatureMap& xbar,
                                const NormStats& stats);

/// Gradient through standardization with frozen (running) statistics.
FeatureMap standardize_backward_frozen(const FeatureMap& dxbar, const NormStats& stats);

enum class ActKind { ReLU, LReLU, ELU, Identity };

const char* to_string(ActKind k);
ActKind parse_act_kind(std::string_view s);

struct Activation {
  ActKind kind = ActKind::ReLU;
  double slope = 0.0;  ///< LReLU negative slope, in (0, 1)
  double alpha = 1.0;  ///< ELU scale

  double apply(double x) const noexcept;
  double derivative(double x) const noexcept;
  /// Throws ContractError when parameters are out of range.
  void validate() const;
};

FeatureMap rectify(const FeatureMap& x, const Activation& act);
/// dL/dx given dL/dy and the pre-activation input x.
FeatureMap rectify_backward(const FeatureMap& dy, const FeatureMap& x, const Activation& act);

/// running <- (1 - m) * running + m * current, elementwise. Shared by the BN
/// running statistics and the CE moving averages.
void moving_average(std::span<double> running, std::span<const double> current, double momentum);

}  // namespace chaneq
