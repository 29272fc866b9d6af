#pragma once

// Batch decorrelation: covariance of standardized features scaled by gamma,
// trace normalization, and the Newton-Schulz inverse square root
//   Y_0 = I,  Y_k = (3 Y_{k-1} - Y_{k-1}^3 S) / 2.
// The group-wise pipeline records every iterate so it can be differentiated.

#include <utility>
#include <vector>

#include "chaneq/tensor.hpp"

namespace chaneq {

struct NewtonConfig {
  int iterations = 3;
  bool trace_normalize = true;
  /// Added to the covariance diagonal before trace normalization.
  double diag_eps = 1e-5;
  /// Multiply the result by tr(Sigma)^{-1/2}, turning (Sigma/tr)^{-1/2} into Sigma^{-1/2}.
  bool rescale = false;
  /// 2x2 max pooling of (H, W) is applied before the covariance when H*W exceeds this.
  std::size_t pool_threshold = 64 * 64;

  void validate() const;
};

/// Contiguous channel ranges [begin, end), each at most `group_size` wide.
struct GroupScheme {
  std::size_t group_size = 16;
  std::vector<std::pair<std::size_t, std::size_t>> ranges;

  static GroupScheme contiguous(std::size_t channels, std::size_t group_size);
  /// group size min(C, 16).
  static GroupScheme for_channels(std::size_t channels);

  /// Throws ContractError unless the ranges partition [0, channels).
  void validate(std::size_t channels) const;
};

/// Sigma = (gamma gamma^T) .* (1/M) Xbar Xbar^T, with Xbar reshaped C x M, M = N*H*W.
CovMatrix covariance_bn(const FeatureMap& xbar, std::span<const double> gamma);

/// Sigma / tr(Sigma). Throws DegenerateInputError when tr(Sigma) <= 0.
CovMatrix trace_normalize(const CovMatrix& sigma);

/// Residual |Y^2 S - I|_F.
double newton_residual(const Matrix& y, const Matrix& s);

/// All iterates Y_0..Y_T of the Newton-Schulz recurrence for S. Throws
/// NumericalError when the residual grows on two consecutive iterations.
std::vector<Matrix> newton_iterates(const CovMatrix& s, int iterations);

/// Y_T for a trace-normalized S (iterations from cfg; no regularization applied here).
CovMatrix newton_inv_sqrt(const CovMatrix& sigma_n, const NewtonConfig& cfg = {});

/// Reverse-mode step through the whole recurrence: given dL/dY_T returns dL/dS.
Matrix newton_backward(const std::vector<Matrix>& iterates, const Matrix& s, const Matrix& d_last);

/// 2x2 max pooling over (H, W) with floor semantics; argmax holds the source
/// flat index of every pooled element.
struct Pooled {
  FeatureMap values;
  std::vector<std::size_t> argmax;
};
Pooled maxpool2x2(const FeatureMap& x);

struct GroupCache {
  std::size_t begin = 0;
  std::size_t end = 0;
  Matrix corr;       ///< (1/M) Xbar_g Xbar_g^T
  Matrix sigma;      ///< gamma-scaled covariance plus diag_eps
  double trace = 1.0;
  Matrix sigma_n;    ///< matrix handed to Newton
  std::vector<Matrix> iterates;
};

struct DecorrelationResult {
  CovMatrix inv_sqrt;  ///< block diagonal, C x C
  std::vector<GroupCache> groups;
  bool pooled = false;
  Pooled pool;         ///< only filled when pooled
};

/// Per group: covariance_bn -> + diag_eps I -> trace_normalize -> Newton,
/// assembled block-diagonally in group order.
DecorrelationResult decorrelate(const FeatureMap& xbar, std::span<const double> gamma,
                                const GroupScheme& scheme, const NewtonConfig& cfg);

CovMatrix groupwise_inv_sqrt(const FeatureMap& xbar, std::span<const double> gamma,
                             const GroupScheme& scheme, const NewtonConfig& cfg = {});

struct DecorrelationGrad {
  FeatureMap dxbar;
  Vector dgamma;
};

/// Backward of decorrelate() for an upstream gradient on the C x C operator.
DecorrelationGrad decorrelate_backward(const DecorrelationResult& fwd, const Matrix& d_inv_sqrt,
                                       const FeatureMap& xbar, std::span<const double> gamma,
                                       const NewtonConfig& cfg);

}  // namespace chaneq
