#pragma once

// Channel Equilibrium layer. For every location (n, i, j):
//
//   xtilde = Diag(gamma) xbar + beta
//   p      = lambda * B * xtilde + (1 - lambda) * Diag(d_n) * xtilde
//
// where B is the (trace-normalized) batch decorrelation operator computed by
// Newton-Schulz iteration and d_n = gate(sigma2_tilde_n) * s^{-1/2} is the
// instance-reweighting branch. In eval mode B and s^{-1/2} are moving averages.

#include <cstdint>
#include <string>
#include <vector>

#include "chaneq/decorrelate.hpp"
#include "chaneq/norm_act.hpp"
#include "chaneq/rng.hpp"
#include "chaneq/tensor.hpp"

namespace chaneq {

enum class Mode { Train, Eval };

/// Which branches are active. BdOnly pins lambda to 1, IrOnly pins it to 0.
enum class Branches { Full, BdOnly, IrOnly };

const char* to_string(Branches b);

struct IrWeights {
  Matrix w1;        ///< hidden x C
  Vector ln_gain;   ///< hidden
  Vector ln_bias;   ///< hidden
  Matrix w2;        ///< C x hidden
};

struct CEOptions {
  std::size_t reduction = 4;
  std::size_t group_size = 0;  ///< 0 selects min(C, 16)
  NewtonConfig newton{};
  NormKind norm = NormKind::BN;
  double momentum = 0.1;
  Branches branches = Branches::Full;
};

struct CEState {
  std::size_t channels = 0;
  std::size_t reduction = 4;
  std::size_t group_size = 16;
  NewtonConfig newton{};
  NormKind norm = NormKind::BN;
  double norm_eps = kNormEpsilon;
  double ln_eps = kNormEpsilon;
  double momentum = 0.1;

  ChannelVector gamma;
  ChannelVector beta;
  double lambda_raw = 0.0;
  IrWeights ir;

  CovMatrix running_inv_sqrt;
  double running_s_inv_sqrt = 1.0;
  ChannelVector running_mean;
  ChannelVector running_var;
  bool has_running = false;

  Mode mode = Mode::Train;
  Branches branches = Branches::Full;
  bool freeze_lambda = false;
  bool freeze_ir = false;

  /// gamma = 1, beta = 0, lambda_raw = 0, IR weights uniform in +-sqrt(6 / fan_in),
  /// LN gain 1 and bias 0, running operator I and running scale 1.
  static CEState create(std::size_t channels, Rng& rng, const CEOptions& opts = {});

  std::size_t hidden() const noexcept { return ir.ln_gain.size(); }
  /// Effective mixing weight after the branch pin.
  double lambda() const noexcept;
  GroupScheme groups() const { return GroupScheme::contiguous(channels, group_size); }

  /// Throws ContractError on inconsistent sizes.
  void validate() const;
};

/// sigma2_tilde[n][c] = gamma_c^2 * sigma2_in[n][c] / (sigma2_bn[c] + eps).
Matrix instance_variance(std::span<const double> gamma, const Matrix& sigma2_in,
                         std::span<const double> sigma2_bn, double eps = 0.0);

/// Intermediates of one gate evaluation.
struct GateTrace {
  Vector z1;       ///< W1 v
  Vector zhat;     ///< layer-normalized z1
  double inv_std = 1.0;
  Vector z2;       ///< gain * zhat + bias
  Vector a;        ///< relu(z2)
  Vector gate;     ///< sigmoid(W2 a)
};

GateTrace ir_gate_trace(std::span<const double> sigma2_tilde_n, const CEState& state);

/// Sigmoid(W2 ReLU(LN(W1 v))), every entry in (0, 1).
Vector ir_gate(std::span<const double> sigma2_tilde_n, const CEState& state);

/// s = mean over (n, c) of sigma2_tilde. Throws DegenerateInputError when s <= 0.
double variance_scale(const Matrix& sigma2_tilde);

/// Entries gate(sigma2_tilde_n)_c * s^{-1/2}; s^{-1/2} comes from the batch in
/// train mode and from the running average in eval mode.
Matrix ir_branch(const Matrix& sigma2_tilde, const CEState& state);

struct CECache {
  bool valid = false;
  Mode mode = Mode::Train;
  NormStats stats;
  FeatureMap xbar;
  FeatureMap xtilde;
  double lambda = 0.5;
  bool use_bd = true;
  bool use_ir = true;
  DecorrelationResult bd;
  CovMatrix bd_op;        ///< operator actually applied
  FeatureMap bd_out;      ///< B xtilde
  Matrix q;               ///< per-sample variance of xbar, N x C
  Matrix sigma2_tilde;    ///< N x C
  double s = 1.0;
  double s_inv_sqrt = 1.0;
  std::vector<GateTrace> gates;
  Matrix d;               ///< N x C reweighting entries
  FeatureMap ir_out;      ///< d .* xtilde
};

struct CEOutput {
  FeatureMap p;
  CECache cache;
};

/// Throws StateError in eval mode when running statistics are not populated.
/// In train mode the running statistics are updated unless track_running is false.
CEOutput ce_forward(const FeatureMap& x, CEState& state, bool track_running = true);

/// running <- (1 - m) running + m current, for both the operator and the scale.
void update_running(CEState& state, const CovMatrix& sigma_inv_sqrt, double s_inv_sqrt, double m);

struct CEGrads {
  FeatureMap dx;
  ChannelVector dgamma;
  ChannelVector dbeta;
  double dlambda_raw = 0.0;
  Matrix dw1;
  Vector dln_gain;
  Vector dln_bias;
  Matrix dw2;
};

/// Exact reverse-mode gradients of the train-mode forward. Batch statistics
/// (BN stats, covariance, s) are differentiated as functions of x; running
/// statistics are constants. Throws StateError without a train-mode cache.
CEGrads ce_backward(const FeatureMap& grad_out, const CECache& cache, const CEState& state);

/// A channel-mixing linear map y = W u + b applied at every location.
struct LinearMap {
  Matrix w;  ///< out x in
  Vector b;  ///< out
};

/// Folds the eval-mode BD path lambda * B * (gamma .* (W u + b - mu)/sigma + beta)
/// into a single linear map. Requires eval mode and BN statistics.
LinearMap fuse_bd(const CEState& state, const LinearMap& preceding);

/// Eval-mode IR contribution (1 - lambda) * d_n .* xtilde for input x.
FeatureMap ir_contribution(const FeatureMap& x, const CEState& state);

/// Flat checkpoint: magic, dims header (C, r, T, g), then named float64 arrays
/// gamma, beta, lambda_raw, W1, ln_gain, ln_bias, W2, running_inv_sqrt,
/// running_s_inv_sqrt, followed by running_mean, running_var and settings.
/// All integers and floats are little-endian.
std::string to_binary(const CEState& state);
CEState from_binary(std::string_view bytes);

std::string to_json(const CEState& state);
CEState from_json(std::string_view text);

}  // namespace chaneq
