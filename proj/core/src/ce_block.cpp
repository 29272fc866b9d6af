#include "chaneq/ce_block.hpp"

#include <algorithm>
#include <cmath>

#include "chaneq/error.hpp"

namespace chaneq {

const char* to_string(Branches b) {
  switch (b) {
    case Branches::Full: return "full";
    case Branches::BdOnly: return "bd_only";
    case Branches::IrOnly: return "ir_only";
  }
  return "?";
}

namespace {

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

Matrix uniform_matrix(std::size_t rows, std::size_t cols, double bound, Rng& rng) {
  Matrix m(rows, cols);
  for (double& v : m.values()) v = rng.uniform(-bound, bound);
  return m;
}

/// out[n, :, k] = B * in[n, :, k] at every location.
FeatureMap apply_channel_operator(const Matrix& b, const FeatureMap& in) {
  const auto& s = in.shape();
  FeatureMap out(s);
  for (std::size_t n = 0; n < s.n; ++n)
    for (std::size_t c = 0; c < s.c; ++c) {
      auto o = out.plane(n, c);
      for (std::size_t d = 0; d < s.c; ++d) {
        const double w = b(c, d);
        if (w == 0.0) continue;
        const auto src = in.plane(n, d);
        for (std::size_t k = 0; k < o.size(); ++k) o[k] += w * src[k];
      }
    }
  return out;
}

Matrix plane_variances(const FeatureMap& x) {
  const auto& s = x.shape();
  Matrix q(s.n, s.c);
  const double hw = static_cast<double>(s.plane());
  for (std::size_t n = 0; n < s.n; ++n)
    for (std::size_t c = 0; c < s.c; ++c) {
      const auto p = x.plane(n, c);
      double mean = 0.0;
      for (double v : p) mean += v;
      mean /= hw;
      double var = 0.0;
      for (double v : p) var += (v - mean) * (v - mean);
      q(n, c) = var / hw;
    }
  return q;
}

NormStats eval_stats(const FeatureMap& x, const CEState& state) {
  if (state.norm == NormKind::BN) {
    return NormStats{NormKind::BN, state.running_mean, state.running_var, state.norm_eps};
  }
  return compute_stats(x, state.norm, state.norm_eps);
}

}  // namespace

CEState CEState::create(std::size_t channels, Rng& rng, const CEOptions& opts) {
  if (channels == 0) throw ContractError("CEState: channels must be >= 1");
  if (opts.reduction == 0) throw ContractError("CEState: reduction must be >= 1");
  opts.newton.validate();
  CEState st;
  st.channels = channels;
  st.reduction = opts.reduction;
  st.group_size = opts.group_size == 0 ? std::min<std::size_t>(channels, 16) : opts.group_size;
  st.newton = opts.newton;
  st.norm = opts.norm;
  st.momentum = opts.momentum;
  st.branches = opts.branches;
  st.gamma.assign(channels, 1.0);
  st.beta.assign(channels, 0.0);
  const auto hidden = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::lround(static_cast<double>(channels) /
                                              static_cast<double>(opts.reduction))));
  st.ir.w1 = uniform_matrix(hidden, channels, std::sqrt(6.0 / static_cast<double>(channels)), rng);
  st.ir.ln_gain.assign(hidden, 1.0);
  st.ir.ln_bias.assign(hidden, 0.0);
  st.ir.w2 = uniform_matrix(channels, hidden, std::sqrt(6.0 / static_cast<double>(hidden)), rng);
  st.running_inv_sqrt = Matrix::identity(channels);
  st.running_s_inv_sqrt = 1.0;
  st.running_mean.assign(channels, 0.0);
  st.running_var.assign(channels, 1.0);
  return st;
}

double CEState::lambda() const noexcept {
  switch (branches) {
    case Branches::BdOnly: return 1.0;
    case Branches::IrOnly: return 0.0;
    case Branches::Full: return sigmoid(lambda_raw);
  }
  return sigmoid(lambda_raw);
}

void CEState::validate() const {
  const std::size_t c = channels;
  const std::size_t h = ir.ln_gain.size();
  if (c == 0 || h == 0) throw ContractError("CEState: empty channel or hidden dimension");
  if (gamma.size() != c || beta.size() != c || running_mean.size() != c ||
      running_var.size() != c) {
    throw ContractError("CEState: per-channel vectors must have length C");
  }
  if (ir.w1.rows() != h || ir.w1.cols() != c || ir.w2.rows() != c || ir.w2.cols() != h ||
      ir.ln_bias.size() != h) {
    throw ContractError("CEState: IR weight shapes inconsistent with C and hidden width");
  }
  if (running_inv_sqrt.rows() != c || running_inv_sqrt.cols() != c) {
    throw ContractError("CEState: running operator must be C x C");
  }
  if (!is_symmetric(running_inv_sqrt, 1e-9)) {
    throw ContractError("CEState: running operator must be symmetric");
  }
  if (!(momentum >= 0.0 && momentum <= 1.0)) throw ContractError("CEState: momentum outside [0,1]");
  if (group_size == 0) throw ContractError("CEState: group size must be >= 1");
  newton.validate();
}

Matrix instance_variance(std::span<const double> gamma, const Matrix& sigma2_in,
                         std::span<const double> sigma2_bn, double eps) {
  if (gamma.size() != sigma2_in.cols() || sigma2_bn.size() != sigma2_in.cols()) {
    throw ShapeError("instance_variance: channel counts disagree");
  }
  Matrix out(sigma2_in.rows(), sigma2_in.cols());
  for (std::size_t n = 0; n < out.rows(); ++n)
    for (std::size_t c = 0; c < out.cols(); ++c)
      out(n, c) = gamma[c] * gamma[c] * sigma2_in(n, c) / (sigma2_bn[c] + eps);
  return out;
}

GateTrace ir_gate_trace(std::span<const double> v, const CEState& state) {
  if (v.size() != state.channels) throw ShapeError("ir_gate: input length != channels");
  GateTrace t;
  const std::size_t h = state.hidden();
  t.z1 = matvec(state.ir.w1, v);
  double mean = 0.0;
  for (double z : t.z1) mean += z;
  mean /= static_cast<double>(h);
  double var = 0.0;
  for (double z : t.z1) var += (z - mean) * (z - mean);
  var /= static_cast<double>(h);
  t.inv_std = 1.0 / std::sqrt(var + state.ln_eps);
  t.zhat.resize(h);
  t.z2.resize(h);
  t.a.resize(h);
  for (std::size_t k = 0; k < h; ++k) {
    t.zhat[k] = (t.z1[k] - mean) * t.inv_std;
    t.z2[k] = state.ir.ln_gain[k] * t.zhat[k] + state.ir.ln_bias[k];
    t.a[k] = t.z2[k] > 0.0 ? t.z2[k] : 0.0;
  }
  t.gate = matvec(state.ir.w2, t.a);
  for (double& g : t.gate) g = sigmoid(g);
  return t;
}

Vector ir_gate(std::span<const double> sigma2_tilde_n, const CEState& state) {
  return ir_gate_trace(sigma2_tilde_n, state).gate;
}

double variance_scale(const Matrix& sigma2_tilde) {
  double s = 0.0;
  for (double v : sigma2_tilde.values()) s += v;
  s /= static_cast<double>(sigma2_tilde.size());
  if (!(s > 0.0)) throw DegenerateInputError("IR variance scale s is not positive");
  return s;
}

Matrix ir_branch(const Matrix& sigma2_tilde, const CEState& state) {
  const double r = state.mode == Mode::Train ? 1.0 / std::sqrt(variance_scale(sigma2_tilde))
                                             : state.running_s_inv_sqrt;
  Matrix out(sigma2_tilde.rows(), sigma2_tilde.cols());
  for (std::size_t n = 0; n < out.rows(); ++n) {
    const Vector g = ir_gate(sigma2_tilde.row(n), state);
    for (std::size_t c = 0; c < out.cols(); ++c) out(n, c) = g[c] * r;
  }
  return out;
}

void update_running(CEState& state, const CovMatrix& sigma_inv_sqrt, double s_inv_sqrt, double m) {
  moving_average(state.running_inv_sqrt.values(), sigma_inv_sqrt.values(), m);
  const double cur[1] = {s_inv_sqrt};
  moving_average(std::span<double>(&state.running_s_inv_sqrt, 1), cur, m);
}

CEOutput ce_forward(const FeatureMap& x, CEState& state, bool track_running) {
  if (x.channels() != state.channels) throw ShapeError("ce_forward: input channels != C");
  const auto& shape = x.shape();
  const bool train = state.mode == Mode::Train;
  if (train && shape.n * shape.plane() < 2) {
    throw ContractError("ce_forward: train mode needs N*H*W >= 2");
  }
  if (!train && !state.has_running) {
    throw StateError("ce_forward: eval mode before running statistics were populated");
  }

  CEOutput out;
  CECache& k = out.cache;
  k.mode = state.mode;
  k.stats = train ? compute_stats(x, state.norm, state.norm_eps) : eval_stats(x, state);
  k.xbar = standardize(x, k.stats);
  k.xtilde = apply_affine(k.xbar, AffineParams{state.gamma, state.beta});
  k.lambda = state.lambda();
  k.use_bd = state.branches != Branches::IrOnly;
  k.use_ir = state.branches != Branches::BdOnly;

  out.p = FeatureMap(shape);
  if (k.use_bd) {
    if (train) {
      k.bd = decorrelate(k.xbar, state.gamma, state.groups(), state.newton);
      k.bd_op = k.bd.inv_sqrt;
    } else {
      k.bd_op = state.running_inv_sqrt;
    }
    k.bd_out = apply_channel_operator(k.bd_op, k.xtilde);
    for (std::size_t i = 0; i < out.p.size(); ++i)
      out.p.values()[i] += k.lambda * k.bd_out.values()[i];
  }
  if (k.use_ir) {
    k.q = plane_variances(k.xbar);
    k.sigma2_tilde = Matrix(shape.n, shape.c);
    for (std::size_t n = 0; n < shape.n; ++n)
      for (std::size_t c = 0; c < shape.c; ++c)
        k.sigma2_tilde(n, c) = state.gamma[c] * state.gamma[c] * k.q(n, c);
    if (train) {
      k.s = variance_scale(k.sigma2_tilde);
      k.s_inv_sqrt = 1.0 / std::sqrt(k.s);
    } else {
      k.s_inv_sqrt = state.running_s_inv_sqrt;
    }
    k.d = Matrix(shape.n, shape.c);
    k.gates.reserve(shape.n);
    k.ir_out = FeatureMap(shape);
    for (std::size_t n = 0; n < shape.n; ++n) {
      k.gates.push_back(ir_gate_trace(k.sigma2_tilde.row(n), state));
      for (std::size_t c = 0; c < shape.c; ++c) {
        k.d(n, c) = k.gates.back().gate[c] * k.s_inv_sqrt;
        const auto xt = k.xtilde.plane(n, c);
        auto o = k.ir_out.plane(n, c);
        for (std::size_t i = 0; i < xt.size(); ++i) o[i] = k.d(n, c) * xt[i];
      }
    }
    for (std::size_t i = 0; i < out.p.size(); ++i)
      out.p.values()[i] += (1.0 - k.lambda) * k.ir_out.values()[i];
  }

  if (train && track_running) {
    if (state.norm == NormKind::BN) {
      moving_average(state.running_mean, k.stats.mean, state.momentum);
      moving_average(state.running_var, k.stats.var, state.momentum);
    }
    update_running(state, k.use_bd ? k.bd_op : state.running_inv_sqrt,
                   k.use_ir ? k.s_inv_sqrt : state.running_s_inv_sqrt, state.momentum);
    state.has_running = true;
  }
  k.valid = true;
  return out;
}

CEGrads ce_backward(const FeatureMap& grad_out, const CECache& k, const CEState& state) {
  if (!k.valid) throw StateError("ce_backward: no forward cache");
  if (k.mode != Mode::Train) throw StateError("ce_backward: cache is not from a train-mode forward");
  const auto& s = k.xbar.shape();
  if (!(grad_out.shape() == s)) throw ShapeError("ce_backward: gradient shape mismatch");

  const std::size_t C = s.c;
  const std::size_t h = state.hidden();
  CEGrads g;
  g.dgamma.assign(C, 0.0);
  g.dbeta.assign(C, 0.0);
  g.dw1 = Matrix(h, C);
  g.dw2 = Matrix(C, h);
  g.dln_gain.assign(h, 0.0);
  g.dln_bias.assign(h, 0.0);

  FeatureMap dxtilde(s);
  FeatureMap dxbar(s);
  const double lam = k.lambda;

  if (state.branches == Branches::Full) {
    double acc = 0.0;
    for (std::size_t i = 0; i < grad_out.size(); ++i)
      acc += grad_out.values()[i] * (k.bd_out.values()[i] - k.ir_out.values()[i]);
    g.dlambda_raw = lam * (1.0 - lam) * acc;
  }

  if (k.use_bd) {
    // p += lam * B xtilde
    Matrix dop(C, C);
    for (std::size_t n = 0; n < s.n; ++n)
      for (std::size_t c = 0; c < C; ++c) {
        const auto go = grad_out.plane(n, c);
        for (std::size_t d = 0; d < C; ++d) {
          const auto xt = k.xtilde.plane(n, d);
          double acc = 0.0;
          for (std::size_t i = 0; i < go.size(); ++i) acc += go[i] * xt[i];
          dop(c, d) += lam * acc;
          const double w = lam * k.bd_op(c, d);
          if (w == 0.0) continue;
          auto dx = dxtilde.plane(n, d);
          for (std::size_t i = 0; i < go.size(); ++i) dx[i] += w * go[i];
        }
      }
    const DecorrelationGrad dg = decorrelate_backward(k.bd, dop, k.xbar, state.gamma, state.newton);
    dxbar += dg.dxbar;
    for (std::size_t c = 0; c < C; ++c) g.dgamma[c] += dg.dgamma[c];
  }

  if (k.use_ir) {
    const double w = 1.0 - lam;
    Matrix dd(s.n, C);
    for (std::size_t n = 0; n < s.n; ++n)
      for (std::size_t c = 0; c < C; ++c) {
        const auto go = grad_out.plane(n, c);
        const auto xt = k.xtilde.plane(n, c);
        auto dx = dxtilde.plane(n, c);
        double acc = 0.0;
        for (std::size_t i = 0; i < go.size(); ++i) {
          acc += go[i] * xt[i];
          dx[i] += w * k.d(n, c) * go[i];
        }
        dd(n, c) = w * acc;
      }

    // d = gate * r,  r = s^{-1/2},  s = mean(sigma2_tilde)
    double dr = 0.0;
    for (std::size_t n = 0; n < s.n; ++n)
      for (std::size_t c = 0; c < C; ++c) dr += dd(n, c) * k.gates[n].gate[c];
    const double ds = dr * -0.5 * std::pow(k.s, -1.5);
    const double dv_shared = ds / static_cast<double>(s.n * C);

    Matrix dv(s.n, C, dv_shared);
    for (std::size_t n = 0; n < s.n; ++n) {
      const GateTrace& t = k.gates[n];
      Vector dz3(C);
      for (std::size_t c = 0; c < C; ++c) {
        const double gate = t.gate[c];
        dz3[c] = dd(n, c) * k.s_inv_sqrt * gate * (1.0 - gate);
      }
      Vector dz2(h, 0.0);
      for (std::size_t c = 0; c < C; ++c)
        for (std::size_t j = 0; j < h; ++j) {
          g.dw2(c, j) += dz3[c] * t.a[j];
          dz2[j] += state.ir.w2(c, j) * dz3[c];
        }
      Vector dzhat(h);
      for (std::size_t j = 0; j < h; ++j) {
        if (t.z2[j] <= 0.0) dz2[j] = 0.0;
        g.dln_gain[j] += dz2[j] * t.zhat[j];
        g.dln_bias[j] += dz2[j];
        dzhat[j] = dz2[j] * state.ir.ln_gain[j];
      }
      double mean_d = 0.0;
      double mean_dz = 0.0;
      for (std::size_t j = 0; j < h; ++j) {
        mean_d += dzhat[j];
        mean_dz += dzhat[j] * t.zhat[j];
      }
      mean_d /= static_cast<double>(h);
      mean_dz /= static_cast<double>(h);
      const auto v = k.sigma2_tilde.row(n);
      for (std::size_t j = 0; j < h; ++j) {
        const double dz1 = t.inv_std * (dzhat[j] - mean_d - t.zhat[j] * mean_dz);
        for (std::size_t c = 0; c < C; ++c) {
          g.dw1(j, c) += dz1 * v[c];
          dv(n, c) += state.ir.w1(j, c) * dz1;
        }
      }
    }

    // sigma2_tilde = gamma^2 q,  q = per-sample variance of xbar over (H, W)
    const double hw = static_cast<double>(s.plane());
    for (std::size_t n = 0; n < s.n; ++n)
      for (std::size_t c = 0; c < C; ++c) {
        const double gc = state.gamma[c];
        g.dgamma[c] += dv(n, c) * 2.0 * gc * k.q(n, c);
        const double dq = dv(n, c) * gc * gc;
        const auto xb = k.xbar.plane(n, c);
        double mean = 0.0;
        for (double val : xb) mean += val;
        mean /= hw;
        auto dx = dxbar.plane(n, c);
        for (std::size_t i = 0; i < xb.size(); ++i) dx[i] += dq * 2.0 / hw * (xb[i] - mean);
      }
  }

  // xtilde = gamma xbar + beta
  for (std::size_t n = 0; n < s.n; ++n)
    for (std::size_t c = 0; c < C; ++c) {
      const auto dxt = dxtilde.plane(n, c);
      const auto xb = k.xbar.plane(n, c);
      auto dx = dxbar.plane(n, c);
      for (std::size_t i = 0; i < dxt.size(); ++i) {
        g.dgamma[c] += dxt[i] * xb[i];
        g.dbeta[c] += dxt[i];
        dx[i] += state.gamma[c] * dxt[i];
      }
    }

  g.dx = standardize_backward(dxbar, k.xbar, k.stats);
  return g;
}

LinearMap fuse_bd(const CEState& state, const LinearMap& preceding) {
  if (state.mode != Mode::Eval) throw StateError("fuse_bd: layer must be in eval mode");
  if (!state.has_running) throw StateError("fuse_bd: running statistics not populated");
  if (state.norm != NormKind::BN) {
    throw ContractError("fuse_bd: only BN statistics are fixed at inference");
  }
  const std::size_t C = state.channels;
  if (preceding.w.rows() != C || preceding.b.size() != C) {
    throw ShapeError("fuse_bd: preceding map must produce C channels");
  }
  const double lam = state.lambda();
  // A = lam * B * Diag(gamma / sigma)
  Matrix a(C, C);
  Vector shift(C);
  for (std::size_t d = 0; d < C; ++d) {
    const double scale = state.gamma[d] / std::sqrt(state.running_var[d] + state.norm_eps);
    for (std::size_t c = 0; c < C; ++c) a(c, d) = lam * state.running_inv_sqrt(c, d) * scale;
    shift[d] = scale * (preceding.b[d] - state.running_mean[d]) + state.beta[d];
  }
  LinearMap fused;
  fused.w = matmul(a, preceding.w);
  const Vector bias = matvec(state.running_inv_sqrt, shift);
  fused.b.resize(C);
  for (std::size_t c = 0; c < C; ++c) fused.b[c] = lam * bias[c];
  return fused;
}

FeatureMap ir_contribution(const FeatureMap& x, const CEState& state) {
  if (state.mode != Mode::Eval) throw StateError("ir_contribution: layer must be in eval mode");
  if (!state.has_running) throw StateError("ir_contribution: running statistics not populated");
  const auto& s = x.shape();
  FeatureMap out(s);
  if (state.branches == Branches::BdOnly) return out;
  const NormStats stats = eval_stats(x, state);
  const FeatureMap xbar = standardize(x, stats);
  const FeatureMap xtilde = apply_affine(xbar, AffineParams{state.gamma, state.beta});
  const Matrix q = plane_variances(xbar);
  Matrix v(s.n, s.c);
  for (std::size_t n = 0; n < s.n; ++n)
    for (std::size_t c = 0; c < s.c; ++c) v(n, c) = state.gamma[c] * state.gamma[c] * q(n, c);
  const Matrix d = ir_branch(v, state);
  const double w = 1.0 - state.lambda();
  for (std::size_t n = 0; n < s.n; ++n)
    for (std::size_t c = 0; c < s.c; ++c) {
      const auto xt = xtilde.plane(n, c);
      auto o = out.plane(n, c);
      for (std::size_t i = 0; i < xt.size(); ++i) o[i] = w * d(n, c) * xt[i];
    }
  return out;
}

}  // namespace chaneq
