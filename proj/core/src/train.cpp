#include "chaneq/train.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <json.hpp>

#include "chaneq/error.hpp"
#include "chaneq/io.hpp"

namespace chaneq {

const char* to_string(CEVariant v) {
  switch (v) {
    case CEVariant::None: return "bn";
    case CEVariant::BdOnly: return "bn+bd";
    case CEVariant::IrOnly: return "bn+ir";
    case CEVariant::Full: return "bn+ce";
  }
  return "?";
}

CEVariant parse_ce_variant(std::string_view s) {
  if (s == "bn" || s == "none") return CEVariant::None;
  if (s == "bn+bd" || s == "bd") return CEVariant::BdOnly;
  if (s == "bn+ir" || s == "ir") return CEVariant::IrOnly;
  if (s == "bn+ce" || s == "ce") return CEVariant::Full;
  throw ConfigError("unknown variant '" + std::string(s) + "' (bn, bn+bd, bn+ir, bn+ce)");
}

double LrSchedule::at(std::size_t epoch) const {
  double lr = base;
  for (std::size_t m : milestones)
    if (epoch >= m) lr *= factor;
  return lr;
}

void TrainConfig::validate() const {
  if (epochs == 0) throw ConfigError("train: epochs must be >= 1");
  if (batch_size < 2) throw ConfigError("train: batch size must be >= 2");
  if (!(weight_decay >= 0.0)) throw ConfigError("train: weight decay must be >= 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("train: momentum must be in [0, 1)");
  if (!(lr.base >= 0.0)) throw ConfigError("train: learning rate must be >= 0");
  if (eval_every == 0) throw ConfigError("train: eval_every must be >= 1");
}

FeatureMap Dataset::batch(std::span<const std::size_t> idx) const {
  const std::size_t s = sample_size();
  std::vector<double> v;
  v.reserve(idx.size() * s);
  for (std::size_t i : idx) v.insert(v.end(), x.begin() + i * s, x.begin() + (i + 1) * s);
  return FeatureMap({idx.size(), dims.c, dims.h, dims.w}, std::move(v));
}

std::vector<int> Dataset::labels(std::span<const std::size_t> idx) const {
  std::vector<int> out;
  out.reserve(idx.size());
  for (std::size_t i : idx) out.push_back(y[i]);
  return out;
}

// ---- model ----

namespace {

Matrix uniform_init(std::size_t rows, std::size_t cols, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(cols));
  Matrix m(rows, cols);
  for (double& v : m.values()) v = rng.uniform(-bound, bound);
  return m;
}

Branches branches_of(CEVariant v) {
  switch (v) {
    case CEVariant::BdOnly: return Branches::BdOnly;
    case CEVariant::IrOnly: return Branches::IrOnly;
    default: return Branches::Full;
  }
}

}  // namespace

Model build_model(const std::vector<BlockSpec>& specs, Shape4 input, std::size_t classes, Rng& rng) {
  if (specs.empty()) throw ConfigError("build_model: at least one block is required");
  if (classes < 2) throw ConfigError("build_model: at least two classes are required");
  if (input.c == 0 || input.h == 0 || input.w == 0) throw ConfigError("build_model: empty input");
  Model m;
  m.input = input;
  m.classes = classes;
  std::size_t in = input.c;
  for (const BlockSpec& s : specs) {
    if (s.channels == 0) throw ConfigError("build_model: block with zero channels");
    try {
      s.act.validate();
    } catch (const ContractError& e) {
      throw ConfigError(e.what());
    }
    Block b;
    b.spec = s;
    b.linear.w = uniform_init(s.channels, in, rng);
    b.linear.b.assign(s.channels, 0.0);
    if (s.ce == CEVariant::None) {
      b.affine = AffineParams::identity(s.channels);
      b.running_mean.assign(s.channels, 0.0);
      b.running_var.assign(s.channels, 1.0);
    } else {
      if (s.reduction == 0 || s.group_size == 0 || s.newton_iterations < 1) {
        throw ConfigError("build_model: invalid CE options");
      }
      CEOptions o;
      o.reduction = s.reduction;
      o.group_size = std::min(s.group_size, s.channels);
      o.newton.iterations = s.newton_iterations;
      o.norm = s.norm;
      o.branches = branches_of(s.ce);
      b.ce = CEState::create(s.channels, rng, o);
    }
    m.blocks.push_back(std::move(b));
    in = s.channels;
  }
  m.head_w = uniform_init(classes, in, rng);
  m.head_b.assign(classes, 0.0);
  return m;
}

std::size_t Model::parameter_count() const {
  std::size_t n = head_w.size() + head_b.size();
  for (const Block& b : blocks) {
    n += b.linear.w.size() + b.linear.b.size();
    if (b.ce) {
      const CEState& c = *b.ce;
      n += 2 * c.channels + 1 + c.ir.w1.size() + c.ir.w2.size() + 2 * c.hidden();
    } else {
      n += 2 * b.spec.channels;
    }
  }
  return n;
}

void Model::set_mode(Mode m) {
  mode = m;
  for (Block& b : blocks)
    if (b.ce) b.ce->mode = m;
}

namespace {

std::span<double> one(double& v) { return {&v, 1}; }

}  // namespace

std::vector<ParamRef> params(Model& model, Gradients& grads) {
  std::vector<ParamRef> out;
  auto add = [&](std::string name, std::span<double> v, bool frozen = false) {
    out.push_back(ParamRef{std::move(name), v, {}, frozen});
  };
  for (std::size_t i = 0; i < model.blocks.size(); ++i) {
    Block& b = model.blocks[i];
    const std::string p = "block" + std::to_string(i) + ".";
    add(p + "linear.w", b.linear.w.values());
    add(p + "linear.b", b.linear.b);
    if (b.ce) {
      CEState& c = *b.ce;
      const bool ir_unused = c.branches == Branches::BdOnly;
      add(p + "gamma", c.gamma);
      add(p + "beta", c.beta);
      add(p + "lambda_raw", one(c.lambda_raw), c.freeze_lambda || c.branches != Branches::Full);
      add(p + "ir.w1", c.ir.w1.values(), c.freeze_ir || ir_unused);
      add(p + "ir.ln_gain", c.ir.ln_gain, c.freeze_ir || ir_unused);
      add(p + "ir.ln_bias", c.ir.ln_bias, c.freeze_ir || ir_unused);
      add(p + "ir.w2", c.ir.w2.values(), c.freeze_ir || ir_unused);
    } else {
      add(p + "gamma", b.affine.gamma);
      add(p + "beta", b.affine.beta);
    }
  }
  add("head.w", model.head_w.values());
  add("head.b", model.head_b);
  grads.slots.resize(out.size());
  for (std::size_t k = 0; k < out.size(); ++k) {
    grads.slots[k].resize(out[k].value.size());
    out[k].grad = grads.slots[k];
  }
  return out;
}

namespace {

FeatureMap linear_forward(const FeatureMap& in, const LinearMap& lin) {
  const auto& s = in.shape();
  const std::size_t out_c = lin.w.rows();
  FeatureMap out({s.n, out_c, s.h, s.w});
  for (std::size_t n = 0; n < s.n; ++n)
    for (std::size_t o = 0; o < out_c; ++o) {
      auto dst = out.plane(n, o);
      std::fill(dst.begin(), dst.end(), lin.b[o]);
      for (std::size_t i = 0; i < s.c; ++i) {
        const double w = lin.w(o, i);
        const auto src = in.plane(n, i);
        for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += w * src[k];
      }
    }
  return out;
}

FeatureMap linear_backward(const FeatureMap& dout, const FeatureMap& in, const LinearMap& lin,
                           std::span<double> dw, std::span<double> db) {
  const auto& s = in.shape();
  const std::size_t out_c = lin.w.rows();
  FeatureMap din(s);
  for (std::size_t n = 0; n < s.n; ++n)
    for (std::size_t o = 0; o < out_c; ++o) {
      const auto g = dout.plane(n, o);
      for (double v : g) db[o] += v;
      for (std::size_t i = 0; i < s.c; ++i) {
        const auto src = in.plane(n, i);
        auto dst = din.plane(n, i);
        const double w = lin.w(o, i);
        double acc = 0.0;
        for (std::size_t k = 0; k < g.size(); ++k) {
          acc += g[k] * src[k];
          dst[k] += w * g[k];
        }
        dw[o * s.c + i] += acc;
      }
    }
  return din;
}

struct BlockCache {
  FeatureMap input;
  FeatureMap pre;  ///< input of the activation
  NormStats stats;
  FeatureMap xbar;
  CECache ce;
};

FeatureMap block_forward(Block& b, const FeatureMap& in, Mode mode, double bn_momentum,
                         bool track_running, BlockCache* cache) {
  const FeatureMap z = linear_forward(in, b.linear);
  for (double v : z.values())
    if (!std::isfinite(v)) throw NumericalError("non-finite pre-normalization activation", v);
  FeatureMap pre;
  if (b.ce) {
    CEOutput o = ce_forward(z, *b.ce, track_running);
    pre = std::move(o.p);
    if (cache) cache->ce = std::move(o.cache);
  } else {
    NormStats stats;
    if (mode == Mode::Train) {
      stats = compute_stats(z, b.spec.norm);
      if (track_running && b.spec.norm == NormKind::BN) {
        moving_average(b.running_mean, stats.mean, bn_momentum);
        moving_average(b.running_var, stats.var, bn_momentum);
        b.has_running = true;
      }
    } else if (b.spec.norm == NormKind::BN) {
      if (!b.has_running) throw StateError("eval forward before BN running statistics exist");
      stats = NormStats{NormKind::BN, b.running_mean, b.running_var, kNormEpsilon};
    } else {
      stats = compute_stats(z, b.spec.norm);
    }
    FeatureMap xbar = standardize(z, stats);
    pre = apply_affine(xbar, b.affine);
    if (cache) {
      cache->stats = std::move(stats);
      cache->xbar = std::move(xbar);
    }
  }
  FeatureMap y = rectify(pre, b.spec.act);
  if (cache) {
    cache->input = in;
    cache->pre = std::move(pre);
  }
  return y;
}

void zero_channels(FeatureMap& y, const std::vector<std::size_t>& channels) {
  for (std::size_t n = 0; n < y.batch(); ++n)
    for (std::size_t c : channels) {
      auto p = y.plane(n, c);
      std::fill(p.begin(), p.end(), 0.0);
    }
}

Matrix pool_and_head(const Model& m, const FeatureMap& y, Matrix* pooled_out) {
  const auto& s = y.shape();
  Matrix pooled(s.n, s.c);
  const double inv = 1.0 / static_cast<double>(s.plane());
  for (std::size_t n = 0; n < s.n; ++n)
    for (std::size_t c = 0; c < s.c; ++c) {
      double acc = 0.0;
      for (double v : y.plane(n, c)) acc += v;
      pooled(n, c) = acc * inv;
    }
  Matrix logits(s.n, m.classes);
  for (std::size_t n = 0; n < s.n; ++n)
    for (std::size_t k = 0; k < m.classes; ++k) {
      double acc = m.head_b[k];
      for (std::size_t c = 0; c < s.c; ++c) acc += m.head_w(k, c) * pooled(n, c);
      logits(n, k) = acc;
    }
  if (pooled_out) *pooled_out = std::move(pooled);
  return logits;
}

void check_input(const Model& m, const FeatureMap& x) {
  const auto& s = x.shape();
  if (s.c != m.input.c || s.h != m.input.h || s.w != m.input.w) {
    throw ShapeError("model input dims do not match");
  }
}

/// Mean cross-entropy; fills probabilities - onehot, divided by N, when dlogits is given.
LossResult softmax_xent(const Matrix& logits, std::span<const int> labels, Matrix* dlogits) {
  const std::size_t N = logits.rows();
  const std::size_t K = logits.cols();
  if (labels.size() != N) throw ShapeError("labels length != batch");
  LossResult r;
  if (dlogits) *dlogits = Matrix(N, K);
  for (std::size_t n = 0; n < N; ++n) {
    const auto row = logits.row(n);
    const double mx = *std::max_element(row.begin(), row.end());
    double z = 0.0;
    for (double v : row) z += std::exp(v - mx);
    const auto label = static_cast<std::size_t>(labels[n]);
    if (label >= K) throw ContractError("label out of range");
    r.loss += -(row[label] - mx - std::log(z));
    const auto best = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
    if (best == label) ++r.correct;
    if (dlogits) {
      for (std::size_t k = 0; k < K; ++k) {
        const double p = std::exp(row[k] - mx) / z;
        (*dlogits)(n, k) = (p - (k == label ? 1.0 : 0.0)) / static_cast<double>(N);
      }
    }
  }
  r.loss /= static_cast<double>(N);
  return r;
}

}  // namespace

ForwardResult forward(Model& model, const FeatureMap& x, const Ablation* ablation) {
  check_input(model, x);
  if (ablation && ablation->layer >= model.blocks.size()) {
    throw ConfigError("ablation layer out of range");
  }
  ForwardResult r;
  FeatureMap h = x;
  for (std::size_t i = 0; i < model.blocks.size(); ++i) {
    h = block_forward(model.blocks[i], h, model.mode, model.bn_momentum, false, nullptr);
    if (ablation && ablation->layer == i) zero_channels(h, ablation->channels);
    r.activations.push_back(h);
  }
  r.logits = pool_and_head(model, h, nullptr);
  return r;
}

double batch_loss(Model& model, const FeatureMap& x, std::span<const int> labels) {
  const Mode saved = model.mode;
  model.set_mode(Mode::Train);
  FeatureMap h = x;
  for (Block& b : model.blocks) h = block_forward(b, h, Mode::Train, model.bn_momentum, false, nullptr);
  const double loss = softmax_xent(pool_and_head(model, h, nullptr), labels, nullptr).loss;
  model.set_mode(saved);
  return loss;
}

LossResult loss_and_gradients(Model& model, const FeatureMap& x, std::span<const int> labels,
                              Gradients& grads, bool track_running) {
  check_input(model, x);
  if (model.mode != Mode::Train) throw StateError("loss_and_gradients requires train mode");
  std::vector<ParamRef> ps = params(model, grads);
  for (auto& slot : grads.slots) std::fill(slot.begin(), slot.end(), 0.0);

  std::vector<BlockCache> caches(model.blocks.size());
  FeatureMap h = x;
  for (std::size_t i = 0; i < model.blocks.size(); ++i)
    h = block_forward(model.blocks[i], h, Mode::Train, model.bn_momentum, track_running, &caches[i]);
  Matrix pooled;
  const Matrix logits = pool_and_head(model, h, &pooled);
  Matrix dlogits;
  const LossResult res = softmax_xent(logits, labels, &dlogits);

  // Walk the parameter list backwards in lock step with the layers.
  std::size_t slot = ps.size();
  auto next = [&]() -> std::span<double> { return ps[--slot].grad; };

  const std::size_t N = logits.rows();
  const std::size_t C = pooled.cols();
  auto dhead_b = next();
  auto dhead_w = next();
  Matrix dpooled(N, C);
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t k = 0; k < model.classes; ++k) {
      const double g = dlogits(n, k);
      dhead_b[k] += g;
      for (std::size_t c = 0; c < C; ++c) {
        dhead_w[k * C + c] += g * pooled(n, c);
        dpooled(n, c) += model.head_w(k, c) * g;
      }
    }
  FeatureMap dy(h.shape());
  const double inv = 1.0 / static_cast<double>(h.shape().plane());
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t c = 0; c < C; ++c) {
      auto p = dy.plane(n, c);
      std::fill(p.begin(), p.end(), dpooled(n, c) * inv);
    }

  for (std::size_t i = model.blocks.size(); i-- > 0;) {
    Block& b = model.blocks[i];
    BlockCache& k = caches[i];
    const FeatureMap dpre = rectify_backward(dy, k.pre, b.spec.act);
    FeatureMap dz;
    if (b.ce) {
      CEGrads g = ce_backward(dpre, k.ce, *b.ce);
      auto copy = [](std::span<double> dst, std::span<const double> src) {
        std::copy(src.begin(), src.end(), dst.begin());
      };
      copy(next(), g.dw2.values());
      copy(next(), g.dln_bias);
      copy(next(), g.dln_gain);
      copy(next(), g.dw1.values());
      next()[0] = g.dlambda_raw;
      copy(next(), g.dbeta);
      copy(next(), g.dgamma);
      dz = std::move(g.dx);
    } else {
      auto dbeta = next();
      auto dgamma = next();
      FeatureMap dxbar(dpre.shape());
      const auto& s = dpre.shape();
      for (std::size_t n = 0; n < s.n; ++n)
        for (std::size_t c = 0; c < s.c; ++c) {
          const auto g = dpre.plane(n, c);
          const auto xb = k.xbar.plane(n, c);
          auto dx = dxbar.plane(n, c);
          for (std::size_t q = 0; q < g.size(); ++q) {
            dgamma[c] += g[q] * xb[q];
            dbeta[c] += g[q];
            dx[q] = b.affine.gamma[c] * g[q];
          }
        }
      dz = standardize_backward(dxbar, k.xbar, k.stats);
    }
    auto db = next();
    auto dw = next();
    dy = linear_backward(dz, k.input, b.linear, dw, db);
  }
  return res;
}

void Optimizer::step(std::vector<ParamRef>& ps, double lr) {
  if (velocity.size() != ps.size()) {
    velocity.clear();
    for (const auto& p : ps) velocity.emplace_back(p.value.size(), 0.0);
  }
  for (std::size_t k = 0; k < ps.size(); ++k) {
    ParamRef& p = ps[k];
    if (p.frozen) continue;
    auto& v = velocity[k];
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      v[i] = momentum * v[i] + p.grad[i] + weight_decay * p.value[i];
      p.value[i] -= lr * v[i];
    }
  }
}

// ---- evaluation and training ----

double Evaluation::inhibited_ratio() const {
  if (reports.empty()) return 0.0;
  double acc = 0.0;
  for (const auto& r : reports) acc += r.ratio();
  return acc / static_cast<double>(reports.size());
}

double Evaluation::correlation() const {
  if (correlations.empty()) return 0.0;
  double acc = 0.0;
  for (double c : correlations) acc += c;
  return acc / static_cast<double>(correlations.size());
}

Evaluation evaluate(Model& model, const Dataset& data, std::size_t batch_size,
                    const Ablation* ablation) {
  if (data.size() == 0) throw ContractError("evaluate: empty dataset");
  const Mode saved = model.mode;
  model.set_mode(Mode::Eval);
  const std::size_t L = model.blocks.size();
  std::vector<std::vector<double>> acts(L);
  std::size_t correct = 0;
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < data.size(); start += batch_size) {
    idx.clear();
    for (std::size_t i = start; i < std::min(data.size(), start + batch_size); ++i) idx.push_back(i);
    const ForwardResult r = forward(model, data.batch(idx), ablation);
    const auto labels = data.labels(idx);
    correct += softmax_xent(r.logits, labels, nullptr).correct;
    for (std::size_t l = 0; l < L; ++l)
      acts[l].insert(acts[l].end(), r.activations[l].values().begin(), r.activations[l].values().end());
  }
  model.set_mode(saved);
  Evaluation ev;
  ev.accuracy = static_cast<double>(correct) / static_cast<double>(data.size());
  for (std::size_t l = 0; l < L; ++l) {
    const Shape4 s{data.size(), model.blocks[l].spec.channels, data.dims.h, data.dims.w};
    const FeatureMap y(s, std::move(acts[l]));
    ev.reports.push_back(inhibited_ratio(std::span<const FeatureMap>(&y, 1)));
    ev.correlations.push_back(correlation_summary(y));
  }
  return ev;
}

std::string TrainLog::csv() const {
  CsvWriter w({"epoch", "lr", "train_loss", "train_acc", "test_acc", "inhibited_ratio", "correlation"});
  for (const auto& e : epochs)
    w.row({std::to_string(e.epoch), format_number(e.lr), format_number(e.train_loss),
           format_number(e.train_acc), format_number(e.test_acc), format_number(e.inhibited_ratio),
           format_number(e.correlation)});
  return w.str();
}

namespace {

std::string parameter_dump(const Model& m) {
  std::ostringstream os;
  for (std::size_t i = 0; i < m.blocks.size(); ++i) {
    const Block& b = m.blocks[i];
    const auto& g = b.ce ? b.ce->gamma : b.affine.gamma;
    os << " block" << i << ": |W|=" << frobenius_norm(b.linear.w) << " |gamma|=" << norm2(g);
    if (b.ce) os << " lambda=" << b.ce->lambda();
    os << ';';
  }
  return os.str();
}

}  // namespace

TrainLog train(Model& model, const TaskData& data, const TrainConfig& config) {
  config.validate();
  const Dataset& tr = data.train;
  if (tr.size() < config.batch_size) throw ConfigError("train: fewer samples than one batch");
  model.set_mode(Mode::Train);
  Gradients grads;
  Optimizer opt{config.momentum, config.weight_decay, {}};
  const Rng order(Rng::mix(config.seed) ^ 0x5EEDULL);
  TrainLog log;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const double lr = config.lr.at(epoch);
    Rng rng = order.derive(epoch);
    const auto perm = rng.sample_without_replacement(tr.size(), tr.size());
    const std::size_t steps = tr.size() / config.batch_size;
    double loss = 0.0;
    std::size_t correct = 0;
    for (std::size_t s = 0; s < steps; ++s) {
      const std::span<const std::size_t> idx(perm.data() + s * config.batch_size, config.batch_size);
      const auto labels = tr.labels(idx);
      LossResult r;
      try {
        r = loss_and_gradients(model, tr.batch(idx), labels, grads);
      } catch (const NumericalError& e) {
        throw NumericalError(std::string(e.what()) + " at epoch " + std::to_string(epoch) +
                                 " step " + std::to_string(s) + ";" + parameter_dump(model),
                             e.residual());
      }
      if (!std::isfinite(r.loss)) {
        throw NumericalError("training diverged at epoch " + std::to_string(epoch) + " step " +
                                 std::to_string(s) + " lr " + format_number(lr) + ";" +
                                 parameter_dump(model),
                             r.loss);
      }
      auto ps = params(model, grads);
      opt.step(ps, lr);
      for (const auto& p : ps)
        for (double v : p.value)
          if (!std::isfinite(v)) {
            throw NumericalError("parameter " + p.name + " became non-finite at epoch " +
                                     std::to_string(epoch) + " step " + std::to_string(s) + " lr " +
                                     format_number(lr) + ";" + parameter_dump(model),
                                 v);
          }
      loss += r.loss;
      correct += r.correct;
    }
    EpochLog e;
    e.epoch = epoch + 1;
    e.lr = lr;
    e.train_loss = loss / static_cast<double>(steps);
    e.train_acc = static_cast<double>(correct) / static_cast<double>(steps * config.batch_size);
    const bool last = epoch + 1 == config.epochs;
    if (last || (epoch + 1) % config.eval_every == 0) {
      const Evaluation ev = evaluate(model, data.test);
      e.test_acc = ev.accuracy;
      e.inhibited_ratio = ev.inhibited_ratio();
      e.correlation = ev.correlation();
      if (last) log.final_reports = ev.reports;
    } else if (!log.epochs.empty()) {
      e.test_acc = log.epochs.back().test_acc;
      e.inhibited_ratio = log.epochs.back().inhibited_ratio;
      e.correlation = log.epochs.back().correlation;
    }
    log.epochs.push_back(e);
  }
  model.set_mode(Mode::Eval);
  return log;
}

AblationEval make_ablation_eval(Model& model, const Dataset& data, std::size_t layer) {
  if (layer >= model.blocks.size()) {
    throw ConfigError("ablation layer " + std::to_string(layer) + " out of range (model has " +
                      std::to_string(model.blocks.size()) + " blocks)");
  }
  return [&model, &data, layer](const std::vector<std::size_t>& zeroed) {
    const Ablation a{layer, zeroed};
    return evaluate(model, data, 256, &a).accuracy;
  };
}

// ---- checkpoints ----

namespace {

using nlohmann::ordered_json;

ordered_json block_json(const Block& b, std::size_t index) {
  ordered_json j;
  j["channels"] = b.spec.channels;
  j["norm"] = to_string(b.spec.norm);
  j["ce"] = to_string(b.spec.ce);
  j["act"] = to_string(b.spec.act.kind);
  j["slope"] = b.spec.act.slope;
  j["alpha"] = b.spec.act.alpha;
  j["reduction"] = b.spec.reduction;
  j["newton_iterations"] = b.spec.newton_iterations;
  j["group_size"] = b.spec.group_size;
  j["in_channels"] = b.linear.w.cols();
  j["linear_w"] = b.linear.w.values();
  j["linear_b"] = b.linear.b;
  if (b.ce) {
    j["ce_checkpoint"] = "block" + std::to_string(index) + ".ce";
  } else {
    j["gamma"] = b.affine.gamma;
    j["beta"] = b.affine.beta;
    j["running_mean"] = b.running_mean;
    j["running_var"] = b.running_var;
    j["has_running"] = b.has_running;
  }
  return j;
}

}  // namespace

void save_model(const Model& model, const std::filesystem::path& dir) {
  ordered_json j;
  j["input"] = {model.input.c, model.input.h, model.input.w};
  j["classes"] = model.classes;
  j["bn_momentum"] = model.bn_momentum;
  j["blocks"] = ordered_json::array();
  for (std::size_t i = 0; i < model.blocks.size(); ++i) {
    j["blocks"].push_back(block_json(model.blocks[i], i));
    if (model.blocks[i].ce) {
      atomic_write(dir / ("block" + std::to_string(i) + ".ce"), to_binary(*model.blocks[i].ce));
    }
  }
  j["head_w"] = model.head_w.values();
  j["head_b"] = model.head_b;
  atomic_write(dir / "manifest.json", j.dump(1) + "\n");
}

Model load_model(const std::filesystem::path& dir) {
  try {
    const auto j = nlohmann::json::parse(read_file(dir / "manifest.json"));
    Model m;
    const auto in = j.at("input").get<std::vector<std::size_t>>();
    if (in.size() != 3) throw ConfigError("manifest: input must list (C, H, W)");
    m.input = {1, in[0], in[1], in[2]};
    m.classes = j.at("classes").get<std::size_t>();
    m.bn_momentum = j.at("bn_momentum").get<double>();
    for (const auto& bj : j.at("blocks")) {
      Block b;
      b.spec.channels = bj.at("channels").get<std::size_t>();
      b.spec.norm = parse_norm_kind(bj.at("norm").get<std::string>());
      b.spec.ce = parse_ce_variant(bj.at("ce").get<std::string>());
      b.spec.act.kind = parse_act_kind(bj.at("act").get<std::string>());
      b.spec.act.slope = bj.at("slope").get<double>();
      b.spec.act.alpha = bj.at("alpha").get<double>();
      b.spec.reduction = bj.at("reduction").get<std::size_t>();
      b.spec.newton_iterations = bj.at("newton_iterations").get<int>();
      b.spec.group_size = bj.at("group_size").get<std::size_t>();
      const auto in_c = bj.at("in_channels").get<std::size_t>();
      b.linear.w = Matrix(b.spec.channels, in_c, bj.at("linear_w").get<std::vector<double>>());
      b.linear.b = bj.at("linear_b").get<Vector>();
      if (bj.contains("ce_checkpoint")) {
        b.ce = from_binary(read_file(dir / bj.at("ce_checkpoint").get<std::string>()));
      } else {
        b.affine.gamma = bj.at("gamma").get<Vector>();
        b.affine.beta = bj.at("beta").get<Vector>();
        b.running_mean = bj.at("running_mean").get<Vector>();
        b.running_var = bj.at("running_var").get<Vector>();
        b.has_running = bj.at("has_running").get<bool>();
      }
      m.blocks.push_back(std::move(b));
    }
    const std::size_t last = m.blocks.empty() ? m.input.c : m.blocks.back().spec.channels;
    m.head_w = Matrix(m.classes, last, j.at("head_w").get<std::vector<double>>());
    m.head_b = j.at("head_b").get<Vector>();
    m.set_mode(Mode::Eval);
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("manifest: ") + e.what());
  }
}

}  // namespace chaneq
