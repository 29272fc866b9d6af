#include "cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "chaneq/ce_block.hpp"
#include "chaneq/decorrelate.hpp"
#include "chaneq/diagnostics.hpp"
#include "chaneq/eigen.hpp"
#include "chaneq/error.hpp"
#include "chaneq/io.hpp"
#include "chaneq/theory.hpp"
#include "chaneq/train.hpp"

namespace chaneq::cli {

namespace {

namespace fs = std::filesystem;

std::string num(double v) { return format_number(v); }

std::string config_help() {
  std::string s = "Config keys (flat `key = value`, `#` comments, unknown keys rejected):\n ";
  std::size_t col = 1;
  for (const auto& k : ExperimentConfig::keys()) {
    if (col + k.size() + 1 > 78) {
      s += "\n ";
      col = 1;
    }
    s += " " + k;
    col += k.size() + 1;
  }
  return s + "\n";
}

// ---- random instances ----

Matrix gaussian_matrix(std::size_t r, std::size_t c, Rng& rng) {
  Matrix m(r, c);
  for (double& v : m.values()) v = rng.normal();
  return m;
}

/// Trace-one SPD matrix with eigenvalues >= min_eig and a Haar-like eigenbasis.
Matrix random_spd(std::size_t n, double min_eig, Rng& rng) {
  Matrix q = gaussian_matrix(n, n, rng);
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t k = 0; k < j; ++k) {
      double d = 0.0;
      for (std::size_t i = 0; i < n; ++i) d += q(i, j) * q(i, k);
      for (std::size_t i = 0; i < n; ++i) q(i, j) -= d * q(i, k);
    }
    double nrm = 0.0;
    for (std::size_t i = 0; i < n; ++i) nrm += q(i, j) * q(i, j);
    nrm = std::sqrt(nrm);
    for (std::size_t i = 0; i < n; ++i) q(i, j) /= nrm;
  }
  Vector lam(n);
  double total = 0.0;
  for (double& l : lam) total += (l = rng.uniform());
  const double spare = 1.0 - min_eig * static_cast<double>(n);
  for (double& l : lam) l = min_eig + spare * l / total;
  Matrix s(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < n; ++k) acc += q(i, k) * lam[k] * q(j, k);
      s(i, j) = acc;
    }
  return s;
}

/// Correlation matrix of a Gaussian C x (C + 2) sample.
Matrix random_correlation(std::size_t c, Rng& rng) {
  const Matrix a = gaussian_matrix(c, c + 2, rng);
  Matrix s = matmul(a, transpose(a));
  Matrix rho(c, c);
  for (std::size_t i = 0; i < c; ++i)
    for (std::size_t j = 0; j < c; ++j) rho(i, j) = i == j ? 1.0 : s(i, j) / std::sqrt(s(i, i) * s(j, j));
  return rho;
}

FeatureMap gaussian_map(Shape4 s, Rng& rng) {
  std::vector<double> v(s.count());
  for (double& x : v) x = rng.normal();
  return FeatureMap(s, std::move(v));
}

FeatureMap apply_linear(const LinearMap& lin, const FeatureMap& u) {
  const auto& s = u.shape();
  FeatureMap out({s.n, lin.w.rows(), s.h, s.w});
  for (std::size_t n = 0; n < s.n; ++n)
    for (std::size_t o = 0; o < lin.w.rows(); ++o) {
      auto dst = out.plane(n, o);
      std::fill(dst.begin(), dst.end(), lin.b[o]);
      for (std::size_t i = 0; i < s.c; ++i) {
        const auto src = u.plane(n, i);
        for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += lin.w(o, i) * src[k];
      }
    }
  return out;
}

// ---- subcommands ----

struct Common {
  std::uint64_t seed = 1;
  std::string out;
  bool has_out() const { return !out.empty(); }
  fs::path path(const std::string& name) const { return fs::path(out) / name; }
};

struct NewtonArgs {
  std::size_t dim = 16;
  int iters = 3;
  std::size_t count = 10;
  double min_eig = 0.01;
};

int run_newton(const Common& c, const NewtonArgs& a, std::ostream& out, std::ostream& err) {
  if (a.dim == 0 || a.count == 0 || a.iters < 1) throw ConfigError("newton-bench: dim, count and iters must be >= 1");
  if (!(a.min_eig > 0.0) || a.min_eig * static_cast<double>(a.dim) >= 1.0) {
    throw ConfigError("newton-bench: need 0 < min-eig < 1/dim");
  }
  Rng rng(c.seed);
  NewtonConfig cfg;
  cfg.iterations = a.iters;
  cfg.diag_eps = 0.0;
  CsvWriter csv({"index", "dim", "iters", "residual", "oracle_diff"});
  double worst_res = 0.0;
  double worst_diff = 0.0;
  double seconds = 0.0;
  for (std::size_t i = 0; i < a.count; ++i) {
    const Matrix s = random_spd(a.dim, a.min_eig, rng);
    const auto t0 = std::chrono::steady_clock::now();
    const Matrix y = newton_inv_sqrt(s, cfg);
    seconds += std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const double res = frobenius_norm(matmul(matmul(y, s), y) - Matrix::identity(a.dim));
    const double diff = max_abs_diff(y, inv_sqrt_eigen(s));
    worst_res = std::max(worst_res, res);
    worst_diff = std::max(worst_diff, diff);
    csv.row({std::to_string(i), std::to_string(a.dim), std::to_string(a.iters), num(res), num(diff)});
  }
  out << "dim " << a.dim << " iters " << a.iters << " matrices " << a.count << "\n"
      << "max residual |Y S Y - I|_F = " << num(worst_res) << "\n"
      << "max |Y - S^-1/2 (eigen)| = " << num(worst_diff) << "\n";
  err << "wall time " << seconds * 1e3 / static_cast<double>(a.count) << " ms per matrix\n";
  if (c.has_out()) atomic_write(c.path("newton_bench.csv"), csv.str());
  return 0;
}

struct MomentsArgs {
  double gamma = 1.0;
  double beta = 0.0;
  std::size_t samples = 0;
  bool grid = false;
};

int run_moments(const Common& c, const MomentsArgs& a, std::ostream& out) {
  std::vector<RectGaussSpec> points;
  if (a.grid) {
    for (double g : {1e-6, 0.1, 0.5, 1.0, 2.0, 5.0})
      for (double b : {-2.0, -0.5, 0.0, 1.0}) points.push_back({g, b});
  } else {
    points.push_back({a.gamma, a.beta});
  }
  Rng rng(c.seed);
  CsvWriter csv({"gamma", "beta", "mean", "second", "mc_mean", "mc_se_mean", "mc_second", "mc_se_second"});
  for (const auto& p : points) {
    const Moments m = rect_gauss_moments(p);
    std::vector<std::string> row{num(p.gamma), num(p.beta), num(m.mean), num(m.second)};
    if (a.samples > 0) {
      const MonteCarloMoments mc = rect_gauss_monte_carlo(p, a.samples, rng);
      row.insert(row.end(), {num(mc.mean), num(mc.se_mean), num(mc.second), num(mc.se_second)});
    } else {
      row.insert(row.end(), 4, "");
    }
    csv.row(row);
    if (!a.grid) {
      out << "E[y] = " << num(m.mean) << "\nE[y^2] = " << num(m.second) << "\n";
      if (m.limit) out << "(gamma = 0: limit values)\n";
      if (a.samples > 0) out << "monte carlo: " << row[4] << " +- " << row[5] << ", " << row[6] << " +- " << row[7] << "\n";
    }
  }
  if (a.grid) out << csv.str();
  if (c.has_out()) atomic_write(c.path("moments.csv"), csv.str());
  return 0;
}

struct NashArgs {
  std::string game;
  std::size_t channels = 3;
  std::size_t height = 2;
  std::size_t width = 2;
  bool proxy = false;
  std::vector<double> delta;
};

int run_nash(const Common& c, const NashArgs& a, std::ostream& out) {
  GameSpec game;
  if (!a.game.empty()) {
    game = game_from_json(read_file(a.game));
  } else {
    Rng rng(c.seed);
    game = random_interior_game(a.channels, a.height, a.width, rng);
  }
  const NashSolution sol = solve_nash(game);
  const double kkt = kkt_residual(game, sol);
  const ClosedForm cf = nash_closed_form(game, sol.v0);
  out << "channels " << game.channels() << " neurons " << game.neurons() << " rounds " << sol.rounds << "\n"
      << "kkt residual = " << num(kkt) << "\n";
  if (cf.not_applicable) {
    out << "closed form: not applicable (inactive neurons)\n";
  } else {
    out << "closed form max diff = " << num(max_abs_diff(cf.p, sol.p)) << "\n";
  }
  for (std::size_t ch = 0; ch < game.channels(); ++ch)
    out << "channel " << ch << ": v0 = " << num(sol.v0[ch]) << " payoff = " << num(payoff(game, sol.p, ch)) << "\n";
  CsvWriter csv({"channel", "neuron", "power"});
  for (std::size_t ch = 0; ch < game.channels(); ++ch)
    for (std::size_t l = 0; l < game.neurons(); ++l)
      csv.row({std::to_string(ch), std::to_string(l), num(sol.p(ch, l))});
  std::string proxy_text;
  if (a.proxy) {
    const ProxyReport rep = ce_proxy_map(game, sol.v0, a.delta);
    for (const auto& line : rep.lines) proxy_text += line + "\n";
    out << proxy_text;
  }
  if (c.has_out()) {
    atomic_write(c.path("game.json"), to_json(game) + "\n");
    atomic_write(c.path("nash.json"), to_json(sol) + "\n");
    atomic_write(c.path("nash.csv"), csv.str());
    if (a.proxy) atomic_write(c.path("proxy.txt"), proxy_text);
  }
  return 0;
}

struct PropArgs {
  std::size_t channels = 8;
  std::size_t count = 100;
};

int run_prop(const Common& c, const PropArgs& a, std::ostream& out) {
  if (a.channels < 2 || a.count == 0) throw ConfigError("prop-check: channels >= 2 and count >= 1");
  Rng rng(c.seed);
  CsvWriter csv({"index", "check", "holds", "min_margin"});
  std::size_t gamma_ok = 0;
  std::size_t norm_ok = 0;
  for (std::size_t i = 0; i < a.count; ++i) {
    const Matrix rho = random_correlation(a.channels, rng);
    Vector gamma(a.channels);
    for (double& g : gamma) g = rng.uniform(0.1, 2.0);
    const GammaCheck gc = prop1_gamma_check(rho, gamma);
    double margin = INFINITY;
    for (std::size_t k = 0; k < gamma.size(); ++k) margin = std::min(margin, gc.gamma_hat[k] - gamma[k]);
    gamma_ok += gc.all_strict();
    csv.row({std::to_string(i), "gamma", gc.all_strict() ? "1" : "0", num(margin)});

    const double inv = 1.0 / dot(gamma, gamma);
    Matrix sigma_n(a.channels, a.channels);
    for (std::size_t p = 0; p < a.channels; ++p)
      for (std::size_t q = 0; q < a.channels; ++q) sigma_n(p, q) = gamma[p] * gamma[q] * inv * rho(p, q);
    Vector x(a.channels);
    for (double& v : x) v = rng.normal();
    const NormCheck nc = prop1_norm_check(sigma_n, x);
    norm_ok += nc.holds;
    csv.row({std::to_string(i), "norm", nc.holds ? "1" : "0", num(nc.norm_out - nc.norm_in)});
  }
  out << "gamma amplification strict: " << gamma_ok << "/" << a.count << "\n"
      << "norm amplification: " << norm_ok << "/" << a.count << "\n";
  if (c.has_out()) atomic_write(c.path("prop_check.csv"), csv.str());
  return 0;
}

struct FuseArgs {
  std::size_t channels = 8;
  std::size_t inputs = 6;
  std::size_t count = 50;
};

int run_fuse(const Common& c, const FuseArgs& a, std::ostream& out) {
  if (a.channels == 0 || a.inputs == 0 || a.count == 0) throw ConfigError("fuse-check: sizes must be >= 1");
  Rng rng(c.seed);
  CsvWriter csv({"index", "max_abs_diff"});
  double worst = 0.0;
  for (std::size_t i = 0; i < a.count; ++i) {
    CEOptions opts;
    opts.reduction = 2;
    CEState s = CEState::create(a.channels, rng, opts);
    for (double& g : s.gamma) g = rng.uniform(0.2, 2.0);
    for (double& b : s.beta) b = rng.normal(0.0, 0.5);
    s.lambda_raw = rng.normal();
    LinearMap lin{gaussian_matrix(a.channels, a.inputs, rng), Vector(a.channels)};
    for (double& b : lin.b) b = rng.normal();
    for (int step = 0; step < 4; ++step) ce_forward(apply_linear(lin, gaussian_map({16, a.inputs, 2, 2}, rng)), s);
    s.mode = Mode::Eval;
    const FeatureMap u = gaussian_map({4, a.inputs, 3, 3}, rng);
    const FeatureMap z = apply_linear(lin, u);
    FeatureMap bd = ce_forward(z, s).p;
    const FeatureMap ir = ir_contribution(z, s);
    for (std::size_t k = 0; k < bd.size(); ++k) bd.values()[k] -= ir.values()[k];
    const FeatureMap fused = apply_linear(fuse_bd(s, lin), u);
    const double d = max_abs_diff(bd.values(), fused.values());
    worst = std::max(worst, d);
    csv.row({std::to_string(i), num(d)});
  }
  out << "instances " << a.count << " max |fused - unfused| = " << num(worst) << "\n";
  if (c.has_out()) atomic_write(c.path("fuse_check.csv"), csv.str());
  return 0;
}

struct ExperimentArgs {
  std::string config;
  std::vector<std::string> set;
  std::string variant = "bn+ce";
  std::string model;
  std::string experiment;
  std::size_t workers = 0;
  int layer = -1;
};

ExperimentConfig experiment_config(const Common& c, const ExperimentArgs& a, bool seed_given) {
  ExperimentConfig cfg;
  if (!a.config.empty()) cfg.apply(parse_key_values(read_file(a.config), ExperimentConfig::keys()));
  std::string extra;
  for (const auto& kv : a.set) extra += kv + "\n";
  cfg.apply(parse_key_values(extra, ExperimentConfig::keys()));
  if (seed_given) cfg.train.seed = c.seed;
  if (a.workers > 0) cfg.workers = a.workers;
  if (a.layer >= 0) cfg.ablation_layer = static_cast<std::size_t>(a.layer);
  return cfg;
}

Model trained_model(const ExperimentConfig& cfg, CEVariant v, const TaskData& data, TrainLog* log) {
  Rng rng = Rng(cfg.train.seed).derive(0xB10C);
  Model m = build_model(cfg.blocks(v), {1, cfg.task.dims.c, cfg.task.dims.h, cfg.task.dims.w},
                        cfg.task.classes, rng);
  TrainLog l = train(m, data, cfg.train);
  if (log) *log = std::move(l);
  return m;
}

std::string channels_csv(const std::vector<ChannelReport>& reports) {
  CsvWriter csv({"block", "channel", "magnitude", "inhibited"});
  for (std::size_t b = 0; b < reports.size(); ++b)
    for (std::size_t ch = 0; ch < reports[b].magnitude.size(); ++ch)
      csv.row({std::to_string(b), std::to_string(ch), num(reports[b].magnitude[ch]),
               reports[b].inhibited[ch] ? "1" : "0"});
  return csv.str();
}

int run_train(const Common& c, const ExperimentArgs& a, bool seed_given, std::ostream& out) {
  const ExperimentConfig cfg = experiment_config(c, a, seed_given);
  const CEVariant v = parse_ce_variant(a.variant);
  const TaskData data = make_task(cfg.task);
  TrainLog log;
  Model m = trained_model(cfg, v, data, &log);
  const EpochLog& last = log.epochs.back();
  out << "variant " << to_string(v) << " blocks " << m.blocks.size() << " parameters " << m.parameter_count() << "\n"
      << "final train_acc " << num(last.train_acc) << " test_acc " << num(last.test_acc)
      << " inhibited_ratio " << num(last.inhibited_ratio) << " correlation " << num(last.correlation) << "\n";
  if (c.has_out()) {
    atomic_write(c.path("train_log.csv"), log.csv());
    atomic_write(c.path("channels.csv"), channels_csv(log.final_reports));
    save_model(m, c.path("model"));
  }
  return 0;
}

int run_ablate(const Common& c, const ExperimentArgs& a, bool seed_given, std::ostream& out) {
  const ExperimentConfig cfg = experiment_config(c, a, seed_given);
  const TaskData data = make_task(cfg.task);
  Model m;
  std::string label;
  if (!a.model.empty()) {
    m = load_model(a.model);
    if (m.input.c != cfg.task.dims.c || m.input.h != cfg.task.dims.h || m.input.w != cfg.task.dims.w ||
        m.classes != cfg.task.classes) {
      throw ConfigError("ablate: model does not match the task dims");
    }
    label = a.model;
  } else {
    const CEVariant v = parse_ce_variant(a.variant);
    m = trained_model(cfg, v, data, nullptr);
    label = to_string(v);
  }
  const AblationEval eval = make_ablation_eval(m, data.test, cfg.ablation_layer);
  const std::size_t width = m.blocks[cfg.ablation_layer].spec.channels;
  const AblationCurve curve = cumulative_ablation(eval, width, cfg.ratios, cfg.trials, cfg.train.seed);
  const std::string csv = ablation_csv(curve);
  out << csv;
  if (c.has_out()) {
    atomic_write(c.path("ablation.csv"), csv);
    Series s{label, curve.ratios, curve.accuracy_mean};
    atomic_write(c.path("ablation.svg"), svg_line_chart("cumulative ablation", "ratio", "accuracy", {s}));
  }
  return 0;
}

int run_sweep(const Common& c, const ExperimentArgs& a, bool seed_given, std::ostream& out) {
  const ExperimentConfig cfg = experiment_config(c, a, seed_given);
  const ExperimentResult r = run_experiment(a.experiment, cfg);
  if (c.has_out()) {
    atomic_write(c.path(a.experiment + ".csv"), r.csv);
    atomic_write(c.path(a.experiment + ".svg"), r.svg);
    out << "wrote " << (fs::path(c.out) / (a.experiment + ".csv")).string() << "\n";
  } else {
    out << r.csv;
  }
  return 0;
}

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("--seed", c.seed, "random seed");
  sub->add_option("--out", c.out, "output directory (created if missing)");
}

}  // namespace

int dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Channel Equilibrium oracles, diagnostics and experiments", "chaneq"};
  app.require_subcommand(1);
  app.footer("Exit codes: 0 success, 1 contract/config error, 2 numerical divergence.");

  Common common;
  NewtonArgs newton;
  MomentsArgs moments;
  NashArgs nash;
  PropArgs prop;
  FuseArgs fuse;
  ExperimentArgs exp;

  auto* nb = app.add_subcommand("newton-bench", "Newton-Schulz inverse square root vs the eigen oracle");
  add_common(nb, common);
  nb->add_option("--dim", newton.dim, "matrix size")->capture_default_str();
  nb->add_option("--iters", newton.iters, "Newton iterations T")->capture_default_str();
  nb->add_option("--count", newton.count, "random trace-one SPD matrices")->capture_default_str();
  nb->add_option("--min-eig", newton.min_eig, "smallest eigenvalue")->capture_default_str();
  nb->footer("newton_bench.csv: index,dim,iters,residual,oracle_diff\nWall time goes to stderr.");

  auto* mo = app.add_subcommand("moments", "Mean and second moment of max(0, gamma z + beta)");
  add_common(mo, common);
  mo->add_option("--gamma", moments.gamma)->capture_default_str();
  mo->add_option("--beta", moments.beta)->capture_default_str();
  mo->add_option("--samples", moments.samples, "Monte Carlo samples (0 skips)")->capture_default_str();
  mo->add_flag("--grid", moments.grid, "6 x 4 grid gamma {1e-6,.1,.5,1,2,5} x beta {-2,-.5,0,1}");
  mo->footer("moments.csv: gamma,beta,mean,second,mc_mean,mc_se_mean,mc_second,mc_se_second");

  auto* na = app.add_subcommand("nash", "Water-filling Nash equilibrium of the interference game");
  add_common(na, common);
  na->add_option("--game", nash.game, "game JSON (keys C,H,W,G,sigma,h,P); random interior game otherwise");
  na->add_option("--channels", nash.channels)->capture_default_str();
  na->add_option("--height", nash.height)->capture_default_str();
  na->add_option("--width", nash.width)->capture_default_str();
  na->add_flag("--proxy", nash.proxy, "print the linear proxy and its CE identification");
  na->add_option("--delta", nash.delta, "proxy slack per channel (default 0)")->delimiter(',');
  na->footer("game.json, nash.json (p, v0, rounds), nash.csv: channel,neuron,power, proxy.txt");

  auto* pc = app.add_subcommand("prop-check", "Magnitude amplification of the decorrelation operator");
  add_common(pc, common);
  pc->add_option("--channels", prop.channels)->capture_default_str();
  pc->add_option("--count", prop.count)->capture_default_str();
  pc->footer("prop_check.csv: index,check,holds,min_margin");

  auto* fc = app.add_subcommand("fuse-check", "Eval-mode fused BD path vs the unfused layer");
  add_common(fc, common);
  fc->add_option("--channels", fuse.channels)->capture_default_str();
  fc->add_option("--inputs", fuse.inputs, "input channels of the preceding linear map")->capture_default_str();
  fc->add_option("--count", fuse.count)->capture_default_str();
  fc->footer("fuse_check.csv: index,max_abs_diff");

  const std::string keys = config_help();
  auto add_experiment = [&](CLI::App* sub) {
    add_common(sub, common);
    sub->add_option("--config", exp.config, "key = value file")->check(CLI::ExistingFile);
    sub->add_option("--set", exp.set, "extra `key=value` entry, repeatable");
  };

  auto* tr = app.add_subcommand("train", "Train one model on the synthetic task");
  add_experiment(tr);
  tr->add_option("--variant", exp.variant, "bn, bn+bd, bn+ir or bn+ce")->capture_default_str();
  tr->footer(keys +
             "train_log.csv: epoch,lr,train_loss,train_acc,test_acc,inhibited_ratio,correlation\n"
             "channels.csv: block,channel,magnitude,inhibited\nmodel/: manifest.json and block<i>.ce");

  auto* ab = app.add_subcommand("ablate", "Cumulative channel ablation curve");
  add_experiment(ab);
  ab->add_option("--variant", exp.variant, "trained when --model is absent")->capture_default_str();
  ab->add_option("--model", exp.model, "directory written by `train --out`");
  ab->add_option("--layer", exp.layer, "block index (overrides ablation.layer)");
  ab->footer(keys + "ablation.csv: ratio,accuracy_mean,accuracy_std,trials,seed; ablation.svg");

  auto* sw = app.add_subcommand("sweep", "Run a named experiment grid");
  add_experiment(sw);
  sw->add_option("experiment", exp.experiment, "weight-decay, corrupted-label or ablation")->required();
  sw->add_option("--workers", exp.workers, "parallel grid points (overrides `workers`)");
  sw->footer(keys + "<experiment>.csv: experiment,variant,param,value,seed,metric,metric_value\n<experiment>.svg");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 1;
  }

  try {
    CLI::App* sub = app.get_subcommands().front();
    const bool seed_given = sub->count("--seed") > 0;
    if (common.has_out()) fs::create_directories(common.out);
    if (sub == nb) return run_newton(common, newton, out, err);
    if (sub == mo) return run_moments(common, moments, out);
    if (sub == na) return run_nash(common, nash, out);
    if (sub == pc) return run_prop(common, prop, out);
    if (sub == fc) return run_fuse(common, fuse, out);
    if (sub == tr) return run_train(common, exp, seed_given, out);
    if (sub == ab) return run_ablate(common, exp, seed_given, out);
    if (sub == sw) return run_sweep(common, exp, seed_given, out);
    return 1;
  } catch (const NumericalError& e) {
    err << "numerical error: " << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace chaneq::cli
