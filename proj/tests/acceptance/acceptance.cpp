// Acceptance suite. `chaneq_acceptance N` runs criterion N; no argument runs all.
// Prints one PASS/FAIL line per criterion and exits non-zero on any FAIL.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "../gradcheck.hpp"
#include "chaneq/decorrelate.hpp"
#include "chaneq/eigen.hpp"
#include "chaneq/error.hpp"
#include "chaneq/io.hpp"
#include "chaneq/theory.hpp"
#include "chaneq/train.hpp"
#include "cli.hpp"

using namespace testing;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = true;
  std::vector<std::string> notes;

  void require(bool ok, const std::string& what) {
    notes.push_back(std::string(ok ? "ok " : "FAILED ") + what);
    pass = pass && ok;
  }
};

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

double yay_residual(const Matrix& y, const Matrix& s) {
  Matrix r = matmul(matmul(y, s), y);
  for (std::size_t i = 0; i < r.rows(); ++i) r(i, i) -= 1.0;
  return frobenius_norm(r);
}

Outcome newton_schulz() {
  Outcome o;
  Rng rng(101);
  double res10 = 0.0, oracle = 0.0, res3 = 0.0, comm = 0.0, sym = 0.0;
  for (std::size_t dim : {4, 8, 16, 32}) {
    double dim_res3 = 0.0;
    for (int i = 0; i < 50; ++i) {
      const Matrix s = random_trace_normalized_spd(dim, 0.01, rng);
      NewtonConfig cfg;
      cfg.diag_eps = 0.0;
      cfg.iterations = 10;
      const Matrix y10 = newton_inv_sqrt(s, cfg);
      res10 = std::max(res10, yay_residual(y10, s));
      oracle = std::max(oracle, max_abs_diff(y10, inv_sqrt_eigen(s)));
      cfg.iterations = 3;
      const Matrix y3 = newton_inv_sqrt(s, cfg);
      dim_res3 = std::max(dim_res3, yay_residual(y3, s));
      comm = std::max(comm, max_abs_diff(matmul(y3, s), matmul(s, y3)));
      sym = std::max(sym, max_abs_diff(y3, transpose(y3)));
    }
    o.notes.push_back("C=" + std::to_string(dim) + " T=3 max residual " + fmt(dim_res3));
    res3 = std::max(res3, dim_res3);
  }
  o.require(res10 < 1e-6, "T=10 residual " + fmt(res10) + " < 1e-6");
  o.require(oracle < 1e-5, "T=10 vs eigen oracle " + fmt(oracle) + " < 1e-5");
  o.require(res3 < 1e-1, "T=3 residual " + fmt(res3) + " < 1e-1");
  o.require(comm < 1e-12, "T=3 commutes with S " + fmt(comm));
  o.require(sym < 1e-12, "T=3 symmetric " + fmt(sym));
  return o;
}

Outcome moments() {
  Outcome o;
  Rng rng(202);
  double worst = 0.0;
  for (double g : {2.0, 1.0, 0.1, -0.1, -1.0, -2.0})
    for (double b : {-2.0, -1.0, 0.0, 1.0}) {
      const Moments m = rect_gauss_moments({g, b});
      const MonteCarloMoments mc = rect_gauss_monte_carlo({g, b}, 10'000'000, rng);
      const double zm = std::abs(mc.mean - m.mean) / (4.0 * mc.se_mean + 1e-12);
      const double zs = std::abs(mc.second - m.second) / (4.0 * mc.se_second + 1e-12);
      worst = std::max({worst, zm, zs});
    }
  o.require(worst <= 1.0, "24 grid points: worst |MC - closed| / (4 SE + 1e-12) = " + fmt(worst) + " <= 1");
  for (double b : {-2.0, -1.0, 0.0}) {
    double pm = INFINITY, ps = INFINITY;
    bool monotone = true;
    for (int k = 1; k <= 6; ++k) {
      const Moments m = rect_gauss_moments({std::pow(10.0, -k), b});
      monotone = monotone && (m.mean < pm || m.mean == 0.0) && (m.second < ps || m.second == 0.0);
      pm = m.mean;
      ps = m.second;
    }
    o.require(monotone && pm < 1e-10 && ps < 1e-10,
              "beta=" + fmt(b) + " at gamma=1e-6: E[y]=" + fmt(pm) + " E[y^2]=" + fmt(ps) + " (< 1e-10)");
  }
  return o;
}

Matrix random_correlation(std::size_t c, Rng& rng) {
  const Matrix a = random_matrix(c, c + 2, rng);
  Matrix r = matmul(a, transpose(a));
  Vector d(c);
  for (std::size_t i = 0; i < c; ++i) d[i] = std::sqrt(r(i, i));
  for (std::size_t i = 0; i < c; ++i)
    for (std::size_t j = 0; j < c; ++j) r(i, j) = i == j ? 1.0 : r(i, j) / (d[i] * d[j]);
  return r;
}

Outcome amplification() {
  Outcome o;
  Rng rng(303);
  int strict = 0, norm = 0;
  for (int t = 0; t < 100; ++t) {
    const std::size_t c = 2 + rng.below(15);
    Vector g(c);
    for (double& v : g) v = rng.normal();
    strict += prop1_gamma_check(random_correlation(c, rng), g).all_strict();
  }
  bool boundary = true;
  for (int t = 0; t < 10; ++t) {
    const std::size_t c = 1 + rng.below(16);
    Vector g(c);
    for (double& v : g) v = rng.normal();
    const GammaCheck r = prop1_gamma_check(Matrix(c, c, 1.0), g);
    for (Verdict v : r.verdicts) boundary = boundary && v == Verdict::Boundary;
  }
  for (int t = 0; t < 100; ++t) {
    const std::size_t c = 2 + rng.below(15);
    const Matrix s = random_trace_normalized_spd(c, 1e-3, rng);
    Vector x(c);
    for (double& v : x) v = rng.normal();
    norm += prop1_norm_check(s, x).holds;
  }
  o.require(strict == 100, "gamma amplification strict on " + std::to_string(strict) + "/100");
  o.require(boundary, "all-ones correlation gives equality");
  o.require(norm == 100, "norm amplification on " + std::to_string(norm) + "/100");
  return o;
}

Outcome nash() {
  Outcome o;
  Rng rng(404);
  double kkt = 0.0, budget = 0.0, closed = 0.0, gain = -INFINITY;
  int interior = 0;
  for (int t = 0; t < 50; ++t) {
    const std::size_t c = 1 + rng.below(4);
    std::size_t h = 1 + rng.below(3), w = 1 + rng.below(3);
    const GameSpec g = random_interior_game(c, h, w, rng);
    const NashSolution s = solve_nash(g);
    kkt = std::max(kkt, kkt_residual(g, s));
    for (std::size_t ch = 0; ch < c; ++ch) {
      double sum = 0.0;
      for (std::size_t l = 0; l < g.neurons(); ++l) sum += s.p(ch, l);
      budget = std::max(budget, std::abs(sum - g.budget[ch]));
    }
    const ClosedForm cf = nash_closed_form(g, s.v0);
    interior += !cf.not_applicable;
    if (!cf.not_applicable) closed = std::max(closed, max_abs_diff(cf.p, s.p));
    const std::size_t L = g.neurons();
    if (L < 2) continue;
    for (std::size_t ch = 0; ch < c; ++ch) {
      const double base = payoff(g, s.p, ch);
      for (int k = 0; k < 100; ++k) {
        Vector d(L);
        double mean = 0.0;
        for (double& v : d) mean += (v = rng.normal()) / static_cast<double>(L);
        double nrm = 0.0;
        for (double& v : d) nrm += (v -= mean) * v;
        nrm = std::sqrt(nrm);
        double step = 1e-4;
        for (std::size_t l = 0; l < L; ++l)
          if (d[l] < 0.0) step = std::min(step, s.p(ch, l) * nrm / -d[l]);
        Matrix p = s.p;
        for (std::size_t l = 0; l < L; ++l) p(ch, l) += step * d[l] / nrm;
        gain = std::max(gain, payoff(g, p, ch) - base);
      }
    }
  }
  o.require(kkt < 1e-7, "KKT residual " + fmt(kkt) + " < 1e-7");
  o.require(budget < 1e-8, "budget error " + fmt(budget) + " < 1e-8");
  o.require(interior == 50 && closed < 1e-6,
            "closed form on " + std::to_string(interior) + "/50 interior games, diff " + fmt(closed) + " < 1e-6");
  o.require(gain <= 1e-9, "best perturbation gain " + fmt(gain) + " <= 1e-9");
  return o;
}

Outcome gradients() {
  Outcome o;
  std::map<std::string, double> worst;
  for (std::uint64_t i = 0; i < 20; ++i) {
    Rng rng(500 + i);
    CEOptions opts;
    const std::size_t c = i % 2 ? 8 : 4;
    opts.reduction = c == 4 ? 1 : 2;
    CEState s = random_ce_state(c, rng, opts);
    const GradCheckReport r = ce_gradient_check(s, random_map({2 + rng.below(3), c, 2, 2}, rng), rng);
    for (const auto& [k, v] : r.worst) worst[k] = std::max(worst[k], v);
  }
  for (const auto& [k, v] : worst) o.require(v <= 1e-4, k + " relative error " + fmt(v) + " <= 1e-4");
  return o;
}

Outcome fusion() {
  Outcome o;
  std::vector<std::string> args{"chaneq", "fuse-check", "--count", "50", "--seed", "606"};
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = chaneq::cli::dispatch(static_cast<int>(argv.size()), argv.data(), out, err);
  const std::string text = out.str();
  const double worst = std::stod(text.substr(text.rfind('=') + 1));
  o.require(code == 0, "fuse-check exit code " + std::to_string(code));
  o.require(worst < 1e-8, "50 instances, max |fused - unfused| " + fmt(worst) + " < 1e-8");
  return o;
}

/// (variant, value, metric) -> mean over seeds.
std::map<std::tuple<std::string, double, std::string>, double> seed_means(const std::string& csv) {
  std::map<std::tuple<std::string, double, std::string>, std::pair<double, int>> acc;
  std::istringstream in(csv);
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    std::vector<std::string> f;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) f.push_back(cell);
    auto& slot = acc[{f[1], std::stod(f[3]), f[5]}];
    slot.first += std::stod(f[6]);
    slot.second += 1;
  }
  std::map<std::tuple<std::string, double, std::string>, double> out;
  for (const auto& [k, v] : acc) out[k] = v.first / v.second;
  return out;
}

Outcome mechanism() {
  Outcome o;
  ExperimentConfig cfg;
  cfg.train.epochs = 30;
  cfg.train.lr.base = 0.1;
  cfg.train.lr.milestones = {15, 22};
  cfg.train.eval_every = 30;
  cfg.weight_decays = {1e-4, 1e-3, 5e-3};
  cfg.seeds = 2;
  const auto wd = seed_means(run_experiment("weight-decay", cfg).csv);
  auto inhibited = [&](const char* v, double d) { return wd.at({v, d, "inhibited_ratio"}); };
  for (const char* v : {"bn", "bn+bd", "bn+ce"})
    o.notes.push_back(std::string(v) + " inhibited " + fmt(inhibited(v, 1e-4)) + " " +
                      fmt(inhibited(v, 1e-3)) + " " + fmt(inhibited(v, 5e-3)));
  const bool monotone = inhibited("bn", 1e-4) <= inhibited("bn", 1e-3) &&
                        inhibited("bn", 1e-3) <= inhibited("bn", 5e-3);
  o.require(monotone, "(a) BN inhibited ratio non-decreasing in weight decay");
  const double margin = inhibited("bn", 5e-3) - inhibited("bn+ce", 5e-3);
  o.require(margin >= 0.1, "(a) BN minus BN+CE at 5e-3 = " + fmt(margin) + " >= 0.1");

  cfg.seeds = 5;
  cfg.train.weight_decay = 1e-4;
  cfg.variants = {CEVariant::None, CEVariant::Full};
  cfg.ratios = {0.5};
  const auto ab = seed_means(run_experiment("ablation", cfg).csv);
  const double bn = ab.at({"bn", 0.5, "accuracy_mean"}), ce = ab.at({"bn+ce", 0.5, "accuracy_mean"});
  o.require(ce > bn, "(b) accuracy at ablation ratio 0.5: BN+CE " + fmt(ce) + " > BN " + fmt(bn));
  const double bd = inhibited("bn+bd", 5e-3), base = inhibited("bn", 5e-3);
  o.require(bd < base, "(c) BN+BD inhibited " + fmt(bd) + " < BN " + fmt(base) + " at 5e-3");
  return o;
}

std::map<std::string, std::string> snapshot(const fs::path& dir) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file()) files[fs::relative(e.path(), dir).string()] = read_file(e.path());
  return files;
}

Outcome determinism() {
  Outcome o;
  const fs::path root = fs::temp_directory_path() / "chaneq_acceptance_determinism";
  fs::remove_all(root);
  const std::vector<std::string> small{"--set", "task.train_size=128", "--set", "task.test_size=64",
                                       "--set", "train.epochs=2",      "--set", "model.depth=3",
                                       "--set", "model.width=8"};
  const fs::path model = root / "model_src";
  const std::vector<std::vector<std::string>> commands{
      {"newton-bench", "--dim", "16", "--iters", "3"},
      {"moments", "--grid", "--samples", "20000"},
      {"nash", "--channels", "3", "--proxy"},
      {"prop-check"},
      {"fuse-check"},
      {"train", "--variant", "bn+ce"},
      {"ablate", "--variant", "bn+ce", "--layer", "1"},
      {"ablate", "--model", (model / "model").string(), "--layer", "1"},
      {"sweep", "weight-decay", "--set", "sweep.weight_decays=1e-4,5e-3", "--workers", "2"},
      {"sweep", "corrupted-label", "--set", "sweep.corruptions=0,0.2"},
      {"sweep", "ablation", "--set", "sweep.variants=bn,bn+ce", "--set", "ablation.ratios=0,0.5"},
  };
  auto run = [&](std::vector<std::string> args, const fs::path& out) {
    args.insert(args.begin(), "chaneq");
    const bool experiment = args[1] == "train" || args[1] == "ablate" || args[1] == "sweep";
    if (experiment) args.insert(args.end(), small.begin(), small.end());
    args.insert(args.end(), {"--seed", "5", "--out", out.string()});
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream so, se;
    const int code = chaneq::cli::dispatch(static_cast<int>(argv.size()), argv.data(), so, se);
    std::string text = so.str();
    const std::string dir = out.string();
    for (auto pos = text.find(dir); pos != std::string::npos; pos = text.find(dir, pos))
      text.replace(pos, dir.size(), "<out>");
    return std::make_pair(code, text);
  };
  run({"train", "--variant", "bn+ce"}, model);
  for (std::size_t i = 0; i < commands.size(); ++i) {
    const fs::path a = root / (std::to_string(i) + "a"), b = root / (std::to_string(i) + "b");
    const auto ra = run(commands[i], a);
    const auto rb = run(commands[i], b);
    const auto fa = snapshot(a), fb = snapshot(b);
    std::string label = commands[i][0];
    if (commands[i].size() > 1 && commands[i][1][0] != '-') label += " " + commands[i][1];
    o.require(ra.first == 0 && rb.first == 0 && !fa.empty() && fa == fb && ra.second == rb.second,
              label + ": " + std::to_string(fa.size()) + " files identical");
  }
  fs::remove_all(root);
  return o;
}

struct Criterion {
  const char* name;
  double budget_s;
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> all{
      {"Newton-Schulz correctness", 10, newton_schulz},
      {"rectified Gaussian moments", 60, moments},
      {"magnitude amplification", 5, amplification},
      {"Nash equilibrium oracle", 30, nash},
      {"gradient correctness", 30, gradients},
      {"fusion equivalence", 5, fusion},
      {"mechanism reproduction", 600, mechanism},
      {"determinism", 1e9, determinism},
  };
  std::vector<std::size_t> which;
  if (argc > 1) {
    const int k = std::atoi(argv[1]);
    if (k < 1 || k > static_cast<int>(all.size())) {
      std::fprintf(stderr, "usage: chaneq_acceptance [1-%zu]\n", all.size());
      return 2;
    }
    which.push_back(static_cast<std::size_t>(k - 1));
  } else {
    for (std::size_t i = 0; i < all.size(); ++i) which.push_back(i);
  }
  bool ok = true;
  for (std::size_t i : which) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = all[i].run();
    } catch (const std::exception& e) {
      o.require(false, std::string("exception: ") + e.what());
    }
    const double dt = seconds_since(t0);
    if (all[i].budget_s < 1e9) o.require(dt < all[i].budget_s, "runtime " + fmt(dt) + " s < " + fmt(all[i].budget_s) + " s");
    for (const auto& n : o.notes) std::printf("  %s\n", n.c_str());
    std::printf("criterion %zu (%s): %s\n", i + 1, all[i].name, o.pass ? "PASS" : "FAIL");
    std::fflush(stdout);
    ok = ok && o.pass;
  }
  return ok ? 0 : 1;
}
