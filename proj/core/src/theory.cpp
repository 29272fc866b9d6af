#include "chaneq/theory.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include <json.hpp>

#include "chaneq/eigen.hpp"
#include "chaneq/error.hpp"

namespace chaneq {

Moments rect_gauss_moments(const RectGaussSpec& spec) {
  const double g = spec.gamma;
  const double b = spec.beta;
  if (g == 0.0) {
    const double m = std::max(0.0, b);
    return {m, m * m, true};
  }
  // 1 + Erf(x) and 1 - Erf(x) are taken from erfc to keep the tails accurate.
  const double x = b / (std::numbers::sqrt2 * g);
  const double e = std::exp(-b * b / (2.0 * g * g)) / std::sqrt(2.0 * std::numbers::pi);
  Moments m;
  if (g > 0.0) {
    const double one_plus = std::erfc(-x);
    m.mean = g * e + 0.5 * b * one_plus;
    m.second = g * b * e + 0.5 * (g * g + b * b) * one_plus;
  } else {
    const double one_minus = std::erfc(x);
    m.mean = -g * e + 0.5 * b * one_minus;
    m.second = -g * b * e + 0.5 * (g * g + b * b) * one_minus;
  }
  return m;
}

MonteCarloMoments rect_gauss_monte_carlo(const RectGaussSpec& spec, std::size_t samples, Rng& rng) {
  if (samples < 2) throw ContractError("rect_gauss_monte_carlo: need at least 2 samples");
  double s1 = 0.0, s2 = 0.0, s4 = 0.0;
  for (std::size_t i = 0; i < samples; ++i) {
    const double y = std::max(0.0, spec.gamma * rng.normal() + spec.beta);
    const double y2 = y * y;
    s1 += y;
    s2 += y2;
    s4 += y2 * y2;
  }
  const double n = static_cast<double>(samples);
  MonteCarloMoments mc;
  mc.samples = samples;
  mc.mean = s1 / n;
  mc.second = s2 / n;
  const double var1 = std::max(0.0, s2 / n - mc.mean * mc.mean) * n / (n - 1.0);
  const double var2 = std::max(0.0, s4 / n - mc.second * mc.second) * n / (n - 1.0);
  mc.se_mean = std::sqrt(var1 / n);
  mc.se_second = std::sqrt(var2 / n);
  return mc;
}

const char* to_string(Verdict v) {
  switch (v) {
    case Verdict::Strict: return "strict";
    case Verdict::Boundary: return "boundary";
    case Verdict::Violated: return "violated";
  }
  return "?";
}

bool GammaCheck::all_strict() const {
  return std::all_of(verdicts.begin(), verdicts.end(),
                     [](Verdict v) { return v == Verdict::Strict; });
}

GammaCheck prop1_gamma_check(const Matrix& rho, std::span<const double> gamma) {
  const std::size_t c = rho.rows();
  if (rho.cols() != c || gamma.size() != c) throw ShapeError("prop1_gamma_check: sizes disagree");
  if (!is_symmetric(rho, 1e-12)) throw ContractError("prop1_gamma_check: rho not symmetric");
  bool ones = true;
  for (std::size_t i = 0; i < c; ++i) {
    if (std::abs(rho(i, i) - 1.0) > 1e-12) throw ContractError("prop1_gamma_check: diag(rho) != 1");
    for (std::size_t j = 0; j < c; ++j) {
      if (!(std::abs(rho(i, j)) <= 1.0 + 1e-12)) {
        throw ContractError("prop1_gamma_check: rho entry outside [-1, 1]");
      }
      ones = ones && std::abs(rho(i, j) - 1.0) <= 1e-12;
    }
  }
  const double g2 = dot(gamma, gamma);
  if (!(g2 > 0.0)) throw ContractError("prop1_gamma_check: gamma is zero");

  GammaCheck out;
  out.all_ones = ones;
  out.gamma_hat.resize(c);
  out.verdicts.resize(c);
  for (std::size_t i = 0; i < c; ++i) {
    double sg = 0.0;
    for (std::size_t j = 0; j < c; ++j) sg += gamma[i] * gamma[j] / g2 * rho(i, j) * gamma[j];
    out.gamma_hat[i] = 0.5 * (3.0 * gamma[i] - sg);
    const double diff = std::abs(out.gamma_hat[i]) - std::abs(gamma[i]);
    const double tol = 1e-12 * std::abs(gamma[i]);
    out.verdicts[i] = diff > tol ? Verdict::Strict
                      : std::abs(diff) <= tol ? Verdict::Boundary
                                              : Verdict::Violated;
  }
  return out;
}

NormCheck prop1_norm_check(const Matrix& sigma_n, std::span<const double> xtilde) {
  if (sigma_n.rows() != xtilde.size()) throw ShapeError("prop1_norm_check: sizes disagree");
  if (norm2(xtilde) == 0.0) throw ContractError("prop1_norm_check: x must be non-zero");
  const Matrix inv = inv_sqrt_eigen(sigma_n);
  NormCheck out;
  out.norm_in = norm2(xtilde);
  out.norm_out = norm2(matvec(inv, xtilde));
  out.holds = out.norm_out > out.norm_in;
  return out;
}

void GameSpec::validate() const {
  const std::size_t c = g.rows();
  if (c == 0 || g.cols() != c) throw ContractError("GameSpec: G must be square and non-empty");
  if (height == 0 || width == 0) throw ContractError("GameSpec: empty neuron grid");
  if (sigma.size() != c || budget.size() != c || h.rows() != c || h.cols() != neurons()) {
    throw ContractError("GameSpec: sigma, h or P do not match G");
  }
  for (std::size_t i = 0; i < c; ++i) {
    if (!(g(i, i) > 0.0)) throw ContractError("GameSpec: diagonal gains must be positive");
    for (std::size_t j = 0; j < c; ++j)
      if (!(g(i, j) >= 0.0)) throw ContractError("GameSpec: gains must be non-negative");
    if (!(sigma[i] > 0.0) || !(budget[i] > 0.0)) {
      throw ContractError("GameSpec: noise and budgets must be positive");
    }
  }
  for (double v : h.values())
    if (!(v > 0.0)) throw ContractError("GameSpec: channel gains must be positive");
}

double interference(const GameSpec& game, const Matrix& p, std::size_t c, std::size_t l) {
  double acc = game.sigma[c] / game.h(c, l);
  for (std::size_t d = 0; d < game.channels(); ++d)
    if (d != c) acc += game.g(c, d) * p(d, l);
  return acc;
}

double payoff(const GameSpec& game, const Matrix& p, std::size_t c) {
  double total = 0.0;
  for (std::size_t l = 0; l < game.neurons(); ++l)
    total += std::log1p(game.g(c, c) * p(c, l) / interference(game, p, c, l));
  return total;
}

namespace {

/// Water level w with sum_l max(0, w - a_l) = budget, solved exactly over the
/// sorted floors a_l.
double water_level(std::vector<double> a, double budget) {
  std::sort(a.begin(), a.end());
  double prefix = 0.0;
  double w = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    prefix += a[k];
    w = (budget + prefix) / static_cast<double>(k + 1);
    if (k + 1 == a.size() || w <= a[k + 1]) break;
  }
  return w;
}

}  // namespace

NashSolution solve_nash(const GameSpec& game, double tol, std::size_t max_rounds) {
  game.validate();
  const std::size_t C = game.channels();
  const std::size_t L = game.neurons();
  NashSolution sol;
  sol.p = Matrix(C, L);
  sol.v0.assign(C, 0.0);
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t l = 0; l < L; ++l) sol.p(c, l) = game.budget[c] / static_cast<double>(L);

  std::vector<double> floors(L);
  double change = 0.0;
  for (std::size_t round = 1; round <= max_rounds; ++round) {
    change = 0.0;
    for (std::size_t c = 0; c < C; ++c) {
      for (std::size_t l = 0; l < L; ++l) floors[l] = interference(game, sol.p, c, l) / game.g(c, c);
      const double w = water_level(floors, game.budget[c]);
      for (std::size_t l = 0; l < L; ++l) {
        const double next = std::max(0.0, w - floors[l]);
        change = std::max(change, std::abs(next - sol.p(c, l)));
        sol.p(c, l) = next;
      }
      sol.v0[c] = 1.0 / w;
    }
    if (!std::isfinite(change)) break;
    if (change < tol) {
      sol.rounds = round;
      return sol;
    }
  }
  throw NumericalError("solve_nash: best-response iteration did not converge", change);
}

double kkt_residual(const GameSpec& game, const NashSolution& sol) {
  double worst = 0.0;
  for (std::size_t c = 0; c < game.channels(); ++c)
    for (std::size_t l = 0; l < game.neurons(); ++l) {
      double denom = game.sigma[c] / game.h(c, l);
      for (std::size_t d = 0; d < game.channels(); ++d) denom += game.g(c, d) * sol.p(d, l);
      const double rate = game.g(c, c) / denom;
      const double r = sol.p(c, l) > 0.0 ? std::abs(rate - sol.v0[c])
                                         : std::max(0.0, rate - sol.v0[c]);
      worst = std::max(worst, r);
    }
  return worst;
}

ClosedForm nash_closed_form(const GameSpec& game, std::span<const double> v0) {
  game.validate();
  const std::size_t C = game.channels();
  if (v0.size() != C) throw ShapeError("nash_closed_form: v0 length != C");
  ClosedForm out;
  out.p = Matrix(C, game.neurons());
  Vector rhs(C);
  for (std::size_t l = 0; l < game.neurons(); ++l) {
    for (std::size_t c = 0; c < C; ++c) rhs[c] = game.g(c, c) / v0[c] - game.sigma[c] / game.h(c, l);
    const Vector p = solve(game.g, rhs);
    for (std::size_t c = 0; c < C; ++c) {
      out.p(c, l) = p[c];
      if (!(p[c] > 0.0)) out.not_applicable = true;
    }
  }
  return out;
}

namespace {

std::string format_vector(std::span<const double> v) {
  std::ostringstream os;
  os.precision(6);
  os << '[';
  for (std::size_t i = 0; i < v.size(); ++i) os << (i ? ", " : "") << v[i];
  os << ']';
  return os.str();
}

}  // namespace

ProxyReport ce_proxy_map(const GameSpec& game, std::span<const double> v0,
                         std::span<const double> delta) {
  game.validate();
  const std::size_t C = game.channels();
  if (v0.size() != C) throw ShapeError("ce_proxy_map: v0 length != C");
  if (!delta.empty() && delta.size() != C) throw ShapeError("ce_proxy_map: delta length != C");
  ProxyReport rep;
  rep.gamma_eq = game.sigma;
  rep.beta_eq.resize(C);
  for (std::size_t c = 0; c < C; ++c) {
    const double dc = delta.empty() ? 0.0 : delta[c];
    rep.beta_eq[c] = game.g(c, c) / v0[c] + (2.0 + dc) * game.sigma[c];
  }
  rep.p = Matrix(C, game.neurons());
  Vector rhs(C);
  for (std::size_t l = 0; l < game.neurons(); ++l) {
    for (std::size_t c = 0; c < C; ++c) rhs[c] = game.sigma[c] * game.h(c, l) + rep.beta_eq[c];
    const Vector p = solve(game.g, rhs);
    for (std::size_t c = 0; c < C; ++c) rep.p(c, l) = p[c];
  }
  rep.lines = {
      "proxy: p_ij = G^-1 (Diag(sigma) hbar_ij + Diag(v0)^-1 diag(G) + (2 + delta) sigma)",
      "CE form: p_ij = D^-1/2 (Diag(gamma) xbar_ij + beta)",
      "identify: G^-1 <-> D^-1/2, hbar_ij <-> xbar_ij",
      "gamma_eq = sigma = " + format_vector(rep.gamma_eq),
      "beta_eq = Diag(v0)^-1 diag(G) + (2 + delta) sigma = " + format_vector(rep.beta_eq),
      "note: structural correspondence only; CE outputs are not claimed equal to these powers",
  };
  return rep;
}

GameSpec random_interior_game(std::size_t channels, std::size_t height, std::size_t width, Rng& rng) {
  if (channels == 0 || height == 0 || width == 0) {
    throw ContractError("random_interior_game: dims must be >= 1");
  }
  const std::size_t L = height * width;
  for (int attempt = 0; attempt < 1000; ++attempt) {
    GameSpec game;
    game.height = height;
    game.width = width;
    game.g = Matrix(channels, channels);
    for (std::size_t c = 0; c < channels; ++c)
      for (std::size_t d = 0; d < channels; ++d)
        game.g(c, d) = c == d ? rng.uniform(0.8, 1.2)
                              : rng.uniform(0.0, 0.3) / static_cast<double>(channels);
    game.sigma.resize(channels);
    game.budget.resize(channels);
    game.h = Matrix(channels, L);
    for (std::size_t c = 0; c < channels; ++c) {
      game.sigma[c] = rng.uniform(0.2, 1.0);
      game.budget[c] = static_cast<double>(L) * rng.uniform(1.5, 4.0);
      for (std::size_t l = 0; l < L; ++l) game.h(c, l) = rng.uniform(0.5, 2.0);
    }
    const NashSolution sol = solve_nash(game);
    const double smallest = *std::min_element(sol.p.values().begin(), sol.p.values().end());
    if (smallest > 1e-3) return game;
  }
  throw DegenerateInputError("random_interior_game: no interior instance found");
}

namespace {

using nlohmann::json;

json matrix_json(const Matrix& m) {
  json rows = json::array();
  for (std::size_t i = 0; i < m.rows(); ++i) {
    const auto r = m.row(i);
    rows.push_back(std::vector<double>(r.begin(), r.end()));
  }
  return rows;
}

Matrix matrix_from(const json& j) {
  const auto rows = j.get<std::vector<std::vector<double>>>();
  if (rows.empty()) return {};
  Matrix m(rows.size(), rows[0].size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != m.cols()) throw ContractError("json: ragged matrix");
    for (std::size_t k = 0; k < m.cols(); ++k) m(i, k) = rows[i][k];
  }
  return m;
}

template <class F>
auto parse_json(std::string_view text, F&& f) {
  try {
    return f(json::parse(text));
  } catch (const json::exception& e) {
    throw ContractError(std::string("json: ") + e.what());
  }
}

}  // namespace

std::string to_json(const GameSpec& game) {
  nlohmann::ordered_json j;
  j["C"] = game.channels();
  j["H"] = game.height;
  j["W"] = game.width;
  j["G"] = matrix_json(game.g);
  j["sigma"] = game.sigma;
  j["h"] = matrix_json(game.h);
  j["P"] = game.budget;
  return j.dump(1);
}

GameSpec game_from_json(std::string_view text) {
  return parse_json(text, [](const json& j) {
    GameSpec g;
    g.height = j.at("H").get<std::size_t>();
    g.width = j.at("W").get<std::size_t>();
    g.g = matrix_from(j.at("G"));
    g.sigma = j.at("sigma").get<Vector>();
    g.h = matrix_from(j.at("h"));
    g.budget = j.at("P").get<Vector>();
    if (j.at("C").get<std::size_t>() != g.g.rows()) throw ContractError("GameSpec: C != rows(G)");
    g.validate();
    return g;
  });
}

std::string to_json(const NashSolution& sol) {
  nlohmann::ordered_json j;
  j["p"] = matrix_json(sol.p);
  j["v0"] = sol.v0;
  j["rounds"] = sol.rounds;
  return j.dump(1);
}

NashSolution nash_from_json(std::string_view text) {
  return parse_json(text, [](const json& j) {
    NashSolution s;
    s.p = matrix_from(j.at("p"));
    s.v0 = j.at("v0").get<Vector>();
    s.rounds = j.at("rounds").get<std::size_t>();
    return s;
  });
}

}  // namespace chaneq
