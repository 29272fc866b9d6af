#pragma once

// Closed-form checks of the underlying mathematics: moments of a rectified
// Gaussian, the magnitude-amplification inequalities of the decorrelation
// operator, and the Gaussian interference game with its Nash equilibrium.

#include <string>
#include <vector>

#include "chaneq/rng.hpp"
#include "chaneq/tensor.hpp"

namespace chaneq {

struct RectGaussSpec {
  double gamma = 1.0;
  double beta = 0.0;
};

/// Moments of y = max(0, gamma z + beta), z ~ N(0, 1).
struct Moments {
  double mean = 0.0;
  double second = 0.0;
  /// gamma == 0: the limit values max(0, beta) and max(0, beta)^2 were returned.
  bool limit = false;
};

Moments rect_gauss_moments(const RectGaussSpec& spec);

struct MonteCarloMoments {
  double mean = 0.0;
  double second = 0.0;
  double se_mean = 0.0;    ///< standard error of `mean`
  double se_second = 0.0;  ///< standard error of `second`
  std::size_t samples = 0;
};

MonteCarloMoments rect_gauss_monte_carlo(const RectGaussSpec& spec, std::size_t samples, Rng& rng);

enum class Verdict { Strict, Boundary, Violated };
const char* to_string(Verdict v);

struct GammaCheck {
  Vector gamma_hat;
  std::vector<Verdict> verdicts;
  /// rho is the all-ones matrix, where equality is expected.
  bool all_ones = false;
  bool all_strict() const;
};

/// gamma_hat = (3I - Sigma_N) gamma / 2 with Sigma_N = (gamma gamma^T / |gamma|^2) .* rho.
/// rho must be symmetric with unit diagonal and entries in [-1, 1].
GammaCheck prop1_gamma_check(const Matrix& rho, std::span<const double> gamma);

struct NormCheck {
  double norm_in = 0.0;
  double norm_out = 0.0;
  bool holds = false;  ///< norm_out > norm_in
};

/// Compares |Sigma^{-1/2} x| with |x| using the eigendecomposition of Sigma.
/// Throws ContractError for a singular Sigma or x = 0.
NormCheck prop1_norm_check(const Matrix& sigma_n, std::span<const double> xtilde);

/// Gaussian interference game over C channels and L = H*W neurons.
struct GameSpec {
  Matrix g;       ///< C x C coupling gains, positive diagonal
  Vector sigma;   ///< C noise powers
  Matrix h;       ///< C x L channel gains
  Vector budget;  ///< C power budgets
  std::size_t height = 1;
  std::size_t width = 1;

  std::size_t channels() const noexcept { return g.rows(); }
  std::size_t neurons() const noexcept { return height * width; }
  /// Throws ContractError on a shape or positivity violation.
  void validate() const;
};

struct NashSolution {
  Matrix p;   ///< C x L powers
  Vector v0;  ///< C Lagrange multipliers
  std::size_t rounds = 0;
};

/// sigma_c / h_cl + sum_{d != c} g_cd p_dl.
double interference(const GameSpec& game, const Matrix& p, std::size_t c, std::size_t l);

/// Payoff of channel c: sum_l ln(1 + g_cc p_cl / interference).
double payoff(const GameSpec& game, const Matrix& p, std::size_t c);

/// Round-robin water-filling best responses until the largest power change
/// falls below `tol`. Throws NumericalError after `max_rounds`.
NashSolution solve_nash(const GameSpec& game, double tol = 1e-10, std::size_t max_rounds = 100000);

/// Largest violation of the KKT conditions g_cc / (sum_d g_cd p_dl + sigma_c/h_cl) = v0_c
/// on active neurons and <= v0_c on inactive ones.
double kkt_residual(const GameSpec& game, const NashSolution& sol);

struct ClosedForm {
  Matrix p;
  /// Some neuron is inactive, so the interior formula does not describe the equilibrium.
  bool not_applicable = false;
};

/// p_l = G^{-1} (Diag(v0)^{-1} diag(G) - Diag(h_l)^{-1} sigma) per neuron.
ClosedForm nash_closed_form(const GameSpec& game, std::span<const double> v0);

struct ProxyReport {
  Vector gamma_eq;  ///< sigma
  Vector beta_eq;   ///< Diag(v0)^{-1} diag(G) + (2 + delta) sigma
  Matrix p;         ///< proxy powers, C x L
  std::vector<std::string> lines;
};

/// Linear proxy p_l = G^{-1} (Diag(sigma) hbar_l + beta_eq), hbar = game.h,
/// with its identification against the CE form p = Diag(gamma) xbar + beta.
ProxyReport ce_proxy_map(const GameSpec& game, std::span<const double> v0,
                         std::span<const double> delta);

/// Random game with every equilibrium power strictly positive: weak coupling
/// and budgets large compared with sigma / h.
GameSpec random_interior_game(std::size_t channels, std::size_t height, std::size_t width, Rng& rng);

std::string to_json(const GameSpec& game);
GameSpec game_from_json(std::string_view text);
std::string to_json(const NashSolution& sol);
NashSolution nash_from_json(std::string_view text);

}  // namespace chaneq
