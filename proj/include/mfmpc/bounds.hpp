#pragma once

/**
 * @file
 * @brief Exponential controllability and the a-priori MPC performance bound.
 *
 * Under beta(r, n) = C sigma^n r the bound for horizon N is
 *
 *   alpha_N = 1 - (gamma_N - 1) prod_{i=2}^N (gamma_i - 1)
 *                 / (prod_{i=2}^N gamma_i - prod_{i=2}^N (gamma_i - 1)),
 *
 *   gamma_i = C sum_{n=0}^{i-1} sigma^n.
 *
 * When alpha_N > 0 the receding-horizon closed loop satisfies
 * alpha_N J_inf^MPC <= V_N <= V_inf.
 */

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <stdexcept>
#include <vector>

#include "errors.hpp"

namespace mfmpc {

/// (C, sigma) of beta(r, n) = C sigma^n r.
struct ControllabilityParams {
  double C{1.0};
  double sigma{0.5};

  /// sigma = 0 is accepted as the one-step-controllable limit.
  void validate() const {
    if (!(C >= 1.0) || !std::isfinite(C))
      throw InvalidInput("ControllabilityParams: overshoot constant C must be finite and >= 1");
    if (!(sigma >= 0.0 && sigma < 1.0))
      throw InvalidInput("ControllabilityParams: decay rate sigma must lie in [0, 1)");
  }
};

/// Constants of the instantaneous feedback -Y/(1+nu) under the quadratic mean cost (dt = 1):
/// C = 1 + nu / (1+nu)^2, sigma = (1 - 1/(1+nu))^2.
inline ControllabilityParams controllability_from_nu(double nu) {
  if (!(nu > 0.0) || !std::isfinite(nu))
    throw InvalidInput("controllability_from_nu: nu must be positive and finite");
  const double onep = 1.0 + nu;
  const double keep = nu / onep;
  return {1.0 + nu / (onep * onep), keep * keep};
}

inline double beta(double r, std::size_t n, const ControllabilityParams& p) {
  if (!(r >= 0.0))
    throw InvalidInput("beta: r must be nonnegative");
  return p.C * std::pow(p.sigma, static_cast<double>(n)) * r;
}

/// sum_{n=0}^{i-1} sigma^n, by the geometric closed form unless sigma is within 1e-8 of 1.
inline double geometric_partial_sum(double sigma, std::size_t i) {
  if (std::abs(1.0 - sigma) < 1e-8) {
    double sum = 0.0;
    double term = 1.0;
    for (std::size_t n = 0; n < i; ++n) {
      sum += term;
      term *= sigma;
    }
    return sum;
  }
  if (sigma == 0.0)
    return i == 0 ? 0.0 : 1.0;
  // 1 - sigma^i without cancellation when sigma^i is close to 1.
  return -std::expm1(static_cast<double>(i) * std::log(sigma)) / (1.0 - sigma);
}

inline double gamma_value(const ControllabilityParams& p, std::size_t i) { return p.C * geometric_partial_sum(p.sigma, i); }

/// gamma_2 .. gamma_N.
inline std::vector<double> gamma_sequence(const ControllabilityParams& p, std::size_t horizon) {
  p.validate();
  if (horizon < 2)
    throw InvalidInput("gamma_sequence: horizon must be at least 2");
  std::vector<double> out;
  out.reserve(horizon - 1);
  for (std::size_t i = 2; i <= horizon; ++i)
    out.push_back(gamma_value(p, i));
  return out;
}

/**
 * @brief Closed-form performance bound alpha_N.
 *
 * Rewritten with R = prod (gamma_i - 1) / gamma_i as 1 - (gamma_N - 1) R / (1 - R)
 * and evaluated in log space, so large horizons neither overflow nor lose R.
 */
inline double alpha_N(const ControllabilityParams& p, std::size_t horizon) {
  const auto gammas = gamma_sequence(p, horizon);
  double log_ratio = 0.0;
  for (double g : gammas)
    log_ratio += std::log1p(-1.0 / g);
  const double ratio = std::exp(log_ratio);
  const double one_minus_ratio = -std::expm1(log_ratio);
  if (!(one_minus_ratio > 0.0))
    throw std::logic_error("alpha_N: vanishing denominator");
  return 1.0 - (gammas.back() - 1.0) * ratio / one_minus_ratio;
}

/// alpha = 1 - (C sigma)^2, valid only for the instantaneous feedback.
inline double example2_alpha(double nu) {
  const auto p = controllability_from_nu(nu);
  const double cs = p.C * p.sigma;
  return 1.0 - cs * cs;
}

/// Slack of one inequality instance; it holds when slack >= -tolerance.
struct InequalitySlack {
  std::size_t index{0};
  double slack{0.0};
  bool holds{true};
};

struct InequalityReport {
  /// sum_{n=k}^{N-1} lambda_n <= gamma_{N-k} lambda_k, k = 0..N-2
  std::vector<InequalitySlack> tail_bounds;
  /// nu <= sum_{n=0}^{j-1} lambda_{n+1} + gamma_{N-j} lambda_{j+1}, j = 0..N-2
  std::vector<InequalitySlack> value_bounds;
  /// j = N-1 and j = N reference lambda_N, lambda_{N+1}, which do not exist.
  std::vector<std::size_t> skipped_value_bounds;
  /// sum lambda_n - nu >= lambda_0 alpha
  InequalitySlack decrease{};

  bool tail_bounds_hold() const {
    for (const auto& s : tail_bounds)
      if (!s.holds)
        return false;
    return true;
  }
  bool value_bounds_hold() const {
    for (const auto& s : value_bounds)
      if (!s.holds)
        return false;
    return true;
  }
  bool all_hold() const { return tail_bounds_hold() && value_bounds_hold() && decrease.holds; }

  double min_slack() const {
    double m = decrease.slack;
    for (const auto& s : tail_bounds)
      m = std::min(m, s.slack);
    for (const auto& s : value_bounds)
      m = std::min(m, s.slack);
    return m;
  }
};

/**
 * @brief Checks the inequality system that certifies a bound alpha.
 *
 * `lambdas` has length N (stage costs along an optimal horizon trajectory),
 * `nu_tilde` plays the role of V_N at the second state.
 */
inline InequalityReport verify_inequalities(std::span<const double> lambdas, double nu_tilde,
                                            const ControllabilityParams& p, double alpha,
                                            double tolerance = 1e-9) {
  p.validate();
  const std::size_t n = lambdas.size();
  if (n < 2)
    throw InvalidInput("verify_inequalities: need at least two lambdas");
  for (double l : lambdas)
    if (!(l >= 0.0))
      throw InvalidInput("verify_inequalities: lambdas must be nonnegative");

  InequalityReport report;
  for (std::size_t k = 0; k + 2 <= n; ++k) {
    double tail = 0.0;
    for (std::size_t m = k; m < n; ++m)
      tail += lambdas[m];
    const double slack = gamma_value(p, n - k) * lambdas[k] - tail;
    report.tail_bounds.push_back({k, slack, slack >= -tolerance});
  }
  double prefix = 0.0;
  for (std::size_t j = 0; j + 2 <= n; ++j) {
    const double slack = prefix + gamma_value(p, n - j) * lambdas[j + 1] - nu_tilde;
    report.value_bounds.push_back({j, slack, slack >= -tolerance});
    prefix += lambdas[j + 1];
  }
  report.skipped_value_bounds = {n - 1, n};

  double total = 0.0;
  for (double l : lambdas)
    total += l;
  const double slack = total - nu_tilde - lambdas[0] * alpha;
  report.decrease = {0, slack, slack >= -tolerance};
  return report;
}

/// One point of the (nu, N) bound surface.
struct BoundResult {
  double nu{std::numeric_limits<double>::quiet_NaN()};
  std::size_t N{0};
  ControllabilityParams params{};
  std::vector<double> gammas;
  double alpha_closed_form{0.0};
  double alpha_lp{0.0};
  /// alpha_N > 0 and the LP optimum certifies it.
  bool feasible{false};
};

} // namespace mfmpc
