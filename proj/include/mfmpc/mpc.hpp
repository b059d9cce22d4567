#pragma once

/**
 * @file
 * @brief Finite-horizon subproblem, receding-horizon loop and instantaneous feedback.
 *
 * The horizon-N subproblem on the mean is
 *
 *   min_{v_0..v_{N-1}}  sum_{k=0}^{N-1} Y_k^2 / 2 + nu v_k^2 / 2,   Y_{k+1} = Y_k + dt v_k,
 *
 * with no terminal cost. Its value is p_N Y_0^2 where p_0 = 0 and
 *
 *   p_k = 1/2 + p_{k-1} nu / (nu + 2 p_{k-1} dt^2),
 *
 * and the optimal control with k steps to go is g_k Y, g_k = -2 p_{k-1} dt / (nu + 2 p_{k-1} dt^2).
 * For mean-only costs the particle problem reduces to this scalar one exactly,
 * so particle-level MPC solves the scalar problem and applies v_0 to every agent.
 */

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <utility>
#include <vector>

#include "costs.hpp"
#include "dynamics.hpp"
#include "errors.hpp"

namespace mfmpc {

enum class HorizonSolver { RiccatiClosedForm, ProjectedGradient };

struct MpcConfig {
  std::size_t horizon{2};
  ModelConfig model{};
  QuadraticMeanCost cost{};
  HorizonSolver solver{HorizonSolver::RiccatiClosedForm};
  double tolerance{1e-12};
  std::size_t max_iters{10000};

  /// Config for the common case where the cost shares the model's nu.
  static MpcConfig make(std::size_t horizon, const ModelConfig& model,
                        HorizonSolver solver = HorizonSolver::RiccatiClosedForm) {
    MpcConfig cfg;
    cfg.horizon = horizon;
    cfg.model = model;
    cfg.cost = QuadraticMeanCost(model.nu);
    cfg.solver = solver;
    return cfg;
  }

  void validate() const {
    if (horizon < 2)
      throw InvalidInput("MpcConfig: horizon must be at least 2");
    model.validate();
    if (cost.nu != model.nu)
      throw InvalidInput("MpcConfig: cost nu differs from model nu");
    if (!(tolerance > 0.0))
      throw InvalidInput("MpcConfig: tolerance must be positive");
    if (max_iters == 0)
      throw InvalidInput("MpcConfig: max_iters must be positive");
    if (!model.mean_reducible())
      throw InvalidInput("MpcConfig: the horizon problem needs a kernel whose mean dynamics is "
                         "control-only (alignment or antisymmetric custom kernel)");
  }
};

struct HorizonSolution {
  std::vector<double> controls; ///< v_0 .. v_{N-1}
  std::vector<double> means;    ///< Y_0 .. Y_N along the optimal open loop
  double value{0.0};            ///< V_N(Y_0)
  HorizonSolver solver{HorizonSolver::RiccatiClosedForm};
  std::size_t iterations{0};
  double residual{0.0};
};

/// Value coefficients p_0..p_N and gains g_0..g_N (index = steps to go, g_0 unused).
struct RiccatiTable {
  std::vector<double> value;
  std::vector<double> gain;
};

inline RiccatiTable riccati_table(std::size_t horizon, double nu, double dt) {
  RiccatiTable t;
  t.value.assign(horizon + 1, 0.0);
  t.gain.assign(horizon + 1, 0.0);
  for (std::size_t k = 1; k <= horizon; ++k) {
    const double p = t.value[k - 1];
    const double denom = nu + 2.0 * p * dt * dt;
    t.gain[k] = -2.0 * p * dt / denom;
    t.value[k] = 0.5 + p * nu / denom;
  }
  return t;
}

namespace detail {

inline std::vector<double> open_loop_means(double y0, std::span<const double> controls, double dt) {
  std::vector<double> ys(controls.size() + 1);
  ys[0] = y0;
  for (std::size_t k = 0; k < controls.size(); ++k)
    ys[k + 1] = ys[k] + dt * controls[k];
  return ys;
}

inline double open_loop_cost(double y0, std::span<const double> controls, double dt, double nu) {
  double y = y0;
  double sum = 0.0;
  for (double v : controls) {
    sum += 0.5 * y * y + 0.5 * nu * v * v;
    y += dt * v;
  }
  return sum;
}

/// dJ/dv_j = nu v_j + dt * sum_{k>j} Y_k, accumulated backwards.
inline void open_loop_gradient(double y0, std::span<const double> controls, double dt, double nu,
                               std::span<double> grad) {
  const auto ys = open_loop_means(y0, controls, dt);
  double tail = 0.0;
  for (std::size_t j = controls.size(); j-- > 0;) {
    grad[j] = nu * controls[j] + dt * tail;
    tail += ys[j];
  }
}

inline double clip(double v, double bound) { return std::clamp(v, -bound, bound); }

inline HorizonSolution solve_riccati(double y0, std::size_t window, const MpcConfig& mpc) {
  const double dt = mpc.model.dt;
  const auto table = riccati_table(window, mpc.cost.nu, dt);
  HorizonSolution sol;
  sol.solver = HorizonSolver::RiccatiClosedForm;
  sol.controls.resize(window);
  double y = y0;
  for (std::size_t k = 0; k < window; ++k) {
    sol.controls[k] = table.gain[window - k] * y;
    y += dt * sol.controls[k];
  }
  sol.means = open_loop_means(y0, sol.controls, dt);
  sol.value = table.value[window] * y0 * y0;
  return sol;
}

/**
 * Accelerated projected gradient with constant momentum for an L-smooth,
 * nu-strongly convex objective. L uses ||A||_2^2 <= ||A||_1 ||A||_inf for the
 * strictly lower-triangular summation matrix A.
 */
inline HorizonSolution solve_projected_gradient(double y0, std::size_t window, const MpcConfig& mpc) {
  const double dt = mpc.model.dt;
  const double nu = mpc.cost.nu;
  const double bound = mpc.model.control_bound.value_or(std::numeric_limits<double>::infinity());
  const double n1 = static_cast<double>(window - 1);
  const double lipschitz = nu + dt * dt * n1 * n1;
  const double momentum = (std::sqrt(lipschitz) - std::sqrt(nu)) / (std::sqrt(lipschitz) + std::sqrt(nu));
  const double threshold = mpc.tolerance * (1.0 + y0 * y0);

  // With a bound the unconstrained closed form, clipped onto U, is the warm start.
  std::vector<double> x(window, 0.0);
  if (mpc.model.control_bound) {
    x = solve_riccati(y0, window, mpc).controls;
    for (double& v : x)
      v = clip(v, bound);
  }
  std::vector<double> prev = x;
  std::vector<double> look(window);
  std::vector<double> grad(window);

  auto residual_at = [&](const std::vector<double>& v) {
    open_loop_gradient(y0, v, dt, nu, grad);
    double r = 0.0;
    for (std::size_t j = 0; j < window; ++j)
      r = std::max(r, std::abs(v[j] - clip(v[j] - grad[j] / lipschitz, bound)));
    return r * lipschitz;
  };

  HorizonSolution sol;
  sol.solver = HorizonSolver::ProjectedGradient;
  double residual = residual_at(x);
  std::size_t iter = 0;
  while (residual > threshold) {
    if (iter == mpc.max_iters)
      throw SolverError("solve_horizon: projected gradient hit the iteration limit", residual);
    for (std::size_t j = 0; j < window; ++j)
      look[j] = x[j] + momentum * (x[j] - prev[j]);
    open_loop_gradient(y0, look, dt, nu, grad);
    prev = x;
    for (std::size_t j = 0; j < window; ++j)
      x[j] = clip(look[j] - grad[j] / lipschitz, bound);
    residual = residual_at(x);
    ++iter;
  }
  sol.controls = std::move(x);
  sol.means = open_loop_means(y0, sol.controls, dt);
  sol.value = open_loop_cost(y0, sol.controls, dt, nu);
  sol.iterations = iter;
  sol.residual = residual;
  return sol;
}

/// Any window >= 1; the public entry points enforce N >= 2.
inline HorizonSolution solve_window(double y0, std::size_t window, const MpcConfig& mpc) {
  const bool constrained = mpc.model.control_bound.has_value();
  if (mpc.solver == HorizonSolver::ProjectedGradient || constrained)
    return solve_projected_gradient(y0, window, mpc);
  return solve_riccati(y0, window, mpc);
}

} // namespace detail

/**
 * @brief Solves the horizon-N problem from mean Y0.
 *
 * RiccatiClosedForm is exact for the unconstrained problem. When a control
 * bound is set the projected gradient solver runs regardless of `mpc.solver`.
 */
inline HorizonSolution solve_horizon(double y0, const MpcConfig& mpc) {
  mpc.validate();
  return detail::solve_window(y0, mpc.horizon, mpc);
}

/// First control of the horizon solution.
inline double mpc_feedback(double mean, const MpcConfig& mpc) { return solve_horizon(mean, mpc).controls.front(); }

/// Instantaneous control: the N = 2, dt = 1 horizon solution, -Y / (1 + nu).
inline double instantaneous_feedback(double mean, double nu) { return -mean / (1.0 + nu); }

/// How the prediction window behaves on a run of fixed length T.
enum class HorizonWindow {
  Fixed,        ///< always N steps ahead (standard receding horizon)
  ClippedToRun, ///< min(N, T - n) steps: never predicts past the end of the run
};

/**
 * @brief Receding-horizon closed loop: solve, apply v_0, step, repeat for T steps.
 *
 * Works on the particle ensemble or directly on its moments. Costs are priced
 * with mpc.cost on the pre-step state.
 */
template <SystemState State>
Trajectory<State> closed_loop(const State& initial, const MpcConfig& mpc, std::size_t steps,
                              HorizonWindow window = HorizonWindow::Fixed,
                              const SimulateOptions<State>& opts = {}) {
  mpc.validate();
  if (steps == 0)
    throw InvalidInput("closed_loop: T must be at least 1");
  std::size_t n = 0;
  Feedback<State> feedback = [&](const State& s) {
    std::size_t w = mpc.horizon;
    if (window == HorizonWindow::ClippedToRun)
      w = std::min(w, steps - n);
    ++n;
    return detail::solve_window(summarize(s).mean, w, mpc).controls.front();
  };
  return simulate<State>(initial, Policy<State>{std::move(feedback)}, steps, mpc.model, mpc.cost, opts);
}

} // namespace mfmpc
