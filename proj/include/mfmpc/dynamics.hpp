#pragma once

/**
 * @file
 * @brief Discrete-time interacting-particle dynamics and its reduction to moments.
 *
 * Particle update for M agents and a scalar control shared by all of them:
 *
 *   x_i' = x_i + (dt / M) * sum_j P * phi(x_j - x_i) + dt * u
 *
 * With the alignment kernel phi(r) = r the interaction collapses to
 * dt * P * (mean - x_i), the mean moves by dt * u and the variance shrinks by
 * (1 - dt * P)^2 per step independently of the control.
 */

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <type_traits>
#include <variant>
#include <vector>

#include "errors.hpp"
#include "measures.hpp"

namespace mfmpc {

/// phi(r) = r, scaled by the kernel gain.
struct LinearAlignment {};

/// User supplied phi. `antisymmetric` promises phi(-r) = -phi(r), which makes
/// the mean dynamics control-only and lets the reduced MPC route apply.
struct CustomKernel {
  std::function<double(double)> phi;
  bool antisymmetric{false};
};

using Kernel = std::variant<LinearAlignment, CustomKernel>;

struct ModelConfig {
  Kernel kernel{LinearAlignment{}};
  double kernel_gain{1.0};
  double dt{1.0};
  double nu{1.0};
  std::optional<double> control_bound{};
  Interval domain{};

  bool linear_alignment() const noexcept { return std::holds_alternative<LinearAlignment>(kernel); }

  /// The mean obeys Y' = Y + dt * u exactly.
  bool mean_reducible() const noexcept {
    if (linear_alignment())
      return true;
    return std::get<CustomKernel>(kernel).antisymmetric;
  }

  /// Throws InvalidInput on a broken config, returns non-fatal warnings.
  std::vector<std::string> validate() const {
    if (!(dt > 0.0))
      throw InvalidInput("ModelConfig: dt must be positive");
    if (!(nu > 0.0))
      throw InvalidInput("ModelConfig: nu must be positive");
    if (!(kernel_gain >= 0.0))
      throw InvalidInput("ModelConfig: kernel_gain must be nonnegative");
    if (control_bound && !(*control_bound >= 0.0))
      throw InvalidInput("ModelConfig: control_bound must be nonnegative");
    if (!(domain.lo < domain.hi))
      throw InvalidInput("ModelConfig: domain must satisfy lo < hi");
    if (!linear_alignment() && !std::get<CustomKernel>(kernel).phi)
      throw InvalidInput("ModelConfig: custom kernel has no function");
    std::vector<std::string> warnings;
    if (linear_alignment() && dt * kernel_gain > 1.0)
      warnings.emplace_back("dt * kernel_gain > 1: particles overshoot the mean and the variance no "
                            "longer contracts monotonically");
    return warnings;
  }
};

/// O(M^2) pairwise interaction sum. Used for custom kernels and as a reference path.
inline EmpiricalMeasure step_particles_pairwise(const EmpiricalMeasure& f, double u, const ModelConfig& cfg,
                                                const std::function<double(double)>& phi) {
  const auto xs = f.particles();
  const double m = static_cast<double>(xs.size());
  std::vector<double> next(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double xi = xs[i];
    const double interaction = pairwise_sum(xs, [&](double xj) { return phi(xj - xi); });
    next[i] = xi + cfg.dt / m * cfg.kernel_gain * interaction + cfg.dt * u;
  }
  return EmpiricalMeasure(std::move(next), f.domain());
}

inline EmpiricalMeasure step_particles(const EmpiricalMeasure& f, double u, const ModelConfig& cfg) {
  if (const auto* custom = std::get_if<CustomKernel>(&cfg.kernel))
    return step_particles_pairwise(f, u, cfg, custom->phi);

  const auto xs = f.particles();
  const double mean = pairwise_sum(xs) / static_cast<double>(xs.size());
  const double pull = cfg.dt * cfg.kernel_gain;
  const double shift = cfg.dt * u;
  std::vector<double> next(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i)
    next[i] = xs[i] + pull * (mean - xs[i]) + shift;
  return EmpiricalMeasure(std::move(next), f.domain());
}

/// Y' = Y + dt * u. Valid whenever cfg.mean_reducible().
inline double step_mean(double mean, double u, const ModelConfig& cfg) { return mean + cfg.dt * u; }

/**
 * @brief Second moment of the pushed-forward ensemble under the alignment map.
 *
 * With a = dt * P the particle map is x' = (1 - a) x + a Y + dt u, so
 * E' = (1-a)^2 E + 2 (1-a) Y (a Y + dt u) + (a Y + dt u)^2.
 */
inline double step_second_moment(double mean, double second, double u, const ModelConfig& cfg) {
  if (!cfg.linear_alignment())
    throw InvalidInput("step_second_moment: closed form exists only for the alignment kernel");
  if (second < mean * mean - 1e-12 * std::max(1.0, std::abs(second)))
    throw InvalidInput("step_second_moment: second moment below squared mean");
  const double a = cfg.dt * cfg.kernel_gain;
  const double keep = 1.0 - a;
  const double drift = a * mean + cfg.dt * u;
  return keep * keep * second + 2.0 * keep * mean * drift + drift * drift;
}

/// Moment-level step: mean, second moment and (separately, to avoid
/// cancellation) the variance, which contracts by (1 - dt P)^2.
inline MomentSummary step_moments(const MomentSummary& s, double u, const ModelConfig& cfg) {
  const double keep = 1.0 - cfg.dt * cfg.kernel_gain;
  return {step_mean(s.mean, u, cfg), step_second_moment(s.mean, s.second_moment, u, cfg),
          keep * keep * s.variance};
}

inline MomentSummary summarize(const EmpiricalMeasure& f) { return moments(f); }
inline MomentSummary summarize(const MomentSummary& s) { return s; }

inline EmpiricalMeasure advance(const EmpiricalMeasure& f, double u, const ModelConfig& cfg) {
  return step_particles(f, u, cfg);
}
inline MomentSummary advance(const MomentSummary& s, double u, const ModelConfig& cfg) {
  return step_moments(s, u, cfg);
}

inline bool outside(const EmpiricalMeasure& f) { return f.outside_domain(); }
inline bool outside(const MomentSummary&) { return false; }

/// A state the simulators know how to advance: a particle ensemble or its moments.
template <class S>
concept SystemState = std::same_as<S, EmpiricalMeasure> || std::same_as<S, MomentSummary>;

/// Anything that prices a (state summary, control) pair.
template <class C>
concept StageCost = requires(const C& c, const MomentSummary& s, double u) {
  { c(s, u) } -> std::convertible_to<double>;
};

/**
 * @brief Time-indexed record of a run.
 *
 * `moments` always holds steps + 1 entries. `states` holds the same number of
 * full states when recording was requested and is empty otherwise.
 */
template <SystemState State>
struct Trajectory {
  std::vector<State> states;
  std::vector<MomentSummary> moments;
  std::vector<double> controls;
  std::vector<double> step_costs;
  double total_cost{0.0};
  bool left_domain{false};

  std::size_t steps() const noexcept { return controls.size(); }

  /// Length and summation invariants.
  bool consistent() const {
    if (moments.size() != controls.size() + 1 || step_costs.size() != controls.size())
      return false;
    if (!states.empty() && states.size() != moments.size())
      return false;
    double sum = 0.0;
    for (double c : step_costs)
      sum += c;
    return sum == total_cost;
  }
};

struct ControlSequence {
  std::vector<double> values;
};

template <SystemState State>
using Feedback = std::function<double(const State&)>;

template <SystemState State>
using Policy = std::variant<ControlSequence, Feedback<State>>;

template <SystemState State>
struct SimulateOptions {
  bool record_states{true};
  /// Called with (n, state) for n = 0..steps. Lets callers stream large ensembles.
  std::function<void(std::size_t, const State&)> observer{};
};

/**
 * @brief Runs `steps` steps of the dynamics under a fixed sequence or a feedback.
 *
 * Step costs are priced on the state before the control is applied, and
 * accumulated left to right into total_cost.
 */
template <SystemState State, StageCost Cost>
Trajectory<State> simulate(const State& initial, const Policy<State>& policy, std::size_t steps,
                           const ModelConfig& cfg, const Cost& cost, const SimulateOptions<State>& opts = {}) {
  if (const auto* seq = std::get_if<ControlSequence>(&policy); seq && seq->values.size() < steps)
    throw InvalidInput("simulate: control sequence shorter than the number of steps");
  if constexpr (std::is_same_v<State, MomentSummary>) {
    if (!cfg.linear_alignment())
      throw InvalidInput("simulate: moment-level simulation needs the alignment kernel");
  }

  Trajectory<State> traj;
  traj.moments.reserve(steps + 1);
  traj.controls.reserve(steps);
  traj.step_costs.reserve(steps);

  State current = initial;
  MomentSummary summary = summarize(current);
  auto record = [&](std::size_t n) {
    traj.moments.push_back(summary);
    if (opts.record_states)
      traj.states.push_back(current);
    traj.left_domain = traj.left_domain || outside(current);
    if (opts.observer)
      opts.observer(n, current);
  };
  record(0);

  for (std::size_t n = 0; n < steps; ++n) {
    const double u = std::visit(
        [&](const auto& p) -> double {
          if constexpr (std::is_same_v<std::decay_t<decltype(p)>, ControlSequence>)
            return p.values[n];
          else
            return p(current);
        },
        policy);
    const double c = cost(summary, u);
    traj.controls.push_back(u);
    traj.step_costs.push_back(c);
    traj.total_cost += c;
    current = advance(current, u, cfg);
    summary = summarize(current);
    record(n + 1);
  }
  return traj;
}

} // namespace mfmpc
