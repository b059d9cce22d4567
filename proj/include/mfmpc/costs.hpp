#pragma once

#include <cstddef>
#include <utility>

#include "dynamics.hpp"
#include "errors.hpp"
#include "measures.hpp"

namespace mfmpc {

/// l(f, u) = Y^2 / 2 + nu u^2 / 2 with Y the mean of f.
struct QuadraticMeanCost {
  double nu{1.0};

  explicit QuadraticMeanCost(double regularization = 1.0) : nu(regularization) {
    if (!(nu > 0.0))
      throw InvalidInput("QuadraticMeanCost: nu must be positive");
  }

  double operator()(const MomentSummary& s, double u) const { return 0.5 * s.mean * s.mean + 0.5 * nu * u * u; }

  /// min_u l(f, u), attained at u = 0.
  double optimal(const MomentSummary& s) const { return 0.5 * s.mean * s.mean; }
};

/// A stage cost that also knows its pointwise minimum over controls.
template <class C>
concept MeanFieldCost = StageCost<C> && requires(const C& c, const MomentSummary& s) {
  { c.optimal(s) } -> std::convertible_to<double>;
};

template <StageCost Cost>
double running_cost(const EmpiricalMeasure& f, double u, const Cost& cost) {
  return cost(moments(f), u);
}
template <StageCost Cost>
double running_cost(double mean, double u, const Cost& cost) {
  return cost(MomentSummary::point_mass(mean), u);
}

template <MeanFieldCost Cost>
double optimal_running_cost(const EmpiricalMeasure& f, const Cost& cost) {
  return cost.optimal(moments(f));
}
template <MeanFieldCost Cost>
double optimal_running_cost(double mean, const Cost& cost) {
  return cost.optimal(MomentSummary::point_mass(mean));
}

/// J_N = sum_{n=0}^{N-1} l(f_n, u_n), summed left to right like Trajectory::total_cost.
template <SystemState State>
double horizon_cost(const Trajectory<State>& traj, std::size_t horizon) {
  if (horizon == 0)
    throw InvalidInput("horizon_cost: horizon must be positive");
  if (traj.step_costs.size() < horizon || traj.moments.size() < horizon)
    throw InvalidInput("horizon_cost: trajectory shorter than the horizon");
  double sum = 0.0;
  for (std::size_t n = 0; n < horizon; ++n)
    sum += traj.step_costs[n];
  return sum;
}

struct TruncatedCost {
  /// sum_{n=0}^{T} l(f_n, u_n)
  double value{0.0};
  /// l(f_T, u_T); small means the truncation captured the tail.
  double tail{0.0};
};

/// Infinite-horizon cost of a feedback, truncated after T steps (T + 1 terms).
template <SystemState State, StageCost Cost>
TruncatedCost truncated_infinite_cost(const State& initial, Feedback<State> feedback, std::size_t horizon,
                                      const ModelConfig& cfg, const Cost& cost) {
  if (horizon == 0)
    throw InvalidInput("truncated_infinite_cost: T must be at least 1");
  SimulateOptions<State> opts;
  opts.record_states = false;
  const auto traj = simulate<State>(initial, Policy<State>{std::move(feedback)}, horizon + 1, cfg, cost, opts);
  return {traj.total_cost, traj.step_costs.back()};
}

} // namespace mfmpc
