#pragma once

/**
 * @file
 * @brief Small dense linear programs, and the LP that certifies alpha_N independently.
 *
 * solve_lp is a two-phase tableau simplex with Bland's rule. It is a template
 * over the scalar so the same code runs in double and in an exact rational
 * type; for non-floating scalars every tolerance is zero.
 */

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <type_traits>
#include <vector>

#include "bounds.hpp"
#include "errors.hpp"

namespace mfmpc {

enum class Relation { LessEqual, GreaterEqual, Equal };

template <class T>
struct LinearConstraint {
  std::vector<T> coeffs;
  Relation relation{Relation::LessEqual};
  T rhs{};
};

/// minimize objective . x subject to the constraints and x_j >= lower_bounds[j].
template <class T>
struct LpProblem {
  static constexpr std::size_t kMaxVariables = 500;
  static constexpr std::size_t kMaxConstraints = 2000;

  std::vector<T> objective;
  std::vector<LinearConstraint<T>> constraints;
  /// Empty means every variable is >= 0. std::nullopt marks a free variable.
  std::vector<std::optional<T>> lower_bounds;

  std::size_t variables() const noexcept { return objective.size(); }

  std::optional<T> lower_bound(std::size_t j) const {
    if (lower_bounds.empty())
      return T(0);
    return lower_bounds[j];
  }

  void validate() const {
    if (objective.empty())
      throw InvalidInput("LpProblem: no variables");
    if (objective.size() > kMaxVariables || constraints.size() > kMaxConstraints)
      throw InvalidInput("LpProblem: problem exceeds the dense solver limits");
    if (!lower_bounds.empty() && lower_bounds.size() != objective.size())
      throw InvalidInput("LpProblem: lower_bounds length differs from the objective");
    for (const auto& c : constraints)
      if (c.coeffs.size() != objective.size())
        throw InvalidInput("LpProblem: constraint length differs from the objective");
  }
};

enum class LpStatus { Optimal, Infeasible, Unbounded };

inline const char* to_string(LpStatus s) {
  switch (s) {
  case LpStatus::Optimal:
    return "optimal";
  case LpStatus::Infeasible:
    return "infeasible";
  case LpStatus::Unbounded:
    return "unbounded";
  }
  return "unknown";
}

template <class T>
struct LpResult {
  LpStatus status{LpStatus::Infeasible};
  T value{};
  std::vector<T> point;
  std::size_t pivots{0};
};

/// Pivot/ratio tolerance; zero for exact scalars.
template <class T>
T lp_epsilon() {
  if constexpr (std::is_floating_point_v<T>)
    return T(1e-11);
  else
    return T(0);
}

/// Absolute slack allowed when re-verifying the returned point.
template <class T>
T lp_feasibility_tolerance() {
  if constexpr (std::is_floating_point_v<T>)
    return T(1e-9);
  else
    return T(0);
}

namespace detail {

template <class T>
T magnitude(const T& x) {
  return x < T(0) ? T(-x) : x;
}

template <class T>
class Tableau {
public:
  std::vector<std::vector<T>> rows;
  std::vector<T> rhs;
  std::vector<std::size_t> basis;
  std::vector<T> reduced;
  T objective_value{};
  std::vector<bool> allowed;
  std::size_t pivots{0};

  std::size_t columns() const { return allowed.size(); }

  void price(const std::vector<T>& cost) {
    reduced = cost;
    objective_value = T(0);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const T cb = cost[basis[i]];
      if (cb == T(0))
        continue;
      for (std::size_t j = 0; j < columns(); ++j)
        reduced[j] -= cb * rows[i][j];
      objective_value += cb * rhs[i];
    }
  }

  void pivot(std::size_t r, std::size_t c) {
    const T piv = rows[r][c];
    for (auto& v : rows[r])
      v /= piv;
    rhs[r] /= piv;
    rows[r][c] = T(1);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (i == r)
        continue;
      const T f = rows[i][c];
      if (f == T(0))
        continue;
      for (std::size_t j = 0; j < columns(); ++j)
        rows[i][j] -= f * rows[r][j];
      rows[i][c] = T(0);
      rhs[i] -= f * rhs[r];
    }
    const T f = reduced[c];
    if (f != T(0)) {
      for (std::size_t j = 0; j < columns(); ++j)
        reduced[j] -= f * rows[r][j];
      reduced[c] = T(0);
      objective_value += f * rhs[r];
    }
    basis[r] = c;
    ++pivots;
  }

  /// Bland's rule: lowest-index improving column, ties in the ratio test go to the lowest basic index.
  /// Returns false when the objective is unbounded below.
  bool optimize() {
    const T eps = lp_epsilon<T>();
    const std::size_t limit = 200 * (rows.size() + columns()) + 1000;
    while (true) {
      std::optional<std::size_t> entering;
      for (std::size_t j = 0; j < columns(); ++j)
        if (allowed[j] && reduced[j] < -eps) {
          entering = j;
          break;
        }
      if (!entering)
        return true;
      const std::size_t c = *entering;

      std::optional<std::size_t> leaving;
      T best{};
      for (std::size_t i = 0; i < rows.size(); ++i) {
        if (!(rows[i][c] > eps))
          continue;
        const T ratio = rhs[i] / rows[i][c];
        if (!leaving || ratio < best - eps * (T(1) + magnitude(best))) {
          leaving = i;
          best = ratio;
        } else if (!(ratio > best + eps * (T(1) + magnitude(best))) && basis[i] < basis[*leaving]) {
          leaving = i;
        }
      }
      if (!leaving)
        return false;
      if (pivots > limit)
        throw SolverError("solve_lp: pivot limit exceeded", 0.0);
      pivot(*leaving, c);
    }
  }
};

} // namespace detail

/**
 * @brief Minimizes a small dense LP.
 *
 * Variables with a finite lower bound are shifted to start at zero, free
 * variables are split into a positive and a negative part. The optimal point
 * is re-checked against the original constraints before it is returned.
 */
template <class T>
LpResult<T> solve_lp(const LpProblem<T>& problem) {
  problem.validate();
  const std::size_t nvars = problem.variables();
  const T eps = lp_epsilon<T>();

  // Column map: original variable j -> (positive column, optional negative column, shift).
  std::vector<std::size_t> pos_col(nvars);
  std::vector<std::optional<std::size_t>> neg_col(nvars);
  std::vector<T> shift(nvars, T(0));
  std::size_t ncols = 0;
  for (std::size_t j = 0; j < nvars; ++j) {
    pos_col[j] = ncols++;
    if (const auto lb = problem.lower_bound(j))
      shift[j] = *lb;
    else
      neg_col[j] = ncols++;
  }
  const std::size_t structural = ncols;

  struct Row {
    std::vector<T> coeffs;
    Relation relation;
    T rhs;
  };
  std::vector<Row> rows;
  rows.reserve(problem.constraints.size());
  for (const auto& con : problem.constraints) {
    Row row{std::vector<T>(structural, T(0)), con.relation, con.rhs};
    for (std::size_t j = 0; j < nvars; ++j) {
      row.coeffs[pos_col[j]] = con.coeffs[j];
      if (neg_col[j])
        row.coeffs[*neg_col[j]] = -con.coeffs[j];
      row.rhs -= con.coeffs[j] * shift[j];
    }
    if (row.rhs < T(0)) {
      for (auto& v : row.coeffs)
        v = -v;
      row.rhs = -row.rhs;
      if (row.relation == Relation::LessEqual)
        row.relation = Relation::GreaterEqual;
      else if (row.relation == Relation::GreaterEqual)
        row.relation = Relation::LessEqual;
    }
    rows.push_back(std::move(row));
  }

  std::size_t slacks = 0;
  std::size_t artificials = 0;
  for (const auto& r : rows) {
    if (r.relation != Relation::Equal)
      ++slacks;
    if (r.relation != Relation::LessEqual)
      ++artificials;
  }
  const std::size_t first_artificial = structural + slacks;
  const std::size_t total = first_artificial + artificials;

  detail::Tableau<T> tab;
  tab.allowed.assign(total, true);
  tab.rows.assign(rows.size(), std::vector<T>(total, T(0)));
  tab.rhs.resize(rows.size());
  tab.basis.resize(rows.size());
  std::size_t next_slack = structural;
  std::size_t next_art = first_artificial;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < structural; ++j)
      tab.rows[i][j] = rows[i].coeffs[j];
    tab.rhs[i] = rows[i].rhs;
    switch (rows[i].relation) {
    case Relation::LessEqual:
      tab.rows[i][next_slack] = T(1);
      tab.basis[i] = next_slack++;
      break;
    case Relation::GreaterEqual:
      tab.rows[i][next_slack++] = T(-1);
      tab.rows[i][next_art] = T(1);
      tab.basis[i] = next_art++;
      break;
    case Relation::Equal:
      tab.rows[i][next_art] = T(1);
      tab.basis[i] = next_art++;
      break;
    }
  }

  LpResult<T> result;
  if (artificials > 0) {
    std::vector<T> phase1(total, T(0));
    for (std::size_t j = first_artificial; j < total; ++j)
      phase1[j] = T(1);
    tab.price(phase1);
    tab.optimize();
    T scale(1);
    for (const auto& r : tab.rhs)
      if (detail::magnitude(r) > scale)
        scale = detail::magnitude(r);
    if (tab.objective_value > lp_feasibility_tolerance<T>() * scale) {
      result.status = LpStatus::Infeasible;
      result.pivots = tab.pivots;
      return result;
    }
    // Drive remaining (zero-level) artificials out of the basis; drop redundant rows.
    for (std::size_t i = 0; i < tab.rows.size();) {
      if (tab.basis[i] < first_artificial) {
        ++i;
        continue;
      }
      std::optional<std::size_t> col;
      for (std::size_t j = 0; j < first_artificial; ++j)
        if (detail::magnitude(tab.rows[i][j]) > eps) {
          col = j;
          break;
        }
      if (col) {
        tab.pivot(i, *col);
        ++i;
      } else {
        tab.rows.erase(tab.rows.begin() + static_cast<std::ptrdiff_t>(i));
        tab.rhs.erase(tab.rhs.begin() + static_cast<std::ptrdiff_t>(i));
        tab.basis.erase(tab.basis.begin() + static_cast<std::ptrdiff_t>(i));
      }
    }
    for (std::size_t j = first_artificial; j < total; ++j)
      tab.allowed[j] = false;
  }

  std::vector<T> phase2(total, T(0));
  for (std::size_t j = 0; j < nvars; ++j) {
    phase2[pos_col[j]] = problem.objective[j];
    if (neg_col[j])
      phase2[*neg_col[j]] = -problem.objective[j];
  }
  tab.price(phase2);
  const bool bounded = tab.optimize();
  result.pivots = tab.pivots;
  if (!bounded) {
    result.status = LpStatus::Unbounded;
    return result;
  }

  std::vector<T> column_values(total, T(0));
  for (std::size_t i = 0; i < tab.rows.size(); ++i)
    column_values[tab.basis[i]] = tab.rhs[i];
  result.point.resize(nvars);
  for (std::size_t j = 0; j < nvars; ++j) {
    T x = column_values[pos_col[j]] + shift[j];
    if (neg_col[j])
      x -= column_values[*neg_col[j]];
    result.point[j] = x;
  }
  result.value = T(0);
  for (std::size_t j = 0; j < nvars; ++j)
    result.value += problem.objective[j] * result.point[j];
  result.status = LpStatus::Optimal;

  const T tol = lp_feasibility_tolerance<T>();
  for (std::size_t j = 0; j < nvars; ++j)
    if (const auto lb = problem.lower_bound(j); lb && result.point[j] < *lb - tol)
      throw SolverError("solve_lp: returned point violates a variable bound",
                        static_cast<double>(*lb - result.point[j]));
  for (const auto& con : problem.constraints) {
    T lhs(0);
    for (std::size_t j = 0; j < nvars; ++j)
      lhs += con.coeffs[j] * result.point[j];
    T violation(0);
    if (con.relation != Relation::GreaterEqual && lhs - con.rhs > violation)
      violation = lhs - con.rhs;
    if (con.relation != Relation::LessEqual && con.rhs - lhs > violation)
      violation = con.rhs - lhs;
    if (violation > tol)
      throw SolverError("solve_lp: returned point violates a constraint", static_cast<double>(violation));
  }
  return result;
}

/**
 * @brief The LP whose optimum is the tightest alpha certified by the inequality system.
 *
 * Variables are lambda_0..lambda_{N-1} followed by nu, all nonnegative, with
 * lambda_0 = `scale` (1 normalizes the homogeneous system). Objective:
 * minimize sum lambda_n - nu.
 */
inline LpProblem<double> alpha_lp_problem(const ControllabilityParams& p, std::size_t horizon, double scale = 1.0) {
  p.validate();
  if (horizon < 2)
    throw InvalidInput("alpha_lp_problem: horizon must be at least 2");
  const std::size_t n = horizon;
  const std::size_t nu_idx = n;
  LpProblem<double> lp;
  lp.objective.assign(n + 1, 1.0);
  lp.objective[nu_idx] = -1.0;

  LinearConstraint<double> norm{std::vector<double>(n + 1, 0.0), Relation::Equal, scale};
  norm.coeffs[0] = 1.0;
  lp.constraints.push_back(norm);

  // sum_{m=k}^{N-1} lambda_m - gamma_{N-k} lambda_k <= 0, k = 0..N-2
  for (std::size_t k = 0; k + 2 <= n; ++k) {
    LinearConstraint<double> c{std::vector<double>(n + 1, 0.0), Relation::LessEqual, 0.0};
    for (std::size_t m = k; m < n; ++m)
      c.coeffs[m] = 1.0;
    c.coeffs[k] -= gamma_value(p, n - k);
    lp.constraints.push_back(std::move(c));
  }
  // nu - sum_{m=0}^{j-1} lambda_{m+1} - gamma_{N-j} lambda_{j+1} <= 0, j = 0..N-2
  for (std::size_t j = 0; j + 2 <= n; ++j) {
    LinearConstraint<double> c{std::vector<double>(n + 1, 0.0), Relation::LessEqual, 0.0};
    c.coeffs[nu_idx] = 1.0;
    for (std::size_t m = 1; m <= j; ++m)
      c.coeffs[m] = -1.0;
    c.coeffs[j + 1] -= gamma_value(p, n - j);
    lp.constraints.push_back(std::move(c));
  }
  return lp;
}

/// Optimal value of alpha_lp_problem, i.e. the LP route to alpha_N.
inline double alpha_via_lp(const ControllabilityParams& p, std::size_t horizon) {
  const auto result = solve_lp(alpha_lp_problem(p, horizon));
  if (result.status != LpStatus::Optimal)
    throw SolverError(std::string("alpha_via_lp: LP is ") + to_string(result.status), 0.0);
  return result.value;
}

/// Both routes to alpha_N plus the feasibility certificate for one (C, sigma, N).
inline BoundResult evaluate_bound(const ControllabilityParams& p, std::size_t horizon, double nu = std::nan("")) {
  BoundResult r;
  r.nu = nu;
  r.N = horizon;
  r.params = p;
  r.gammas = gamma_sequence(p, horizon);
  r.alpha_closed_form = alpha_N(p, horizon);
  const auto lp = solve_lp(alpha_lp_problem(p, horizon));
  if (lp.status != LpStatus::Optimal)
    throw SolverError(std::string("evaluate_bound: LP is ") + to_string(lp.status), 0.0);
  r.alpha_lp = lp.value;
  std::vector<double> lambdas(lp.point.begin(), lp.point.begin() + static_cast<std::ptrdiff_t>(horizon));
  for (double& l : lambdas)
    l = std::max(l, 0.0); // vertex coordinates can come back as -1e-17
  const auto report = verify_inequalities(lambdas, lp.point[horizon], p, r.alpha_closed_form);
  r.feasible = r.alpha_closed_form > 0.0 && report.all_hold();
  return r;
}

inline BoundResult evaluate_bound_for_nu(double nu, std::size_t horizon) {
  return evaluate_bound(controllability_from_nu(nu), horizon, nu);
}

} // namespace mfmpc
