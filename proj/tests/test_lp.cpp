#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <optional>
#include <random>
#include <vector>

#include "mfmpc/bounds.hpp"
#include "mfmpc/lp.hpp"

#ifdef MFMPC_HAVE_BOOST_MP
#include <boost/multiprecision/cpp_int.hpp>
#endif

using namespace mfmpc;

namespace {

template <class T>
LinearConstraint<T> con(std::vector<T> a, Relation r, T b) {
  return {std::move(a), r, b};
}

} // namespace

TEST(SolveLp, TwoVariableVertex) {
  LpProblem<double> lp;
  lp.objective = {-1.0, -1.0};
  lp.constraints = {con<double>({1.0, 2.0}, Relation::LessEqual, 2.0), con<double>({2.0, 1.0}, Relation::LessEqual, 2.0)};
  const auto r = solve_lp(lp);
  ASSERT_EQ(r.status, LpStatus::Optimal);
  EXPECT_NEAR(r.value, -4.0 / 3.0, 1e-14);
  EXPECT_NEAR(r.point[0], 2.0 / 3.0, 1e-14);
  EXPECT_NEAR(r.point[1], 2.0 / 3.0, 1e-14);
}

TEST(SolveLp, InfeasibleAndUnbounded) {
  LpProblem<double> inf;
  inf.objective = {1.0};
  inf.constraints = {con<double>({1.0}, Relation::GreaterEqual, 1.0), con<double>({1.0}, Relation::LessEqual, 0.0)};
  EXPECT_EQ(solve_lp(inf).status, LpStatus::Infeasible);

  LpProblem<double> unb;
  unb.objective = {-1.0, 0.0};
  unb.constraints = {con<double>({1.0, -1.0}, Relation::LessEqual, 1.0)};
  EXPECT_EQ(solve_lp(unb).status, LpStatus::Unbounded);
  EXPECT_STREQ(to_string(LpStatus::Unbounded), "unbounded");
}

TEST(SolveLp, EqualityFreeAndShiftedVariables) {
  // min x + 2y  s.t. x + y = 1, x free, y >= -2  -> y = -2, x = 3, value -1
  LpProblem<double> lp;
  lp.objective = {1.0, 2.0};
  lp.constraints = {con<double>({1.0, 1.0}, Relation::Equal, 1.0)};
  lp.lower_bounds = {std::nullopt, -2.0};
  const auto r = solve_lp(lp);
  ASSERT_EQ(r.status, LpStatus::Optimal);
  EXPECT_NEAR(r.point[0], 3.0, 1e-12);
  EXPECT_NEAR(r.point[1], -2.0, 1e-12);
  EXPECT_NEAR(r.value, -1.0, 1e-12);
}

TEST(SolveLp, RedundantEqualities) {
  LpProblem<double> lp;
  lp.objective = {1.0, 1.0};
  lp.constraints = {con<double>({1.0, 1.0}, Relation::Equal, 2.0), con<double>({2.0, 2.0}, Relation::Equal, 4.0),
                    con<double>({1.0, 0.0}, Relation::GreaterEqual, 0.5)};
  const auto r = solve_lp(lp);
  ASSERT_EQ(r.status, LpStatus::Optimal);
  EXPECT_NEAR(r.value, 2.0, 1e-12);
}

TEST(SolveLp, DegenerateCyclingExampleTerminates) {
  // Beale's example cycles under the textbook largest-coefficient rule.
  LpProblem<double> lp;
  lp.objective = {-0.75, 150.0, -0.02, 6.0};
  lp.constraints = {con<double>({0.25, -60.0, -0.04, 9.0}, Relation::LessEqual, 0.0),
                    con<double>({0.5, -90.0, -0.02, 3.0}, Relation::LessEqual, 0.0),
                    con<double>({0.0, 0.0, 1.0, 0.0}, Relation::LessEqual, 1.0)};
  const auto r = solve_lp(lp);
  ASSERT_EQ(r.status, LpStatus::Optimal);
  EXPECT_NEAR(r.value, -0.05, 1e-12);
  EXPECT_NEAR(r.point[0], 0.04, 1e-12);
  EXPECT_NEAR(r.point[2], 1.0, 1e-12);
}

TEST(SolveLp, InputValidation) {
  LpProblem<double> lp;
  EXPECT_THROW(solve_lp(lp), InvalidInput);
  lp.objective = {1.0, 1.0};
  lp.constraints = {con<double>({1.0}, Relation::LessEqual, 1.0)};
  EXPECT_THROW(solve_lp(lp), InvalidInput);
  lp.constraints.clear();
  lp.lower_bounds = {0.0};
  EXPECT_THROW(solve_lp(lp), InvalidInput);
  LpProblem<double> big;
  big.objective.assign(LpProblem<double>::kMaxVariables + 1, 1.0);
  EXPECT_THROW(solve_lp(big), InvalidInput);
}

TEST(AlphaLp, MatchesClosedForm) {
  for (double nu : {1.0, 10.0, 100.0, 1000.0})
    for (std::size_t n = 2; n <= 20; ++n) {
      const auto p = controllability_from_nu(nu);
      EXPECT_NEAR(alpha_via_lp(p, n), alpha_N(p, n), 1e-9) << "nu=" << nu << " N=" << n;
    }
}

TEST(AlphaLp, GenericControllabilityConstants) {
  for (double c : {1.0, 1.5, 3.0})
    for (double sigma : {0.0, 0.3, 0.8})
      for (std::size_t n : {2u, 4u, 9u}) {
        const ControllabilityParams p{c, sigma};
        EXPECT_NEAR(alpha_via_lp(p, n), alpha_N(p, n), 1e-9) << "C=" << c << " sigma=" << sigma << " N=" << n;
      }
}

TEST(AlphaLp, HomogeneousInScale) {
  const auto p = controllability_from_nu(10.0);
  for (double scale : {1e-3, 7.0, 1e4}) {
    const auto r = solve_lp(alpha_lp_problem(p, 8, scale));
    ASSERT_EQ(r.status, LpStatus::Optimal);
    EXPECT_NEAR(r.value / scale, alpha_N(p, 8), 1e-9);
  }
}

#ifdef MFMPC_HAVE_BOOST_MP

namespace {

using Q = boost::multiprecision::cpp_rational;

/// Exact optimum by enumerating every basis of the inequality form {A x <= b, x >= 0}.
std::optional<Q> vertex_enumeration(const std::vector<std::vector<Q>>& a, const std::vector<Q>& b,
                                    const std::vector<Q>& c) {
  const std::size_t n = c.size();
  // Rows of the full system: A x <= b followed by -x <= 0.
  std::vector<std::vector<Q>> rows = a;
  std::vector<Q> rhs = b;
  for (std::size_t j = 0; j < n; ++j) {
    std::vector<Q> e(n, Q(0));
    e[j] = Q(-1);
    rows.push_back(e);
    rhs.push_back(Q(0));
  }
  const std::size_t m = rows.size();
  std::optional<Q> best;
  std::vector<std::size_t> pick(n);
  std::function<void(std::size_t, std::size_t)> choose = [&](std::size_t depth, std::size_t start) {
    if (depth == n) {
      std::vector<std::vector<Q>> aug(n, std::vector<Q>(n + 1));
      for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t k = 0; k < n; ++k)
          aug[r][k] = rows[pick[r]][k];
        aug[r][n] = rhs[pick[r]];
      }
      for (std::size_t col = 0; col < n; ++col) {
        std::size_t piv = col;
        while (piv < n && aug[piv][col] == 0)
          ++piv;
        if (piv == n)
          return; // singular
        std::swap(aug[col], aug[piv]);
        for (std::size_t r = 0; r < n; ++r) {
          if (r == col || aug[r][col] == 0)
            continue;
          const Q f = aug[r][col] / aug[col][col];
          for (std::size_t k = col; k <= n; ++k)
            aug[r][k] -= f * aug[col][k];
        }
      }
      std::vector<Q> x(n);
      for (std::size_t k = 0; k < n; ++k)
        x[k] = aug[k][n] / aug[k][k];
      for (std::size_t r = 0; r < m; ++r) {
        Q lhs = 0;
        for (std::size_t k = 0; k < n; ++k)
          lhs += rows[r][k] * x[k];
        if (lhs > rhs[r])
          return;
      }
      Q val = 0;
      for (std::size_t k = 0; k < n; ++k)
        val += c[k] * x[k];
      if (!best || val < *best)
        best = val;
      return;
    }
    for (std::size_t r = start; r < m; ++r) {
      pick[depth] = r;
      choose(depth + 1, r + 1);
    }
  };
  choose(0, 0);
  return best;
}

} // namespace

TEST(SolveLpExact, RationalSimplexMatchesVertexEnumeration) {
  std::mt19937_64 rng(31);
  std::uniform_int_distribution<int> coef(-5, 5);
  std::uniform_int_distribution<int> pos(1, 6);
  int checked = 0;
  for (int trial = 0; trial < 150; ++trial) {
    const std::size_t n = 2 + trial % 2;
    const std::size_t m = 2 + trial % 3;
    std::vector<std::vector<Q>> a(m, std::vector<Q>(n));
    std::vector<Q> b(m), c(n);
    for (auto& row : a)
      for (auto& v : row)
        v = coef(rng);
    for (auto& v : b)
      v = pos(rng);
    for (auto& v : c)
      v = coef(rng);
    // A box keeps every instance bounded.
    for (std::size_t j = 0; j < n; ++j) {
      std::vector<Q> e(n, Q(0));
      e[j] = 1;
      a.push_back(e);
      b.push_back(Q(pos(rng)));
    }
    const auto oracle = vertex_enumeration(a, b, c);
    ASSERT_TRUE(oracle.has_value()); // x = 0 is feasible since b > 0

    LpProblem<Q> exact;
    exact.objective = c;
    LpProblem<double> approx;
    for (const auto& v : c)
      approx.objective.push_back(static_cast<double>(v));
    for (std::size_t r = 0; r < a.size(); ++r) {
      exact.constraints.push_back({a[r], Relation::LessEqual, b[r]});
      std::vector<double> row;
      for (const auto& v : a[r])
        row.push_back(static_cast<double>(v));
      approx.constraints.push_back({row, Relation::LessEqual, static_cast<double>(b[r])});
    }
    const auto re = solve_lp(exact);
    ASSERT_EQ(re.status, LpStatus::Optimal);
    EXPECT_EQ(re.value, *oracle) << "trial " << trial;
    const auto rd = solve_lp(approx);
    ASSERT_EQ(rd.status, LpStatus::Optimal);
    EXPECT_NEAR(rd.value, static_cast<double>(*oracle), 1e-9) << "trial " << trial;
    ++checked;
  }
  EXPECT_EQ(checked, 150);
}

TEST(SolveLpExact, AlphaLpWithRationalGammas) {
  // C = 5/4, sigma = 1/4 (nu = 1). gamma_i = C (1 - sigma^i) / (1 - sigma) is rational,
  // so the exact simplex optimum must equal the closed form evaluated in rationals.
  const Q c(5, 4), sigma(1, 4);
  for (std::size_t n = 2; n <= 7; ++n) {
    auto gamma = [&](std::size_t i) -> Q {
      Q s = 0, t = 1;
      for (std::size_t k = 0; k < i; ++k) {
        s += t;
        t *= sigma;
      }
      return c * s;
    };
    LpProblem<Q> lp;
    lp.objective.assign(n + 1, Q(1));
    lp.objective[n] = Q(-1);
    std::vector<Q> norm(n + 1, Q(0));
    norm[0] = 1;
    lp.constraints.push_back({norm, Relation::Equal, Q(1)});
    for (std::size_t k = 0; k + 2 <= n; ++k) {
      std::vector<Q> row(n + 1, Q(0));
      for (std::size_t m = k; m < n; ++m)
        row[m] = 1;
      row[k] -= gamma(n - k);
      lp.constraints.push_back({row, Relation::LessEqual, Q(0)});
    }
    for (std::size_t j = 0; j + 2 <= n; ++j) {
      std::vector<Q> row(n + 1, Q(0));
      row[n] = 1;
      for (std::size_t m = 1; m <= j; ++m)
        row[m] = -1;
      row[j + 1] -= gamma(n - j);
      lp.constraints.push_back({row, Relation::LessEqual, Q(0)});
    }
    const auto r = solve_lp(lp);
    ASSERT_EQ(r.status, LpStatus::Optimal);
    Q prod_g = 1, prod_gm1 = 1;
    for (std::size_t i = 2; i <= n; ++i) {
      prod_g *= gamma(i);
      prod_gm1 *= gamma(i) - 1;
    }
    const Q closed = 1 - (gamma(n) - 1) * prod_gm1 / (prod_g - prod_gm1);
    EXPECT_EQ(r.value, closed) << "N=" << n;
    EXPECT_NEAR(static_cast<double>(closed), alpha_N(controllability_from_nu(1.0), n), 1e-14);
  }
}

#endif
