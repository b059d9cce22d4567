#pragma once

// Reference computations that share no code with the library.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <utility>
#include <vector>

#include "mfmpc/measures.hpp"

namespace oracle {

/// sum_k Y_k^2 / 2 + nu v_k^2 / 2 with Y_{k+1} = Y_k + dt v_k.
inline double horizon_objective(double y0, const std::vector<double>& v, double nu, double dt) {
  double y = y0;
  double j = 0.0;
  for (double u : v) {
    j += 0.5 * y * y + 0.5 * nu * u * u;
    y += dt * u;
  }
  return j;
}

/// Dense normal equations (nu I + dt^2 A^T A) v = -dt Y0 A^T 1 with A_kj = [j < k],
/// solved by Gaussian elimination with partial pivoting.
inline std::vector<double> dense_qp(double y0, std::size_t n, double nu, double dt) {
  std::vector<std::vector<double>> h(n, std::vector<double>(n + 1, 0.0));
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t b = 0; b < n; ++b) {
      // (A^T A)_ab = #{k < n : a < k and b < k}
      const std::size_t m = std::max(a, b);
      h[a][b] = dt * dt * static_cast<double>(n - 1 - m) + (a == b ? nu : 0.0);
    }
    h[a][n] = -dt * y0 * static_cast<double>(n - 1 - a);
  }
  for (std::size_t c = 0; c < n; ++c) {
    std::size_t piv = c;
    for (std::size_t r = c + 1; r < n; ++r)
      if (std::abs(h[r][c]) > std::abs(h[piv][c]))
        piv = r;
    std::swap(h[c], h[piv]);
    for (std::size_t r = c + 1; r < n; ++r) {
      const double f = h[r][c] / h[c][c];
      for (std::size_t k = c; k <= n; ++k)
        h[r][k] -= f * h[c][k];
    }
  }
  std::vector<double> v(n);
  for (std::size_t c = n; c-- > 0;) {
    double s = h[c][n];
    for (std::size_t k = c + 1; k < n; ++k)
      s -= h[c][k] * v[k];
    v[c] = s / h[c][c];
  }
  return v;
}

struct GridMinimum {
  std::vector<double> argmin;
  double value{std::numeric_limits<double>::infinity()};
};

/// Brute-force minimum of the horizon objective over the leading `free` controls
/// (the last control only adds nu v^2 / 2 and is fixed at 0). Coarse scan on
/// [-1, 1] with step `coarse`, then a fine scan of +-2 coarse steps around it.
inline GridMinimum grid_search(double y0, std::size_t n, double nu, double dt, double coarse, double fine) {
  const std::size_t free = n - 1;
  GridMinimum best;
  std::vector<double> v(n, 0.0);
  auto scan = [&](std::vector<double> centre, double half, double step) {
    const long k = std::lround(half / step);
    std::vector<long> idx(free, -k);
    while (true) {
      for (std::size_t d = 0; d < free; ++d)
        v[d] = centre[d] + static_cast<double>(idx[d]) * step;
      const double val = horizon_objective(y0, v, nu, dt);
      if (val < best.value) {
        best.value = val;
        best.argmin.assign(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(free));
      }
      std::size_t d = 0;
      while (d < free && ++idx[d] > k)
        idx[d++] = -k;
      if (d == free)
        break;
    }
  };
  scan(std::vector<double>(free, 0.0), 1.0, coarse);
  scan(best.argmin, 2.0 * coarse, fine);
  return best;
}

/// W1 through the quantile functions: integral over t in [0, 1] of |F^-1(t) - G^-1(t)|.
/// Both quantile functions are step functions with jumps at i/Mf and j/Mg.
inline double quantile_w1(const mfmpc::EmpiricalMeasure& f, const mfmpc::EmpiricalMeasure& g) {
  const auto xs = f.particles();
  const auto ys = g.particles();
  const long double mf = xs.size();
  const long double mg = ys.size();
  std::size_t i = 0;
  std::size_t j = 0;
  long double t = 0.0L;
  long double total = 0.0L;
  while (i < xs.size() && j < ys.size()) {
    const long double next = std::min((i + 1) / mf, (j + 1) / mg);
    total += (next - t) * std::fabs(static_cast<long double>(xs[i]) - ys[j]);
    t = next;
    // Integer comparison decides which step ends first, so equal breakpoints advance together.
    const auto lhs = (i + 1) * ys.size();
    const auto rhs = (j + 1) * xs.size();
    if (lhs <= rhs)
      ++i;
    if (rhs <= lhs)
      ++j;
  }
  return static_cast<double>(total);
}

} // namespace oracle
