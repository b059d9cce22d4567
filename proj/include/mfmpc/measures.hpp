#pragma once

/**
 * @file
 * @brief Uniformly weighted particle ensembles on a compact interval.
 *
 * An EmpiricalMeasure is (1/M) sum_i delta(x - x_i). Particles are stored
 * sorted so that every reduction runs in a canonical order and results are
 * bit-stable no matter how the caller produced the ensemble.
 */

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <utility>
#include <vector>

#include "errors.hpp"

namespace mfmpc {

/// Closed interval [lo, hi].
struct Interval {
  double lo{-1.0};
  double hi{1.0};

  double width() const noexcept { return hi - lo; }
  bool contains(double x) const noexcept { return x >= lo && x <= hi; }
  bool operator==(const Interval&) const = default;
};

/**
 * @brief Pairwise (cascade) summation.
 *
 * Error grows like O(log n) instead of O(n) for the naive loop. The split
 * points depend only on the length, so the result is a fixed function of the
 * input order.
 */
template <class T, class F>
T pairwise_sum(std::span<const T> xs, F&& term) {
  constexpr std::size_t kBlock = 16;
  if (xs.size() <= kBlock) {
    T acc{};
    for (const T& x : xs)
      acc += term(x);
    return acc;
  }
  const std::size_t half = xs.size() / 2;
  return pairwise_sum(xs.first(half), term) + pairwise_sum(xs.subspan(half), term);
}

template <class T>
T pairwise_sum(std::span<const T> xs) {
  return pairwise_sum(xs, [](const T& x) { return x; });
}

/// First two moments of a measure. `mean` is Y_n, `second_moment` is E_n.
struct MomentSummary {
  double mean{0.0};
  double second_moment{0.0};
  double variance{0.0};

  /// Builds a summary from (Y, E), deriving the variance as E - Y^2.
  static MomentSummary from_mean_and_second(double mean, double second) {
    return {mean, second, std::max(0.0, second - mean * mean)};
  }

  /// Dirac mass at `y`.
  static MomentSummary point_mass(double y) { return {y, y * y, 0.0}; }

  /// True when variance matches E - Y^2 up to 1e-12 * max(1, E).
  bool consistent() const noexcept {
    const double slack = 1e-12 * std::max(1.0, std::abs(second_moment));
    return variance >= 0.0 && std::abs(variance - (second_moment - mean * mean)) <= slack;
  }
};

class EmpiricalMeasure {
public:
  /// Takes ownership of `particles`; they are sorted on construction.
  EmpiricalMeasure(std::vector<double> particles, Interval domain)
      : particles_(std::move(particles)), domain_(domain) {
    if (particles_.empty())
      throw InvalidInput("EmpiricalMeasure needs at least one particle");
    if (!(domain_.lo < domain_.hi))
      throw InvalidInput("EmpiricalMeasure domain must satisfy lo < hi");
    for (double x : particles_)
      if (!std::isfinite(x))
        throw InvalidInput("EmpiricalMeasure particles must be finite");
    if (!std::is_sorted(particles_.begin(), particles_.end()))
      std::sort(particles_.begin(), particles_.end());
  }

  std::size_t size() const noexcept { return particles_.size(); }
  std::span<const double> particles() const noexcept { return particles_; }
  const Interval& domain() const noexcept { return domain_; }
  double weight() const noexcept { return 1.0 / static_cast<double>(particles_.size()); }

  /// Some particle has left the domain. Positions are never clamped.
  bool outside_domain() const noexcept {
    return particles_.front() < domain_.lo || particles_.back() > domain_.hi;
  }

  /// Every particle moved by `c`; the domain stays put.
  EmpiricalMeasure shifted(double c) const {
    std::vector<double> xs(particles_);
    for (double& x : xs)
      x += c;
    return EmpiricalMeasure(std::move(xs), domain_);
  }

  bool operator==(const EmpiricalMeasure&) const = default;

private:
  std::vector<double> particles_;
  Interval domain_;
};

/// Uniform double in [0, 1) from the top 53 bits; identical on every platform.
inline double unit_uniform(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

/// M i.i.d. uniform draws on `domain`, reproducible from `seed`.
inline EmpiricalMeasure sample_uniform(std::size_t count, Interval domain, std::uint64_t seed) {
  if (count == 0)
    throw InvalidInput("sample_uniform: particle count must be at least 1");
  if (!(domain.lo < domain.hi))
    throw InvalidInput("sample_uniform: domain must satisfy lo < hi");
  std::mt19937_64 rng(seed);
  std::vector<double> xs(count);
  for (double& x : xs)
    x = domain.lo + domain.width() * unit_uniform(rng);
  return EmpiricalMeasure(std::move(xs), domain);
}

inline MomentSummary moments(const EmpiricalMeasure& f) {
  const auto xs = f.particles();
  const double m = static_cast<double>(xs.size());
  const double mean = pairwise_sum(xs) / m;
  const double second = pairwise_sum(xs, [](double x) { return x * x; }) / m;
  // Centered second pass; E - Y^2 cancels badly once the ensemble has collapsed.
  const double variance = pairwise_sum(xs, [mean](double x) { return (x - mean) * (x - mean); }) / m;
  return {mean, second, variance};
}

/**
 * @brief Kantorovich-Rubinstein (Wasserstein-1) distance in one dimension.
 *
 * Integrates |F_f - F_g| exactly over the merged sorted breakpoints. The CDF
 * heights are kept as integer counts so the integrand is |i*Mg - j*Mf| / (Mf*Mg)
 * with no accumulated rounding in the heights themselves.
 */
inline double wasserstein1(const EmpiricalMeasure& f, const EmpiricalMeasure& g) {
  const auto xs = f.particles();
  const auto ys = g.particles();
  const auto mf = static_cast<std::int64_t>(xs.size());
  const auto mg = static_cast<std::int64_t>(ys.size());

  std::vector<double> pieces;
  pieces.reserve(xs.size() + ys.size());
  std::int64_t i = 0;
  std::int64_t j = 0;
  double left = std::min(xs.front(), ys.front());
  while (i < mf || j < mg) {
    double next;
    if (j >= mg || (i < mf && xs[static_cast<std::size_t>(i)] <= ys[static_cast<std::size_t>(j)]))
      next = xs[static_cast<std::size_t>(i)];
    else
      next = ys[static_cast<std::size_t>(j)];
    const std::int64_t height = std::abs(i * mg - j * mf);
    if (height != 0 && next > left)
      pieces.push_back(static_cast<double>(height) * (next - left));
    while (i < mf && xs[static_cast<std::size_t>(i)] == next)
      ++i;
    while (j < mg && ys[static_cast<std::size_t>(j)] == next)
      ++j;
    left = next;
  }
  return pairwise_sum(std::span<const double>(pieces)) /
         (static_cast<double>(mf) * static_cast<double>(mg));
}

} // namespace mfmpc
