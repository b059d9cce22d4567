#pragma once

/**
 * @file
 * @brief Text serialization: particle ensembles (CSV, JSON) and trajectories (CSV).
 *
 * Numbers are written with 17 significant digits through std::to_chars and read
 * back with std::from_chars, so round trips are exact and never locale dependent.
 */

#include <charconv>
#include <cmath>
#include <istream>
#include <limits>
#include <ostream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "json.hpp"

#include "dynamics.hpp"
#include "errors.hpp"
#include "measures.hpp"

namespace mfmpc {

inline std::string format_double(double x) {
  if (std::isnan(x))
    return "nan";
  if (std::isinf(x))
    return x > 0 ? "inf" : "-inf";
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), x, std::chars_format::general, 17);
  return std::string(buf, res.ptr);
}

inline double parse_double(std::string_view text) {
  while (!text.empty() && (text.front() == ' ' || text.front() == '\t'))
    text.remove_prefix(1);
  while (!text.empty() && (text.back() == ' ' || text.back() == '\t' || text.back() == '\r'))
    text.remove_suffix(1);
  if (text == "nan")
    return std::nan("");
  if (text == "inf")
    return std::numeric_limits<double>::infinity();
  if (text == "-inf")
    return -std::numeric_limits<double>::infinity();
  if (!text.empty() && text.front() == '+')
    text.remove_prefix(1);
  double value = 0.0;
  const auto res = std::from_chars(text.data(), text.data() + text.size(), value);
  if (res.ec != std::errc{} || res.ptr != text.data() + text.size())
    throw InvalidInput("not a number: '" + std::string(text) + "'");
  return value;
}

inline void write_measure_csv(std::ostream& out, const EmpiricalMeasure& f) {
  out << "x\n";
  for (double x : f.particles())
    out << format_double(x) << '\n';
}

inline EmpiricalMeasure read_measure_csv(std::istream& in, Interval domain = {}) {
  std::string line;
  if (!std::getline(in, line) || (line != "x" && line != "x\r"))
    throw InvalidInput("particle CSV must start with the header 'x'");
  std::vector<double> xs;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r")
      continue;
    xs.push_back(parse_double(line));
  }
  return EmpiricalMeasure(std::move(xs), domain);
}

inline nlohmann::json measure_to_json(const EmpiricalMeasure& f) {
  nlohmann::json arr = nlohmann::json::array();
  for (double x : f.particles())
    arr.push_back(x);
  return arr;
}

inline EmpiricalMeasure measure_from_json(const nlohmann::json& arr, Interval domain = {}) {
  if (!arr.is_array())
    throw InvalidInput("particle JSON must be an array of numbers");
  std::vector<double> xs;
  xs.reserve(arr.size());
  for (const auto& v : arr) {
    if (!v.is_number())
      throw InvalidInput("particle JSON must be an array of numbers");
    xs.push_back(v.get<double>());
  }
  return EmpiricalMeasure(std::move(xs), domain);
}

/// Columns n, mean, second_moment, variance, u, step_cost. The final state has
/// no control, so its last two fields are empty.
template <SystemState State>
void write_trajectory_csv(std::ostream& out, const Trajectory<State>& traj) {
  out << "n,mean,second_moment,variance,u,step_cost\n";
  for (std::size_t n = 0; n < traj.moments.size(); ++n) {
    const auto& m = traj.moments[n];
    out << n << ',' << format_double(m.mean) << ',' << format_double(m.second_moment) << ','
        << format_double(m.variance) << ',';
    if (n < traj.controls.size())
      out << format_double(traj.controls[n]) << ',' << format_double(traj.step_costs[n]);
    else
      out << ',';
    out << '\n';
  }
}

} // namespace mfmpc
