#pragma once

#include <stdexcept>
#include <string>

namespace mfmpc {

/// Raised when a caller hands in something outside an operation's contract.
class InvalidInput : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when an iterative solver gives up. Carries the last residual.
class SolverError : public std::runtime_error {
public:
  SolverError(const std::string& what, double residual)
      : std::runtime_error(what), residual_(residual) {}

  double residual() const noexcept { return residual_; }

private:
  double residual_;
};

} // namespace mfmpc
