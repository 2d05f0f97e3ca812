#ifndef STENOFLOW_ERRORS_HPP
#define STENOFLOW_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace stenoflow {

/// Bad physical or numerical parameter (non-positive radius, negative viscosity, ...).
class InvalidParameterError : public std::invalid_argument {
 public:
  explicit InvalidParameterError(const std::string& what) : std::invalid_argument(what) {}
};

/// A state left the admissible set (A <= 0, NaN, ...).
class StateError : public std::domain_error {
 public:
  explicit StateError(const std::string& what) : std::domain_error(what) {}
};

/// The quasilinear system lost real characteristics at the queried state.
class HyperbolicityError : public std::domain_error {
 public:
  explicit HyperbolicityError(const std::string& what) : std::domain_error(what) {}
};

/// A time step could not be completed (positivity loss after a stage, ...).
class StepError : public std::runtime_error {
 public:
  StepError(const std::string& what, double time, int element)
      : std::runtime_error(what), time(time), element(element) {}
  double time;
  int element;
};

/// An iterative solve (boundary ghost, radial profile, ...) failed to converge.
class ConvergenceError : public std::runtime_error {
 public:
  explicit ConvergenceError(const std::string& what) : std::runtime_error(what) {}
};

/// Configuration file / CLI input problem.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace stenoflow

#endif
