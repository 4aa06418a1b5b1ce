#pragma once

#include <stdexcept>
#include <string>

namespace attainable {

/// Sizes of vectors or matrices passed together do not agree.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// An input lies outside the domain of a function (NaN, infinity, negative step, ...).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// A problem is numerically degenerate (zero variance fit, singular grid, ...).
class DegenerateError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid experiment configuration.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A trajectory left the finite region of state space. Carries the simulation
/// time at which the offending state was produced.
class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(const std::string& what, double time)
      : std::runtime_error(what + " (t = " + std::to_string(time) + ")"), time_(time) {}

  double time() const noexcept { return time_; }

 private:
  double time_;
};

namespace detail {

inline void require_dims(bool ok, const char* what) {
  if (!ok) throw DimensionError(what);
}

}  // namespace detail
}  // namespace attainable
