#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace recursim {

/// Precondition violated by a caller-supplied value.
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Regressor matrix lost rank (constant or otherwise unexciting input).
class DegenerateInput : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Relative metric requested against a reference with zero variance.
class UndefinedRelative : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// A simulation left its admissible region; carries the offending sample index.
class InstabilityError : public std::runtime_error {
 public:
  InstabilityError(const std::string& what, std::size_t step)
      : std::runtime_error(what + " (step " + std::to_string(step) + ")"), step_(step) {}

  std::size_t step() const noexcept { return step_; }

 private:
  std::size_t step_;
};

}  // namespace recursim
