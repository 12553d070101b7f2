#pragma once

#include <stdexcept>
#include <string>

namespace cfl {

// Bad input: configs, shapes, preconditions. Maps to CLI exit code 1.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class ShapeError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

// A monotonicity guarantee that must hold exactly (up to float slack) was
// observed to fail while running in theorem-check mode. Maps to exit code 3.
class TheoremViolation : public std::runtime_error {
 public:
  TheoremViolation(std::string what, int round)
      : std::runtime_error(std::move(what)), round_(round) {}

  int round() const noexcept { return round_; }

 private:
  int round_;
};

}  // namespace cfl
