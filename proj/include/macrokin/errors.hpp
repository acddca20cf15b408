#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace macrokin {

// Exception taxonomy. Each class maps onto one CLI exit code, see
// tools/macrokin.cpp.

// Malformed model text. Carries the 1-based line number (0 when the error
// is not tied to a line).
class ParseError : public std::runtime_error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : std::runtime_error(line == 0 ? what
                                     : "line " + std::to_string(line) + ": " + what),
        line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

// Breadth-first state enumeration exceeded its cap.
class Truncated : public std::runtime_error {
 public:
  explicit Truncated(std::size_t cap)
      : std::runtime_error("state space exceeds cap of " + std::to_string(cap) +
                           " states"),
        cap_(cap) {}

  std::size_t cap() const noexcept { return cap_; }

 private:
  std::size_t cap_;
};

// The positive-rate digraph of a generator is not strongly connected.
class NotErgodic : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Constraint right-hand side outside the relative interior of the moment
// cone, or a rank-deficient constraint matrix.
class Infeasible : public std::runtime_error {
 public:
  Infeasible(const std::string& what, double residual)
      : std::runtime_error(what), residual_(residual) {}

  double residual() const noexcept { return residual_; }

 private:
  double residual_;
};

// Integrator step underflow, nonconvergent iteration, non-finite values.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace macrokin
