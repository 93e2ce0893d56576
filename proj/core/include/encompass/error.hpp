#pragma once

#include <stdexcept>
#include <string>

namespace encompass {

// Argument outside the mathematical domain of an operation (m < 2, log of a
// non-positive probability, category out of range, ...).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// Malformed or inconsistent input data. The message lists every offending
// row or field that was detected.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Matrix/vector shapes that do not agree with the link they are used with.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Newton inversion of the marginal link did not reach the requested residual.
class InversionError : public std::runtime_error {
 public:
  InversionError(const std::string& what, double residual)
      : std::runtime_error(what), residual_(residual) {}
  double residual() const noexcept { return residual_; }

 private:
  double residual_;
};

// No value on the alpha grid produced a single accepted pilot draw.
class TuningError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// One side of a Bayes factor was estimated as exactly zero, so the log Bayes
// factor is unbounded.
class UnboundedEstimateError : public std::runtime_error {
 public:
  UnboundedEstimateError(const std::string& what, std::string side)
      : std::runtime_error(what), side_(std::move(side)) {}
  const std::string& side() const noexcept { return side_; }

 private:
  std::string side_;
};

}  // namespace encompass
