#pragma once

#include <stdexcept>
#include <string>

namespace qrecm {

// Malformed input: dimension mismatches, unknown labels, bad files.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Argument outside the domain of a transform (non-finite, non-positive payoff).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// Scalar parameter outside its admissible range.
class RangeError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

// Numerical failure: solver divergence, indefinite covariance.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Raised by specialized code paths that do not cover the requested shape.
class UnsupportedShape : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

}  // namespace qrecm
