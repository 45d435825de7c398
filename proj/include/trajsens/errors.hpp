#pragma once

#include <stdexcept>
#include <string>

namespace trajsens {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Input data violates a structural rule (shape, bounds, missing field).
struct ValidationError : Error {
  using Error::Error;
};

/// Malformed text; the message names the offending field.
struct ParseError : Error {
  using Error::Error;
};

/// An operation was evaluated outside its mathematical domain (log of 0, NaN input).
struct NumericDomainError : Error {
  using Error::Error;
};

/// A value or derivative became non-finite.
struct OverflowError : Error {
  using Error::Error;
};

/// A normalizing range is zero, so a range-relative perturbation is undefined.
struct DegenerateRangeError : Error {
  using Error::Error;
};

struct ConfigError : Error {
  using Error::Error;
};

}  // namespace trajsens
