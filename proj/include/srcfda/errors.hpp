#pragma once

#include <stdexcept>
#include <string>

namespace srcfda {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input file (missing column, unparsable number).
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Input parsed but violates a data invariant.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration or parameter combination.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Factorization or solver breakdown.
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// A cluster lost all of its posterior mass.
class DegenerateClusterError : public Error {
 public:
  using Error::Error;
};

}  // namespace srcfda
