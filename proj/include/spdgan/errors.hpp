#pragma once

#include <stdexcept>
#include <string>

namespace spdgan {

/// Base class for all errors raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Input contains non-finite values or violates a documented precondition.
class InvalidInput : public Error {
 public:
  using Error::Error;
};

/// Tensor or matrix shapes do not agree.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A function was evaluated outside its mathematical domain (e.g. log of a
/// non-positive eigenvalue).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// An iterative method failed to converge, or a value became non-finite.
class NumericError : public Error {
 public:
  NumericError(const std::string& what, int iterations = -1)
      : Error(what), iterations_(iterations) {}
  int iterations() const { return iterations_; }

 private:
  int iterations_;
};

/// Configuration values are missing, malformed, or inconsistent.
class ConfigError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// Broken internal invariant (missing backward cache, cyclic graph, ...).
class InternalError : public Error {
 public:
  using Error::Error;
};

}  // namespace spdgan
