#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace eslasso {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Inputs violate a documented precondition (bad sizes, NaN, out-of-range levels).
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// A raw regressor is constant, so no approximation interval can be formed.
class DegenerateIntervalError : public InvalidArgument {
 public:
  using InvalidArgument::InvalidArgument;
};

/// Column counts of a design and a coefficient vector disagree.
class DimensionError : public InvalidArgument {
 public:
  using InvalidArgument::InvalidArgument;
};

/// Malformed input files or missing columns.
class DataError : public Error {
 public:
  using Error::Error;
};

/// A solver stopped before certifying optimality. The best iterate is kept so
/// the caller can decide whether to accept it.
template <typename Fit>
class NotConverged : public Error {
 public:
  NotConverged(const std::string& what, Fit best) : Error(what), best_(std::move(best)) {}
  const Fit& best() const noexcept { return best_; }

 private:
  Fit best_;
};

}  // namespace eslasso
