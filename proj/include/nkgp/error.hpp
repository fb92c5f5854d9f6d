#pragma once

#include <stdexcept>
#include <string>

namespace nkgp {

/// Base class for all errors raised by the library.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Shapes or lengths of arguments do not agree.
class DimensionError : public Error {
public:
  using Error::Error;
};

/// An argument lies outside the domain of the operation (NaN, negative
/// variance, non-positive temperature, ...).
class DomainError : public Error {
public:
  using Error::Error;
};

/// Cholesky factorization failed even after jitter escalation.
class IndefiniteKernelError : public Error {
public:
  using Error::Error;
};

/// Malformed input file or config text; the message carries the location.
class ParseError : public Error {
public:
  using Error::Error;
};

namespace detail {

inline void require(bool cond, const std::string& what) {
  if (!cond) throw DomainError(what);
}

inline void require_dims(bool cond, const std::string& what) {
  if (!cond) throw DimensionError(what);
}

}  // namespace detail
}  // namespace nkgp
