/**
 * \file error.hpp
 * \brief Exception hierarchy shared by every qlab module.
 */
#pragma once

#include <stdexcept>
#include <string>

namespace qlab {

/// Base class of all errors raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// An argument lies outside the mathematical domain of an operation.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// A series term or intermediate value left the representable range.
class RangeError : public Error {
 public:
  RangeError(const std::string& what, long index) : Error(what), index_(index) {}
  long index() const noexcept { return index_; }

 private:
  long index_;
};

/// A documented precondition of an operation does not hold.
class PreconditionError : public Error {
 public:
  using Error::Error;
};

/// A quadrature or finite-difference self-estimate exceeded its tolerance.
class AccuracyError : public Error {
 public:
  using Error::Error;
};

/// A dilation exponent does not map grid nodes onto grid nodes.
class AlignmentError : public Error {
 public:
  using Error::Error;
};

/// A polynomial evaluated to (numerically) zero where it must not vanish.
class SingularityError : public Error {
 public:
  using Error::Error;
};

/// Sector, direction or contour geometry is not admissible.
class GeometryError : public Error {
 public:
  using Error::Error;
};

/// The fixed-point iteration stopped contracting.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

/// A least-squares fit could not be carried out reliably.
class FitError : public Error {
 public:
  using Error::Error;
};

/// A measured quantity violates a bound that the implementation must satisfy.
class BoundViolationError : public Error {
 public:
  using Error::Error;
};

/// Malformed user input (configuration documents, command-line values).
class InputError : public Error {
 public:
  using Error::Error;
};

}  // namespace qlab
