#pragma once

#include <stdexcept>
#include <string>

namespace nqsbell {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A Pauli string or operator refers to a site outside the system, or is
/// otherwise ill-formed (repeated sites, unknown axis, bad text).
class MalformedOperator : public Error {
 public:
  using Error::Error;
};

/// Arguments outside the documented domain of a model or formula.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// An exact (enumeration / diagonalization) routine was asked for a problem
/// larger than it is allowed to handle.
class CapacityError : public Error {
 public:
  using Error::Error;
};

/// A correlator refers to a (party, setting) that has no measurement.
class IncompleteAssignment : public Error {
 public:
  using Error::Error;
};

/// A measurement with a non-zero sigma-y component reached the compiler.
class UnsupportedObservable : public Error {
 public:
  using Error::Error;
};

/// Non-finite values, solver breakdown or non-convergence.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Malformed configuration, checkpoint or interchange document.
class FormatError : public Error {
 public:
  using Error::Error;
};

}  // namespace nqsbell
