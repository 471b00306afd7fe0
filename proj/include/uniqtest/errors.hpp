#pragma once

#include <stdexcept>
#include <string>

namespace uniqtest {

/// Base of all library errors.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed or inconsistent input data (bad shape, too few points, ...).
class DataError : public Error {
 public:
  using Error::Error;
};

/// A numerical procedure failed (no convergence, degenerate geometry, ...).
class NumericError : public Error {
 public:
  using Error::Error;
};

/// log map requested across the cut locus (antipodal points).
class CutLocusError : public NumericError {
 public:
  using NumericError::NumericError;
};

}  // namespace uniqtest
