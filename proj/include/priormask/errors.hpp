#pragma once

#include <stdexcept>
#include <string>

namespace priormask {

// Base class for every failure raised by this library.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Shapes of two operands disagree, or a tensor has unusable dimensions.
struct DimensionError : Error {
  using Error::Error;
};

// A scalar argument is outside its documented domain.
struct ParameterError : Error {
  using Error::Error;
};

// Non-finite values showed up where finite math is required.
struct NumericError : Error {
  using Error::Error;
};

// A value is outside the range an operation documents (e.g. PGM export).
struct RangeError : Error {
  using Error::Error;
};

// Filesystem-level failure: unreadable, unwritable, missing.
struct IoError : Error {
  using Error::Error;
};

// Malformed file contents.
struct FormatError : Error {
  using Error::Error;
};

struct BadMagicError : FormatError {
  using FormatError::FormatError;
};

struct VersionMismatchError : FormatError {
  using FormatError::FormatError;
};

struct TruncatedFileError : FormatError {
  using FormatError::FormatError;
};

struct DimOverflowError : FormatError {
  using FormatError::FormatError;
};

}  // namespace priormask
