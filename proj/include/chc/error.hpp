#pragma once

#include <stdexcept>
#include <string>

namespace chc {

// Base of every error raised by the library. The CLI maps the subclasses
// onto exit codes: usage 1, format/data 2, numeric 3.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed file contents (bad magic, truncated header, unknown layout).
class FormatError : public Error {
 public:
  using Error::Error;
};

// Well-formed input that uses a feature we do not read.
class UnsupportedError : public Error {
 public:
  using Error::Error;
};

// Structurally valid input with unusable values.
class DataError : public Error {
 public:
  using Error::Error;
};

// Volume and sample points do not share a world frame.
class AlignmentError : public DataError {
 public:
  using DataError::DataError;
};

class NumericError : public Error {
 public:
  using Error::Error;
};

// Bad parameters passed by a caller.
class ArgumentError : public Error {
 public:
  using Error::Error;
};

}  // namespace chc
