#pragma once

#include <stdexcept>
#include <string>

namespace randcon {

// Root of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Caller-side mistakes: bad arguments, malformed input files, shape
// mismatches. The CLI maps these to exit code 1.
class InvalidInput : public Error {
 public:
  using Error::Error;
};

class ParseError : public InvalidInput {
 public:
  using InvalidInput::InvalidInput;
};

class DimensionError : public InvalidInput {
 public:
  using InvalidInput::InvalidInput;
};

class ParameterError : public InvalidInput {
 public:
  using InvalidInput::InvalidInput;
};

class ValidationError : public InvalidInput {
 public:
  using InvalidInput::InvalidInput;
};

// Numerically undefined situations (coincident centroids, zero-norm vectors).
class DegenerateError : public Error {
 public:
  using Error::Error;
};

// Corrupt, truncated or version-incompatible binary containers.
class FormatError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace randcon
