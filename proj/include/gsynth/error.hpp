#pragma once

#include <stdexcept>
#include <string>

namespace gsynth {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// A Gaussian primitive violates its invariants (non-finite scale, zero quaternion, ...).
class InvalidPrimitiveError : public Error {
public:
  using Error::Error;
};

/// A caller-supplied parameter is out of range.
class ParameterError : public Error {
public:
  using Error::Error;
};

/// Malformed binary or text input (PLY, sidecar).
class FormatError : public Error {
public:
  using Error::Error;
};

/// Malformed trajectory record; the message carries the line number.
class ParseError : public Error {
public:
  using Error::Error;
};

/// Inconsistent job configuration (unknown tool id, missing key, ...).
class ConfigError : public Error {
public:
  using Error::Error;
};

class IoError : public Error {
public:
  using Error::Error;
};

} // namespace gsynth
