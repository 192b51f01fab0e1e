#pragma once

#include <stdexcept>
#include <string>

namespace byteprobe {

// Error taxonomy used across the library.  The CLI maps these onto exit
// codes: usage errors are handled by the argument parser, data-dependent
// failures (input/format/parse) exit 2, everything else exits 3.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Tensor shapes do not conform (offending axes included in the message).
class DimensionError : public Error {
 public:
  using Error::Error;
};

// Caller-supplied data is invalid (out-of-range symbol, length mismatch, ...).
class InputError : public Error {
 public:
  using Error::Error;
};

// Inconsistent configuration (model geometry, corpus spec, ...).
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Serialized artifact is corrupt or has the wrong version.
class FormatError : public Error {
 public:
  using Error::Error;
};

// Operation called in the wrong order (e.g. backward before forward).
class StateError : public Error {
 public:
  using Error::Error;
};

// A metric is undefined for the given data (e.g. AUC on one class).
class MetricError : public Error {
 public:
  using Error::Error;
};

// The input is not a PE file at all.
class NotAPeError : public Error {
 public:
  using Error::Error;
};

}  // namespace byteprobe
