#pragma once

#include <stdexcept>
#include <string>

namespace nlflow {

// Root of every error thrown by the library. The CLI maps these to exit code 1
// (user error); anything else escaping is reported as an internal error.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid or inconsistent configuration (ring too short, bad grid, unknown key).
class ConfigError : public Error {
 public:
  using Error::Error;
};

// A model parameter outside its admissible range.
class ParameterError : public Error {
 public:
  using Error::Error;
};

// Malformed input data (CSV schema, non-monotone timestamps, ...).
class DataError : public Error {
 public:
  using Error::Error;
};

// The requested analysis is not defined for the given gains.
class UnsupportedAnalysis : public Error {
 public:
  using Error::Error;
};

// Kernel parameters whose sum vanishes cannot be normalized.
class DegenerateParameter : public Error {
 public:
  using Error::Error;
};

// Training produced a non-finite loss.
class TrainingDiverged : public Error {
 public:
  using Error::Error;
};

}  // namespace nlflow
