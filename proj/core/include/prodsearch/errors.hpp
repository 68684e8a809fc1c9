#pragma once

#include <stdexcept>
#include <string>

namespace prodsearch {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad configuration or usage (CLI exit code 1).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Malformed input files, corrupted artifacts, or data that cannot satisfy an
/// operation's preconditions (CLI exit code 2).
class DataError : public Error {
 public:
  using Error::Error;
};

/// A model, vocabulary, or index was paired with an artifact it was not built
/// against.
class FingerprintError : public DataError {
 public:
  using DataError::DataError;
};

/// An internal invariant was violated (CLI exit code 3).
class InvariantError : public Error {
 public:
  using Error::Error;
};

}  // namespace prodsearch
