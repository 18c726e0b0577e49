#pragma once

#include <stdexcept>
#include <string>

namespace dgseg {

/// Base class for every failure raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid user-provided configuration (unknown key, bad value, missing path).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Malformed or unreadable data on disk.
class DataError : public Error {
 public:
  using Error::Error;
};

/// Training produced a non-finite loss or diverged.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

}  // namespace dgseg
