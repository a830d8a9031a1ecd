#pragma once

#include <stdexcept>
#include <string>

namespace uxai {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A NaN or Inf appeared in a tensor the library produced.
class NonFiniteError : public Error {
 public:
  using Error::Error;
};

/// A tape was replayed against a network other than the one that recorded it.
class StaleTapeError : public Error {
 public:
  using Error::Error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

class TrainingDiverged : public Error {
 public:
  using Error::Error;
};

/// Malformed input files: checkpoints, CIFAR records, CSV tables.
class FormatError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

/// The weighted least-squares system behind LIME has no unique solution.
class SingularDesign : public Error {
 public:
  using Error::Error;
};

}  // namespace uxai
