#pragma once

#include <stdexcept>
#include <string>

namespace rfenet {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid configuration value or unknown key.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Tensor dimensions that violate an operation's contract.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Ground truth or input data that is out of range.
class DataError : public Error {
 public:
  using Error::Error;
};

/// Top-k selection asked for more points than the map holds.
class SelectionError : public Error {
 public:
  using Error::Error;
};

/// Filesystem failure; carries the offending path.
class IoError : public Error {
 public:
  IoError(const std::string& what, std::string path)
      : Error(what + ": " + path), path_(std::move(path)) {}
  const std::string& path() const { return path_; }

 private:
  std::string path_;
};

/// Checkpoint format or architecture mismatch.
class CheckpointError : public Error {
 public:
  using Error::Error;
};

/// NaN/Inf encountered during training.
class NumericalError : public Error {
 public:
  using Error::Error;
};

}  // namespace rfenet
