#pragma once

#include <stdexcept>
#include <string>

namespace dawgen {

/// Base class for all library errors.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Raised when a checkpoint file cannot be read back.
class CheckpointError : public Error {
 public:
  enum class Kind { BadMagic, VersionMismatch, Truncated, ShapeMismatch };

  CheckpointError(Kind kind, const std::string& msg) : Error(msg), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

/// Raised when a training loop produces a non-finite loss.
class DivergenceError : public Error {
 public:
  DivergenceError(long step, const std::string& msg) : Error(msg), step_(step) {}
  long step() const { return step_; }

 private:
  long step_;
};

}  // namespace dawgen
