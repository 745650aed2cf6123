#pragma once

#include <stdexcept>
#include <string>

namespace stflow {

// Failure categories map one-to-one onto the CLI exit codes.
enum class ErrorKind {
  kUsage = 1,      // malformed config, bad flags, invalid parameters
  kData = 2,       // unreadable or inconsistent input artifacts
  kNumerical = 3,  // non-finite loss, diverged training
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }
  int exit_code() const noexcept { return static_cast<int>(kind_); }

 private:
  ErrorKind kind_;
};

class ParameterError : public Error {
 public:
  explicit ParameterError(const std::string& what) : Error(ErrorKind::kUsage, what) {}
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(ErrorKind::kUsage, "config: " + what) {}
};

/// Tensor shape contract violation. The message names the offending shapes.
class ShapeError : public Error {
 public:
  explicit ShapeError(const std::string& what) : Error(ErrorKind::kUsage, "shape: " + what) {}
};

class IngestError : public Error {
 public:
  explicit IngestError(const std::string& what) : Error(ErrorKind::kData, "ingest: " + what) {}
};

class DataError : public Error {
 public:
  explicit DataError(const std::string& what) : Error(ErrorKind::kData, what) {}
};

/// Artifact written by an incompatible format version.
class FormatVersionError : public Error {
 public:
  explicit FormatVersionError(const std::string& what)
      : Error(ErrorKind::kData, "format version: " + what) {}
};

/// Checkpoint bound to a different station ordering than the data it is applied to.
class FingerprintMismatchError : public Error {
 public:
  explicit FingerprintMismatchError(const std::string& what)
      : Error(ErrorKind::kData, "fingerprint mismatch: " + what) {}
};

class NumericalError : public Error {
 public:
  explicit NumericalError(const std::string& what) : Error(ErrorKind::kNumerical, what) {}
};

}  // namespace stflow
