#pragma once

#include <stdexcept>
#include <string>

namespace locbench {

/// Base class for all locbench errors.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Vector or quaternion with (near-)zero norm where a direction is required.
class ZeroNormError : public Error {
 public:
  using Error::Error;
};

/// Mismatched vector dimensions.
class DimensionMismatchError : public Error {
 public:
  using Error::Error;
};

/// A descriptor that was required to be unit-norm is not.
class NotNormalizedError : public Error {
 public:
  using Error::Error;
};

/// A descriptor with zero norm cannot be normalized.
class ZeroDescriptorError : public Error {
 public:
  explicit ZeroDescriptorError(const std::string& id)
      : Error("zero-norm descriptor for image '" + id + "'"), id_(id) {}
  const std::string& id() const { return id_; }

 private:
  std::string id_;
};

class EmptyDatabaseError : public Error {
 public:
  EmptyDatabaseError() : Error("descriptor database is empty") {}
};

/// A ranked image id has no pose (or no descriptor) attached.
class MissingPoseError : public Error {
 public:
  explicit MissingPoseError(const std::string& id)
      : Error("no pose known for image '" + id + "'"), id_(id) {}
  const std::string& id() const { return id_; }

 private:
  std::string id_;
};

/// Malformed content in a dataset file. Carries file and 1-based line number.
class ParseError : public Error {
 public:
  ParseError(const std::string& file, int line, const std::string& reason)
      : Error(file + ":" + std::to_string(line) + ": " + reason),
        file_(file),
        line_(line) {}
  const std::string& file() const { return file_; }
  int line() const { return line_; }

 private:
  std::string file_;
  int line_;
};

class MissingFileError : public Error {
 public:
  explicit MissingFileError(const std::string& path)
      : Error("missing required file: " + path) {}
};

/// An image referenced by one file is not declared where it must be.
class CrossRefError : public Error {
 public:
  using Error::Error;
};

/// Stored quaternion deviates from unit norm by more than the rejection
/// threshold (1e-3); smaller deviations are renormalized silently.
class NonUnitQuaternionError : public Error {
 public:
  using Error::Error;
};

class MissingGroundTruthError : public Error {
 public:
  using Error::Error;
};

/// Bad CLI/benchmark configuration (maps to exit code 2).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Filesystem/IO failure (maps to exit code 3).
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace locbench
