#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace airid {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Operand shapes do not conform for an op.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// NaN/Inf produced by an op or a training loss.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Invalid user input: config keys, flag values.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Dataset or checkpoint content problems, missing files.
class DataError : public Error {
 public:
  using Error::Error;
};

class BadMagicError : public DataError {
 public:
  using DataError::DataError;
};

class VersionError : public DataError {
 public:
  using DataError::DataError;
};

class TruncationError : public DataError {
 public:
  TruncationError(const std::string& what, std::uint64_t offset)
      : DataError(what + " (truncated at byte offset " + std::to_string(offset) + ")"),
        offset_(offset) {}
  std::uint64_t offset() const { return offset_; }

 private:
  std::uint64_t offset_;
};

class ChecksumError : public DataError {
 public:
  using DataError::DataError;
};

}  // namespace airid
