#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace nwq {

/// Root of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor or batch shapes that do not agree.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration values (model, data, training, experiment).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Dataset contents that violate a precondition (too short, all zero, ...).
class DataError : public Error {
 public:
  using Error::Error;
};

/// Caller broke an operation contract (non-scalar loss, index out of range, ...).
class ContractError : public Error {
 public:
  using Error::Error;
};

/// Non-finite value produced from finite inputs.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Malformed binary file. Carries the byte offset where parsing failed.
class FormatError : public Error {
 public:
  FormatError(const std::string& what, std::uint64_t offset)
      : Error(what + " (at byte offset " + std::to_string(offset) + ")"), offset_(offset) {}

  std::uint64_t offset() const noexcept { return offset_; }

 private:
  std::uint64_t offset_;
};

}  // namespace nwq
