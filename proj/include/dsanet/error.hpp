#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace dsanet {

// Base of every error raised by the library. The CLI maps the concrete
// subclasses onto process exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Operand shapes do not agree.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// Invalid hyperparameter or argument outside its documented range.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// A caller broke an API contract (non-scalar backward, missing gradient...).
class ContractError : public Error {
 public:
  using Error::Error;
};

// Zero-norm vector, all-zero cube, empty batch.
class DegenerateError : public Error {
 public:
  using Error::Error;
};

// Value outside the mathematical domain of an operation.
class DomainError : public Error {
 public:
  using Error::Error;
};

// Non-finite loss or other numerical breakdown during training.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Endmember initialization could not find enough independent pixels.
class InitError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// Malformed file contents. offset() is the byte position where parsing failed.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::uint64_t offset)
      : Error(what + " (at byte offset " + std::to_string(offset) + ")"), offset_(offset) {}

  std::uint64_t offset() const noexcept { return offset_; }

 private:
  std::uint64_t offset_;
};

}  // namespace dsanet
