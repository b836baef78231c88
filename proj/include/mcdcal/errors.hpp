#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace mcdcal {

// Non-finite or out-of-range values where the caller supplied data.
class InvalidInput : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Arguments outside the mathematical domain of an operation (t <= 0, C < 2, empty sets).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

class FitFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class TrainingDiverged : public std::runtime_error {
 public:
  TrainingDiverged(std::size_t epoch, const std::string& what)
      : std::runtime_error("training diverged at epoch " + std::to_string(epoch) + ": " + what),
        epoch_(epoch) {}

  std::size_t epoch() const noexcept { return epoch_; }

 private:
  std::size_t epoch_;
};

// Malformed file content. line() is 1-based; 0 when unknown.
class ParseError : public std::runtime_error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

// Well-formed content that violates the record schema (ragged rows, mismatched class counts).
class SchemaError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// The file system refused us: missing input, unwritable output.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace mcdcal
