#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace kaa {

/// Base class for every contract error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes are incompatible.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A scalar or structural parameter is outside its admissible range.
class ParameterError : public Error {
 public:
  using Error::Error;
};

/// The input is finite but mathematically degenerate (zero-norm rows, duplicate points).
class DegenerateInputError : public Error {
 public:
  using Error::Error;
};

/// A precondition on the call sequence or data structure was violated.
class ContractError : public Error {
 public:
  using Error::Error;
};

/// Malformed text input; carries the 1-based line number.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error(what + " (line " + std::to_string(line) + ")"), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// Files parsed individually but disagree with one another.
class ConsistencyError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// Optimizer received a non-finite gradient.
class DivergenceError : public Error {
 public:
  explicit DivergenceError(const std::string& parameter)
      : Error("non-finite gradient for parameter '" + parameter + "'"), parameter_(parameter) {}
  const std::string& parameter() const noexcept { return parameter_; }

 private:
  std::string parameter_;
};

/// Training loss became non-finite.
class TrainingError : public Error {
 public:
  TrainingError(const std::string& what, int epoch)
      : Error(what + " at epoch " + std::to_string(epoch)), epoch_(epoch) {}
  int epoch() const noexcept { return epoch_; }

 private:
  int epoch_;
};

/// Internal consistency check of a constructive proof failed.
class ConstructionError : public Error {
 public:
  using Error::Error;
};

/// The computed MRD triple violated the expected ordering.
class TheoremCheckFailure : public Error {
 public:
  using Error::Error;
};

}  // namespace kaa
