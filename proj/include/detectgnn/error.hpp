#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>

namespace detectgnn {

/// Base of every error raised by the library. Each subclass names one
/// failure category so callers (and the CLI exit-code mapping) can branch on
/// type rather than message text.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input text. `line()` is 1-based; the header is line 1.
class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class DuplicateIdError : public Error {
 public:
  /// `line` is 0 when the duplicate was not read from a file.
  explicit DuplicateIdError(std::string id, std::size_t line = 0)
      : Error("duplicate txn_id '" + id + "'" + (line ? " at line " + std::to_string(line) : std::string())),
        id_(std::move(id)),
        line_(line) {}
  const std::string& id() const noexcept { return id_; }
  std::size_t line() const noexcept { return line_; }

 private:
  std::string id_;
  std::size_t line_;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A value outside its domain (negative delta, non-finite input, label not in {0,1}).
class ValueError : public Error {
 public:
  using Error::Error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class EmptyInputError : public Error {
 public:
  using Error::Error;
};

/// Input that makes a statistic undefined (single-class AUC).
class DegenerateInputError : public Error {
 public:
  using Error::Error;
};

/// Stream time went backwards.
class OrderingError : public Error {
 public:
  using Error::Error;
};

/// Dead or foreign node reference.
class ReferenceError : public Error {
 public:
  using Error::Error;
};

class SchemaError : public Error {
 public:
  using Error::Error;
};

class NumericError : public Error {
 public:
  using Error::Error;
};

class TrainingError : public Error {
 public:
  TrainingError(std::size_t epoch, const std::string& what)
      : Error("epoch " + std::to_string(epoch) + ": " + what), epoch_(epoch) {}
  std::size_t epoch() const noexcept { return epoch_; }

 private:
  std::size_t epoch_;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace detectgnn
