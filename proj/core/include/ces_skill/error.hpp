#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace ces_skill {

// Root of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Argument outside the mathematical domain of an operation
// (nonpositive quantity, substitution parameter at a Cobb-Douglas limit, ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

// Intermediate or final value not representable as a finite double,
// or an iterative procedure that failed outright.
class NumericalError : public Error {
 public:
  using Error::Error;
};

// Input data violates a documented invariant (duplicate keys, gaps in years,
// missing groups, misaligned series).
class ValidationError : public Error {
 public:
  using Error::Error;
};

// Malformed input text. Row and column are 1-based; 0 means "not applicable".
class ParseError : public ValidationError {
 public:
  ParseError(std::string file, int row, int column, const std::string& what)
      : ValidationError(file + ":" + std::to_string(row) + ":" +
                        std::to_string(column) + ": " + what),
        file_(std::move(file)),
        row_(row),
        column_(column) {}

  const std::string& file() const noexcept { return file_; }
  int row() const noexcept { return row_; }
  int column() const noexcept { return column_; }

 private:
  std::string file_;
  int row_;
  int column_;
};

}  // namespace ces_skill
