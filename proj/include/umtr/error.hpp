#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace umtr {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ArgumentError : public Error {
 public:
  using Error::Error;
};

class IndexError : public Error {
 public:
  using Error::Error;
};

/// CSV / schema parse failure. `row` is the 1-based data row (0 for the
/// header or a sidecar file); `column` is 0-based, or npos when the whole row
/// is at fault.
class ParseError : public Error {
 public:
  static constexpr std::size_t npos = static_cast<std::size_t>(-1);

  ParseError(const std::string& what, std::size_t row, std::size_t column = npos)
      : Error(what), row_(row), column_(column) {}

  std::size_t row() const noexcept { return row_; }
  std::size_t column() const noexcept { return column_; }

 private:
  std::size_t row_;
  std::size_t column_;
};

class DegenerateColumnError : public Error {
 public:
  using Error::Error;
};

class FitError : public Error {
 public:
  using Error::Error;
};

class SchemaMismatchError : public ArgumentError {
 public:
  using ArgumentError::ArgumentError;
};

class ModelFormatError : public Error {
 public:
  using Error::Error;
};

class TruncatedModelError : public ModelFormatError {
 public:
  using ModelFormatError::ModelFormatError;
};

class ChecksumError : public ModelFormatError {
 public:
  using ModelFormatError::ModelFormatError;
};

class VersionError : public ModelFormatError {
 public:
  using ModelFormatError::ModelFormatError;
};

class MetricError : public Error {
 public:
  using Error::Error;
};

}  // namespace umtr
