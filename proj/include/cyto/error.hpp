#pragma once

#include <stdexcept>
#include <string>

namespace cyto {

/// Failure categories shared by the C++ core and the C API status codes.
enum class ErrorKind {
  Validation = 1,  // bad argument values or malformed user input
  Dimension,       // tensor / image shape mismatch
  Numeric,         // NaN/Inf, failed factorization
  Io,              // missing or unreadable/unwritable files
  Format,          // corrupt or unsupported file contents
  Usage,           // API misuse (backward on non-scalar, empty dataset, ...)
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

struct ValidationError : Error {
  explicit ValidationError(const std::string& w) : Error(ErrorKind::Validation, w) {}
};
struct DimensionError : Error {
  explicit DimensionError(const std::string& w) : Error(ErrorKind::Dimension, w) {}
};
struct NumericError : Error {
  explicit NumericError(const std::string& w) : Error(ErrorKind::Numeric, w) {}
};
struct IoError : Error {
  explicit IoError(const std::string& w) : Error(ErrorKind::Io, w) {}
};
struct FormatError : Error {
  explicit FormatError(const std::string& w) : Error(ErrorKind::Format, w) {}
};
struct UsageError : Error {
  explicit UsageError(const std::string& w) : Error(ErrorKind::Usage, w) {}
};

const char* to_string(ErrorKind kind) noexcept;

}  // namespace cyto
