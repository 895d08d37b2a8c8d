#include "cyto/error.hpp"

namespace cyto {

const char* to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::Validation: return "validation error";
    case ErrorKind::Dimension: return "dimension error";
    case ErrorKind::Numeric: return "numeric error";
    case ErrorKind::Io: return "I/O error";
    case ErrorKind::Format: return "format error";
    case ErrorKind::Usage: return "usage error";
  }
  return "error";
}

}  // namespace cyto
