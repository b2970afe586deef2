#include "core/common.hpp"

#include <cstdio>

namespace tauflow {

const char* error_code_name(ErrorCode c) {
  switch (c) {
    case ErrorCode::InvalidArgument: return "invalid_argument";
    case ErrorCode::Shape: return "shape";
    case ErrorCode::Numeric: return "numeric";
    case ErrorCode::Io: return "io";
    case ErrorCode::Format: return "format";
    case ErrorCode::Config: return "config";
    case ErrorCode::Internal: return "internal";
  }
  return "unknown";
}

std::string format_double(double v, int precision) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", precision, v);
  return buf;
}

}  // namespace tauflow
