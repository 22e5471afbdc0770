#include "trace/error.hpp"

namespace trace {

std::string_view category_name(ErrorCategory c) {
  switch (c) {
    case ErrorCategory::kInvalidArgument:
      return "invalid_argument";
    case ErrorCategory::kShapeMismatch:
      return "shape_mismatch";
    case ErrorCategory::kDuplicateTime:
      return "duplicate_time";
    case ErrorCategory::kNumeric:
      return "numeric";
    case ErrorCategory::kIo:
      return "io";
    case ErrorCategory::kFormat:
      return "format";
    case ErrorCategory::kState:
      return "state";
  }
  return "unknown";
}

void fail(ErrorCategory category, const std::string& what) { throw Error(category, what); }

}  // namespace trace
