#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace trace {

// Every module error carries a category; the CLI maps it to an exit code
// and prints it in machine-readable form.
enum class ErrorCategory {
  kInvalidArgument = 2,
  kShapeMismatch = 3,
  kDuplicateTime = 4,
  kNumeric = 5,
  kIo = 6,
  kFormat = 7,
  kState = 8,
};

std::string_view category_name(ErrorCategory c);

class Error : public std::runtime_error {
 public:
  Error(ErrorCategory category, const std::string& what) : std::runtime_error(what), category_(category) {}
  ErrorCategory category() const { return category_; }

 private:
  ErrorCategory category_;
};

[[noreturn]] void fail(ErrorCategory category, const std::string& what);

inline void require(bool ok, ErrorCategory category, std::string_view what) {
  if (!ok) fail(category, std::string(what));
}

}  // namespace trace
