#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace editmark {

enum class ErrorCode {
  kParameter,
  kRange,
  kMalformedAnswer,
  kConfig,
  kNoNullSpace,
  kNumeric,
  kDivergence,
  kParse,
  kIo,
};

// Stable snake_case name used in machine-readable error reports.
std::string_view error_code_name(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace editmark
