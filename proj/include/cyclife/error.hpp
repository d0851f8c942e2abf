#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace cyclife {

enum class ErrorCode {
  io,
  schema,
  invalid_argument,
  dimension_mismatch,
  not_positive_definite,
  degenerate_delta_q,
  insufficient_cycles,
  missing_curve,
  constant_feature,
  non_finite,
  empty_result,
  usage,
};

inline std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::io: return "io";
    case ErrorCode::schema: return "schema";
    case ErrorCode::invalid_argument: return "invalid_argument";
    case ErrorCode::dimension_mismatch: return "dimension_mismatch";
    case ErrorCode::not_positive_definite: return "not_positive_definite";
    case ErrorCode::degenerate_delta_q: return "degenerate_delta_q";
    case ErrorCode::insufficient_cycles: return "insufficient_cycles";
    case ErrorCode::missing_curve: return "missing_curve";
    case ErrorCode::constant_feature: return "constant_feature";
    case ErrorCode::non_finite: return "non_finite";
    case ErrorCode::empty_result: return "empty_result";
    case ErrorCode::usage: return "usage";
  }
  return "unknown";
}

// Every failure raised by the library carries a machine-readable code next
// to the human-readable message.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

}  // namespace cyclife
