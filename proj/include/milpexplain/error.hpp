#pragma once

#include <stdexcept>
#include <string>

namespace milpexplain {

enum class ErrorCode {
  syntax,          // document does not parse (truncated, not JSON)
  schema,          // parsed but violates the schema
  dimension,       // layer/vector sizes disagree
  non_finite,      // NaN or infinite number where a finite one is required
  bounds,          // lower > upper or domain violation
  unknown_variable,
  duplicate_variable,
  not_binary,
  already_attached,
  numerical,       // LP breakdown
  inconclusive,    // node or time limit hit
  tie_margin,      // instance prediction margin below tolerance
  size_guard,      // brute-force enumeration too large
  io,
};

inline const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::syntax: return "syntax";
    case ErrorCode::schema: return "schema";
    case ErrorCode::dimension: return "dimension";
    case ErrorCode::non_finite: return "non-finite";
    case ErrorCode::bounds: return "bounds";
    case ErrorCode::unknown_variable: return "unknown-variable";
    case ErrorCode::duplicate_variable: return "duplicate-variable";
    case ErrorCode::not_binary: return "not-binary";
    case ErrorCode::already_attached: return "already-attached";
    case ErrorCode::numerical: return "numerical";
    case ErrorCode::inconclusive: return "inconclusive";
    case ErrorCode::tie_margin: return "tie-margin";
    case ErrorCode::size_guard: return "size-guard";
    case ErrorCode::io: return "io";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace milpexplain
