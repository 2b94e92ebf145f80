#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace skyt {

enum class ErrorCode {
  invalid_argument,
  parse,
  duplicate_id,
  row_too_wide,
  index_overflow,
  format,
  truncated,
  missing_slice,
  value_too_large,
  not_found,
  conflict,
  corruption,
  empty_group,
  schema_mismatch,
  unknown_column,
  invalid_plan,
  invalid_cut,
  nothing_to_merge,
  frame_too_large,
  protocol,
  transport,
  exec,
  io,
};

std::string_view to_string(ErrorCode code);

// All library failures are reported as skyt::Error carrying a code, so callers
// (and the wire layer) can map them without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace skyt
