#include "skyt/error.hpp"

namespace skyt {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::invalid_argument: return "invalid-argument";
    case ErrorCode::parse: return "parse-error";
    case ErrorCode::duplicate_id: return "duplicate-id";
    case ErrorCode::row_too_wide: return "row-too-wide";
    case ErrorCode::index_overflow: return "index-overflow";
    case ErrorCode::format: return "format-error";
    case ErrorCode::truncated: return "truncated";
    case ErrorCode::missing_slice: return "missing-slice";
    case ErrorCode::value_too_large: return "value-too-large";
    case ErrorCode::not_found: return "not-found";
    case ErrorCode::conflict: return "conflict";
    case ErrorCode::corruption: return "corruption";
    case ErrorCode::empty_group: return "empty-group";
    case ErrorCode::schema_mismatch: return "schema-mismatch";
    case ErrorCode::unknown_column: return "unknown-column";
    case ErrorCode::invalid_plan: return "invalid-plan";
    case ErrorCode::invalid_cut: return "invalid-cut";
    case ErrorCode::nothing_to_merge: return "nothing-to-merge";
    case ErrorCode::frame_too_large: return "frame-too-large";
    case ErrorCode::protocol: return "protocol-error";
    case ErrorCode::transport: return "transport-error";
    case ErrorCode::exec: return "exec-error";
    case ErrorCode::io: return "io-error";
  }
  return "unknown";
}

}  // namespace skyt
