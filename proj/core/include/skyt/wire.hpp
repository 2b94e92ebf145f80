#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "skyt/bytes.hpp"
#include "skyt/engine.hpp"

namespace skyt {

// Frame: u32 big-endian length (opcode byte + payload), opcode, payload.
inline constexpr std::size_t kMaxFrameBytes = 16u << 20;
inline constexpr std::size_t kFrameLengthBytes = 4;

enum class Opcode : std::uint8_t { put = 0x01, get = 0x02, del = 0x03, scan = 0x04, exec = 0x05 };
inline constexpr std::uint8_t kResponseBit = 0x80;

enum class Status : std::uint8_t { ok = 0, not_found = 1, conflict = 2, parse = 3, exec_error = 4 };

struct Frame {
  std::uint8_t opcode = 0;
  Bytes payload;
  friend bool operator==(const Frame&, const Frame&) = default;
};

Bytes encode_frame(const Frame& f);

struct FrameDecode {
  std::optional<Frame> frame;
  std::size_t consumed = 0;      // bytes of input used when a frame is complete
  std::size_t bytes_needed = 0;  // additional bytes required otherwise
};

// Throws frame_too_large for an oversize length and protocol for an unknown opcode.
FrameDecode decode_frame(ByteView input);

struct PutRequest {
  std::string key;
  Bytes value;
  friend bool operator==(const PutRequest&, const PutRequest&) = default;
};
struct GetRequest {
  std::string key;
  friend bool operator==(const GetRequest&, const GetRequest&) = default;
};
struct DeleteRequest {
  std::string key;
  friend bool operator==(const DeleteRequest&, const DeleteRequest&) = default;
};
struct ScanRequest {
  std::string prefix;
  friend bool operator==(const ScanRequest&, const ScanRequest&) = default;
};
struct ExecRequest {
  std::string plan_prefix;
  std::string args;  // JSON: budget_us, sample_slices, mode, out_prefix
  friend bool operator==(const ExecRequest&, const ExecRequest&) = default;
};

using Request = std::variant<PutRequest, GetRequest, DeleteRequest, ScanRequest, ExecRequest>;

Frame encode_request(const Request& r);
Request decode_request(const Frame& f);

struct Response {
  Opcode op = Opcode::get;
  Status status = Status::ok;
  Bytes payload;
  friend bool operator==(const Response&, const Response&) = default;
};

Frame encode_response(const Response& r);
Response decode_response(const Frame& f);

Status status_for(ErrorCode code);
// Raises the typed error carried by a non-ok response.
[[noreturn]] void raise_status(const Response& r);

Bytes encode_key_list(const std::vector<std::string>& keys);
std::vector<std::string> decode_key_list(ByteView payload);

// EXEC payload: u32 document length, annotated plan document, then blocks of
// (u32 length, role u8, node id u32, slice index u32, kind u8, body).
enum class BlockKind : std::uint8_t {
  table = 'T',
  aggregate = 'A',
  tstat = 'S',
  ledger = 'L',
  stored = 'K',
  counts = 'C',
  empty = 'E',  // marks an empty sequence; body u8 0 = tables, 1 = aggregates
};

Bytes encode_exec_result(const ExecResult& r);
ExecResult decode_exec_result(ByteView payload);

struct ExecArgs {
  std::optional<ExecBudget> budget;  // absent: taken from the plan's qos map
  std::string out_prefix;
};

std::string encode_exec_args(const ExecArgs& a);
// Fields missing from the document keep the values in `qos_budget`.
ExecArgs decode_exec_args(std::string_view doc, const ExecBudget& qos_budget);

}  // namespace skyt
