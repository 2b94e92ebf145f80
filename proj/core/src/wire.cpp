#include "skyt/wire.hpp"

#include <bit>
#include <cmath>
#include <limits>

#include <nlohmann/json.hpp>

namespace skyt {

namespace {

bool known_opcode(std::uint8_t op) {
  const std::uint8_t base = op & 0x7f;
  return base >= 0x01 && base <= 0x05;
}

void put_key(ByteWriter& w, const std::string& key, bool allow_empty) {
  if (key.empty() && !allow_empty) throw Error(ErrorCode::protocol, "empty key");
  if (key.size() > std::numeric_limits<std::uint16_t>::max()) {
    throw Error(ErrorCode::protocol, "key longer than 65535 bytes");
  }
  w.u16_be(static_cast<std::uint16_t>(key.size()));
  w.raw(key);
}

std::string get_key(ByteReader& r, bool allow_empty) {
  auto key = r.str(r.u16_be());
  if (key.empty() && !allow_empty) throw Error(ErrorCode::protocol, "empty key");
  return key;
}

void finish(const ByteReader& r, const char* what) {
  if (!r.done()) throw Error(ErrorCode::protocol, std::string("trailing bytes after ") + what);
}

// Truncation inside a frame is a malformed message, not a short read.
template <typename Fn>
auto as_protocol(Fn&& fn) {
  try {
    return fn();
  } catch (const Error& e) {
    if (e.code() == ErrorCode::truncated) throw Error(ErrorCode::protocol, e.what());
    throw;
  }
}

}  // namespace

Bytes encode_frame(const Frame& f) {
  if (!known_opcode(f.opcode)) throw Error(ErrorCode::protocol, "unknown opcode " + std::to_string(f.opcode));
  const std::size_t length = f.payload.size() + 1;
  if (length > kMaxFrameBytes) {
    throw Error(ErrorCode::frame_too_large, std::to_string(length) + " bytes exceeds the frame limit");
  }
  Bytes out;
  out.reserve(kFrameLengthBytes + length);
  ByteWriter w(out);
  w.u32_be(static_cast<std::uint32_t>(length));
  w.u8(f.opcode);
  w.raw(f.payload);
  return out;
}

FrameDecode decode_frame(ByteView input) {
  FrameDecode d;
  if (input.size() < kFrameLengthBytes) {
    d.bytes_needed = kFrameLengthBytes - input.size();
    return d;
  }
  ByteReader r(input);
  const std::size_t length = r.u32_be();
  if (length > kMaxFrameBytes) {
    throw Error(ErrorCode::frame_too_large, "declared length " + std::to_string(length));
  }
  if (length == 0) throw Error(ErrorCode::protocol, "frame without an opcode");
  if (r.remaining() < length) {
    if (r.remaining() >= 1 && !known_opcode(input[kFrameLengthBytes])) {
      throw Error(ErrorCode::protocol, "unknown opcode " + std::to_string(input[kFrameLengthBytes]));
    }
    d.bytes_needed = length - r.remaining();
    return d;
  }
  Frame f;
  f.opcode = r.u8();
  if (!known_opcode(f.opcode)) throw Error(ErrorCode::protocol, "unknown opcode " + std::to_string(f.opcode));
  auto body = r.raw(length - 1);
  f.payload.assign(body.begin(), body.end());
  d.frame = std::move(f);
  d.consumed = kFrameLengthBytes + length;
  return d;
}

Frame encode_request(const Request& req) {
  Frame f;
  ByteWriter w(f.payload);
  std::visit(
      [&](const auto& r) {
        using T = std::decay_t<decltype(r)>;
        if constexpr (std::is_same_v<T, PutRequest>) {
          f.opcode = static_cast<std::uint8_t>(Opcode::put);
          put_key(w, r.key, false);
          if (r.value.size() > std::numeric_limits<std::uint32_t>::max()) {
            throw Error(ErrorCode::frame_too_large, "value too large");
          }
          w.u32_be(static_cast<std::uint32_t>(r.value.size()));
          w.raw(r.value);
        } else if constexpr (std::is_same_v<T, GetRequest>) {
          f.opcode = static_cast<std::uint8_t>(Opcode::get);
          put_key(w, r.key, false);
        } else if constexpr (std::is_same_v<T, DeleteRequest>) {
          f.opcode = static_cast<std::uint8_t>(Opcode::del);
          put_key(w, r.key, false);
        } else if constexpr (std::is_same_v<T, ScanRequest>) {
          f.opcode = static_cast<std::uint8_t>(Opcode::scan);
          put_key(w, r.prefix, true);
        } else {
          f.opcode = static_cast<std::uint8_t>(Opcode::exec);
          put_key(w, r.plan_prefix, false);
          w.u32_be(static_cast<std::uint32_t>(r.args.size()));
          w.raw(r.args);
        }
      },
      req);
  return f;
}

Request decode_request(const Frame& f) {
  return as_protocol([&]() -> Request {
    ByteReader r(f.payload);
    switch (static_cast<Opcode>(f.opcode)) {
      case Opcode::put: {
        PutRequest p{get_key(r, false), {}};
        auto v = r.raw(r.u32_be());
        p.value.assign(v.begin(), v.end());
        finish(r, "PUT");
        return p;
      }
      case Opcode::get: {
        GetRequest g{get_key(r, false)};
        finish(r, "GET");
        return g;
      }
      case Opcode::del: {
        DeleteRequest d{get_key(r, false)};
        finish(r, "DELETE");
        return d;
      }
      case Opcode::scan: {
        ScanRequest s{get_key(r, true)};
        finish(r, "SCAN");
        return s;
      }
      case Opcode::exec: {
        ExecRequest e;
        e.plan_prefix = get_key(r, false);
        e.args = r.str(r.u32_be());
        finish(r, "EXEC");
        return e;
      }
    }
    throw Error(ErrorCode::protocol, "opcode " + std::to_string(f.opcode) + " is not a request");
  });
}

Frame encode_response(const Response& r) {
  Frame f;
  f.opcode = static_cast<std::uint8_t>(static_cast<std::uint8_t>(r.op) | kResponseBit);
  f.payload.reserve(r.payload.size() + 1);
  f.payload.push_back(static_cast<std::uint8_t>(r.status));
  f.payload.insert(f.payload.end(), r.payload.begin(), r.payload.end());
  return f;
}

Response decode_response(const Frame& f) {
  if (!(f.opcode & kResponseBit) || !known_opcode(f.opcode)) {
    throw Error(ErrorCode::protocol, "opcode " + std::to_string(f.opcode) + " is not a response");
  }
  if (f.payload.empty()) throw Error(ErrorCode::protocol, "response without a status byte");
  const auto status = f.payload[0];
  if (status > static_cast<std::uint8_t>(Status::exec_error)) {
    throw Error(ErrorCode::protocol, "unknown status " + std::to_string(status));
  }
  return {static_cast<Opcode>(f.opcode & 0x7f), static_cast<Status>(status),
          Bytes(f.payload.begin() + 1, f.payload.end())};
}

Status status_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::not_found:
    case ErrorCode::missing_slice: return Status::not_found;
    case ErrorCode::conflict: return Status::conflict;
    case ErrorCode::parse:
    case ErrorCode::protocol:
    case ErrorCode::format:
    case ErrorCode::truncated:
    case ErrorCode::invalid_plan: return Status::parse;
    default: return Status::exec_error;
  }
}

void raise_status(const Response& r) {
  const auto msg = to_string(ByteView(r.payload));
  switch (r.status) {
    case Status::not_found: throw Error(ErrorCode::not_found, msg);
    case Status::conflict: throw Error(ErrorCode::conflict, msg);
    case Status::parse: throw Error(ErrorCode::parse, msg);
    case Status::exec_error: throw Error(ErrorCode::exec, msg);
    case Status::ok: break;
  }
  throw Error(ErrorCode::protocol, "raise_status on an ok response");
}

Bytes encode_key_list(const std::vector<std::string>& keys) {
  Bytes out;
  ByteWriter w(out);
  w.u32_be(static_cast<std::uint32_t>(keys.size()));
  for (const auto& k : keys) put_key(w, k, true);
  return out;
}

std::vector<std::string> decode_key_list(ByteView payload) {
  return as_protocol([&] {
    ByteReader r(payload);
    const auto n = r.u32_be();
    if (n > r.remaining() / 2) throw Error(ErrorCode::protocol, "key count exceeds payload");
    std::vector<std::string> keys;
    keys.reserve(n);
    for (std::uint32_t i = 0; i < n; ++i) keys.push_back(get_key(r, true));
    finish(r, "key list");
    return keys;
  });
}

// ---- EXEC result blocks ----

namespace {

void block(ByteWriter& w, BlockRole role, int node_id, std::uint32_t slice, BlockKind kind,
           ByteView body) {
  w.u32_be(static_cast<std::uint32_t>(body.size() + 10));
  w.u8(static_cast<std::uint8_t>(role));
  w.u32_be(static_cast<std::uint32_t>(node_id));
  w.u32_be(slice);
  w.u8(static_cast<std::uint8_t>(kind));
  w.raw(body);
}

void value_blocks(ByteWriter& w, BlockRole role, int node_id, const NodeValue& v) {
  if (auto* t = std::get_if<std::vector<SliceTable>>(&v)) {
    if (t->empty()) {
      const std::uint8_t tag = 0;
      block(w, role, node_id, 0, BlockKind::empty, ByteView(&tag, 1));
    }
    for (const auto& s : *t) block(w, role, node_id, s.slice_index, BlockKind::table, encode_table(s.table, s.slice_index));
  } else if (auto* a = std::get_if<std::vector<SliceAggregate>>(&v)) {
    if (a->empty()) {
      const std::uint8_t tag = 1;
      block(w, role, node_id, 0, BlockKind::empty, ByteView(&tag, 1));
    }
    for (const auto& s : *a) block(w, role, node_id, s.slice_index, BlockKind::aggregate, encode_aggregates(s.agg, s.slice_index));
  } else {
    block(w, role, node_id, 0, BlockKind::tstat, encode_tstat(std::get<TStatVector>(v)));
  }
}

// Appends one decoded block to the value for (role, node).
void append(NodeValue& v, bool fresh, BlockKind kind, std::uint32_t slice, ByteView body) {
  auto mismatch = [] { throw Error(ErrorCode::protocol, "blocks of one result mix kinds"); };
  switch (kind) {
    case BlockKind::table: {
      if (fresh) v = std::vector<SliceTable>{};
      auto* list = std::get_if<std::vector<SliceTable>>(&v);
      if (!list) mismatch();
      std::uint32_t index = 0;
      auto t = decode_table(body, &index);
      if (index != slice) throw Error(ErrorCode::protocol, "table block slice index mismatch");
      list->push_back({index, std::move(t)});
      break;
    }
    case BlockKind::aggregate: {
      if (fresh) v = std::vector<SliceAggregate>{};
      auto* list = std::get_if<std::vector<SliceAggregate>>(&v);
      if (!list) mismatch();
      std::uint32_t index = 0;
      auto a = decode_aggregates(body, &index);
      if (index != slice) throw Error(ErrorCode::protocol, "aggregate block slice index mismatch");
      list->push_back({index, std::move(a)});
      break;
    }
    case BlockKind::tstat:
      if (!fresh) mismatch();
      v = decode_tstat(body);
      break;
    case BlockKind::empty:
      if (!fresh || body.size() != 1 || body[0] > 1) throw Error(ErrorCode::protocol, "bad empty marker");
      if (body[0] == 0) v = std::vector<SliceTable>{};
      else v = std::vector<SliceAggregate>{};
      break;
    default:
      throw Error(ErrorCode::protocol, "unexpected block kind");
  }
}

}  // namespace

Bytes encode_exec_result(const ExecResult& r) {
  Bytes out;
  ByteWriter w(out);
  const auto doc = serialize_plan(r.plan);
  w.u32_be(static_cast<std::uint32_t>(doc.size()));
  w.raw(doc);
  if (r.output) value_blocks(w, BlockRole::output, r.plan.root.id, *r.output);
  for (const auto& [id, v] : r.partial) value_blocks(w, BlockRole::partial, id, v);
  for (const auto& [id, v] : r.pushed_back) value_blocks(w, BlockRole::pushed_back, id, NodeValue(v));
  for (const auto& s : r.stored) {
    block(w, s.role, s.node_id, s.slice_index, BlockKind::stored, as_bytes(s.key));
  }
  Bytes ledger;
  ByteWriter lw(ledger);
  lw.u32_be(static_cast<std::uint32_t>(r.ledger.size()));
  for (const auto& e : r.ledger) {
    lw.u16_be(static_cast<std::uint16_t>(e.label.size()));
    lw.raw(e.label);
    lw.u64_be(std::bit_cast<std::uint64_t>(e.charged_us));
  }
  block(w, BlockRole::output, r.plan.root.id, 0, BlockKind::ledger, ledger);
  Bytes counts;
  ByteWriter cw(counts);
  cw.u64_be(r.total_slices);
  cw.u64_be(r.executed_slices);
  block(w, BlockRole::output, r.plan.root.id, 0, BlockKind::counts, counts);
  return out;
}

ExecResult decode_exec_result(ByteView payload) {
  return as_protocol([&] {
    ByteReader r(payload);
    ExecResult out;
    out.plan = parse_plan(r.str(r.u32_be()));
    while (!r.done()) {
      const auto len = r.u32_be();
      if (len < 10) throw Error(ErrorCode::protocol, "short result block");
      ByteReader b(r.raw(len));
      const auto role_byte = b.u8();
      if (role_byte > 2) throw Error(ErrorCode::protocol, "unknown block role");
      const auto role = static_cast<BlockRole>(role_byte);
      const int node = static_cast<int>(b.u32_be());
      const auto slice = b.u32_be();
      const auto kind = static_cast<BlockKind>(b.u8());
      const auto body = b.rest();
      switch (kind) {
        case BlockKind::ledger: {
          ByteReader l(body);
          const auto n = l.u32_be();
          for (std::uint32_t i = 0; i < n; ++i) {
            auto label = l.str(l.u16_be());
            out.ledger.push_back({std::move(label), std::bit_cast<double>(l.u64_be())});
          }
          finish(l, "ledger");
          break;
        }
        case BlockKind::counts: {
          ByteReader c(body);
          out.total_slices = c.u64_be();
          out.executed_slices = c.u64_be();
          finish(c, "counts");
          break;
        }
        case BlockKind::stored:
          out.stored.push_back({role, node, slice, to_string(body)});
          break;
        default: {
          if (role == BlockRole::output) {
            const bool fresh = !out.output;
            if (fresh) out.output.emplace();
            append(*out.output, fresh, kind, slice, body);
          } else if (role == BlockRole::partial) {
            auto [it, fresh] = out.partial.try_emplace(node);
            append(it->second, fresh, kind, slice, body);
          } else {
            if (kind != BlockKind::table && kind != BlockKind::empty) {
              throw Error(ErrorCode::protocol, "pushed-back blocks must carry raw tables");
            }
            auto [it, fresh] = out.pushed_back.try_emplace(node);
            NodeValue v = std::move(it->second);
            append(v, fresh, kind, slice, body);
            auto* list = std::get_if<std::vector<SliceTable>>(&v);
            if (!list) throw Error(ErrorCode::protocol, "pushed-back blocks must carry raw tables");
            it->second = std::move(*list);
          }
        }
      }
    }
    return out;
  });
}

std::string encode_exec_args(const ExecArgs& a) {
  nlohmann::json j = nlohmann::json::object();
  if (a.budget) {
    j["budget_us"] = a.budget->max_per_slice_us;
    j["sample_slices"] = a.budget->sample_slices;
    j["mode"] = std::string(to_string(a.budget->mode));
  }
  if (!a.out_prefix.empty()) j["out_prefix"] = a.out_prefix;
  return j.dump();
}

ExecArgs decode_exec_args(std::string_view doc, const ExecBudget& qos_budget) {
  ExecArgs a;
  ExecBudget b = qos_budget;
  if (doc.empty()) {
    a.budget = b;
    return a;
  }
  try {
    auto j = nlohmann::json::parse(doc);
    if (!j.is_object()) throw Error(ErrorCode::parse, "EXEC args must be a JSON object");
    if (j.contains("budget_us")) b.max_per_slice_us = j.at("budget_us").get<double>();
    if (j.contains("sample_slices")) b.sample_slices = j.at("sample_slices").get<std::uint32_t>();
    if (j.contains("mode")) b.mode = parse_exec_mode(j.at("mode").get<std::string>());
    if (j.contains("out_prefix")) a.out_prefix = j.at("out_prefix").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::parse, std::string("EXEC args: ") + e.what());
  }
  b.validate();
  a.budget = b;
  return a;
}

}  // namespace skyt
