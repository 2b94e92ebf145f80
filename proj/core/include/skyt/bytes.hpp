#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "skyt/error.hpp"

namespace skyt {

using Bytes = std::vector<std::uint8_t>;
using ByteView = std::span<const std::uint8_t>;

inline ByteView as_bytes(std::string_view s) {
  return {reinterpret_cast<const std::uint8_t*>(s.data()), s.size()};
}

inline std::string to_string(ByteView b) {
  return {reinterpret_cast<const char*>(b.data()), b.size()};
}

// Append-only encoder. Endianness is chosen per call: the slice container is
// little-endian, the wire protocol big-endian.
class ByteWriter {
 public:
  explicit ByteWriter(Bytes& out) : out_(out) {}

  void u8(std::uint8_t v) { out_.push_back(v); }
  void u16_le(std::uint16_t v) { put_le(v, 2); }
  void u32_le(std::uint32_t v) { put_le(v, 4); }
  void u64_le(std::uint64_t v) { put_le(v, 8); }
  void u16_be(std::uint16_t v) { put_be(v, 2); }
  void u32_be(std::uint32_t v) { put_be(v, 4); }
  void u64_be(std::uint64_t v) { put_be(v, 8); }
  void f64_le(double v) { u64_le(std::bit_cast<std::uint64_t>(v)); }
  void raw(ByteView b) { out_.insert(out_.end(), b.begin(), b.end()); }
  void raw(std::string_view s) { raw(as_bytes(s)); }

 private:
  void put_le(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void put_be(std::uint64_t v, int n) {
    for (int i = n - 1; i >= 0; --i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }

  Bytes& out_;
};

// Bounds-checked decoder; running past the end raises ErrorCode::truncated.
class ByteReader {
 public:
  explicit ByteReader(ByteView in) : in_(in) {}

  std::uint8_t u8() { return static_cast<std::uint8_t>(get_le(1)); }
  std::uint16_t u16_le() { return static_cast<std::uint16_t>(get_le(2)); }
  std::uint32_t u32_le() { return static_cast<std::uint32_t>(get_le(4)); }
  std::uint64_t u64_le() { return get_le(8); }
  std::uint16_t u16_be() { return static_cast<std::uint16_t>(get_be(2)); }
  std::uint32_t u32_be() { return static_cast<std::uint32_t>(get_be(4)); }
  std::uint64_t u64_be() { return get_be(8); }
  double f64_le() { return std::bit_cast<double>(u64_le()); }

  ByteView raw(std::size_t n) {
    need(n);
    auto out = in_.subspan(pos_, n);
    pos_ += n;
    return out;
  }
  std::string str(std::size_t n) { return to_string(raw(n)); }
  ByteView rest() { return raw(remaining()); }

  std::size_t remaining() const { return in_.size() - pos_; }
  std::size_t position() const { return pos_; }
  bool done() const { return pos_ == in_.size(); }

 private:
  void need(std::size_t n) const {
    if (n > remaining()) {
      throw Error(ErrorCode::truncated, "need " + std::to_string(n) + " bytes at offset " +
                                            std::to_string(pos_) + ", have " +
                                            std::to_string(remaining()));
    }
  }
  std::uint64_t get_le(int n) {
    need(static_cast<std::size_t>(n));
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= std::uint64_t{in_[pos_ + i]} << (8 * i);
    pos_ += static_cast<std::size_t>(n);
    return v;
  }
  std::uint64_t get_be(int n) {
    need(static_cast<std::size_t>(n));
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v = (v << 8) | in_[pos_ + i];
    pos_ += static_cast<std::size_t>(n);
    return v;
  }

  ByteView in_;
  std::size_t pos_ = 0;
};

}  // namespace skyt
