// SPDX-License-Identifier: Apache-2.0
#pragma once

// Minimal Protocol Buffers wire-format reader/writer: just enough to decode
// and encode the ONNX message subset the model loader needs.

#include <charconv>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "lbound/core.hpp"

namespace lbound::pb {

enum WireType : std::uint32_t { varint = 0, fixed64 = 1, length_delimited = 2, fixed32 = 5 };

class Reader {
 public:
  Reader(std::span<const std::uint8_t> data, std::size_t base_offset = 0) : data_(data), base_(base_offset) {}

  bool done() const { return pos_ >= data_.size(); }
  std::size_t offset() const { return base_ + pos_; }

  std::uint64_t read_varint() {
    std::uint64_t v = 0;
    for (int shift = 0; shift < 64; shift += 7) {
      if (pos_ >= data_.size()) fail("truncated varint");
      auto b = data_[pos_++];
      v |= static_cast<std::uint64_t>(b & 0x7f) << shift;
      if (!(b & 0x80)) return v;
    }
    fail("varint longer than 10 bytes");
  }

  // Returns false at end of message.
  bool next(std::uint32_t& field, WireType& wt) {
    if (done()) return false;
    auto tag_at = offset();
    auto tag = read_varint();
    field = static_cast<std::uint32_t>(tag >> 3);
    wt = static_cast<WireType>(tag & 7);
    if (field == 0) fail_at(tag_at, "field number 0");
    if (wt != varint && wt != fixed64 && wt != length_delimited && wt != fixed32)
      fail_at(tag_at, "unsupported wire type " + std::to_string(static_cast<int>(wt)));
    return true;
  }

  Reader read_message() {
    auto len = read_length();
    Reader sub(data_.subspan(pos_, len), offset());
    pos_ += len;
    return sub;
  }

  std::string read_string() {
    auto len = read_length();
    std::string s(reinterpret_cast<const char*>(data_.data() + pos_), len);
    pos_ += len;
    return s;
  }

  std::span<const std::uint8_t> read_bytes() {
    auto len = read_length();
    auto s = data_.subspan(pos_, len);
    pos_ += len;
    return s;
  }

  std::uint32_t read_fixed32() {
    if (data_.size() - pos_ < 4) fail("truncated fixed32");
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(data_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }

  std::uint64_t read_fixed64() {
    if (data_.size() - pos_ < 8) fail("truncated fixed64");
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(data_[pos_ + i]) << (8 * i);
    pos_ += 8;
    return v;
  }

  // float32 widened through its shortest decimal form, so 1e-05f reads as 1e-05.
  double read_float() {
    auto bits = read_fixed32();
    float f;
    std::memcpy(&f, &bits, 4);
    char buf[32];
    auto end = std::to_chars(buf, buf + sizeof buf, f).ptr;
    double d = f;
    std::from_chars(buf, end, d);
    return d;
  }

  // Repeated scalar fields may arrive packed or one element per tag.
  void read_int64s(WireType wt, std::vector<std::int64_t>& out) {
    if (wt == varint) {
      out.push_back(static_cast<std::int64_t>(read_varint()));
    } else if (wt == length_delimited) {
      auto sub = read_message();
      while (!sub.done()) out.push_back(static_cast<std::int64_t>(sub.read_varint()));
    } else {
      fail("bad wire type for repeated integer");
    }
  }

  void read_floats(WireType wt, std::vector<double>& out) {
    if (wt == fixed32) {
      out.push_back(read_float());
    } else if (wt == length_delimited) {
      auto sub = read_message();
      while (!sub.done()) out.push_back(sub.read_float());
    } else {
      fail("bad wire type for repeated float");
    }
  }

  void skip(WireType wt) {
    switch (wt) {
      case varint: read_varint(); break;
      case fixed64: read_fixed64(); break;
      case fixed32: read_fixed32(); break;
      case length_delimited: pos_ += read_length(); break;
    }
  }

  [[noreturn]] void fail(const std::string& msg) const { fail_at(offset(), msg); }

  [[noreturn]] static void fail_at(std::size_t at, const std::string& msg) {
    throw Error(ErrorKind::parse, msg + " at byte offset " + std::to_string(at));
  }

 private:
  std::size_t read_length() {
    auto at = offset();
    auto len = read_varint();
    if (len > data_.size() - pos_) fail_at(at, "length " + std::to_string(len) + " exceeds remaining input");
    return static_cast<std::size_t>(len);
  }

  std::span<const std::uint8_t> data_;
  std::size_t base_;
  std::size_t pos_ = 0;
};

class Writer {
 public:
  const std::string& bytes() const { return buf_; }

  void varint_field(std::uint32_t field, std::uint64_t v) {
    tag(field, varint);
    put_varint(v);
  }
  void string_field(std::uint32_t field, std::string_view s) {
    tag(field, length_delimited);
    put_varint(s.size());
    buf_.append(s);
  }
  void message_field(std::uint32_t field, const Writer& sub) { string_field(field, sub.bytes()); }
  void float_field(std::uint32_t field, float f) {
    tag(field, fixed32);
    std::uint32_t bits;
    std::memcpy(&bits, &f, 4);
    for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
  }
  void packed_int64s(std::uint32_t field, const std::vector<std::int64_t>& vs) {
    Writer sub;
    for (auto v : vs) sub.put_varint(static_cast<std::uint64_t>(v));
    message_field(field, sub);
  }
  void packed_floats(std::uint32_t field, const std::vector<double>& vs) {
    Writer sub;
    for (auto v : vs) {
      float f = static_cast<float>(v);
      std::uint32_t bits;
      std::memcpy(&bits, &f, 4);
      for (int i = 0; i < 4; ++i) sub.buf_.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
    }
    message_field(field, sub);
  }

 private:
  void tag(std::uint32_t field, WireType wt) { put_varint((static_cast<std::uint64_t>(field) << 3) | wt); }
  void put_varint(std::uint64_t v) {
    while (v >= 0x80) {
      buf_.push_back(static_cast<char>((v & 0x7f) | 0x80));
      v >>= 7;
    }
    buf_.push_back(static_cast<char>(v));
  }

  std::string buf_;
};

}  // namespace lbound::pb
