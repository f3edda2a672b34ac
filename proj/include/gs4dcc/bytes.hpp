#pragma once

// Little-endian byte serialization helpers shared by the interchange format and
// the compressed container.

#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "gs4dcc/error.hpp"

namespace gs4dcc {

using Bytes = std::vector<uint8_t>;

uint32_t crc32(std::span<const uint8_t> data);

// IEEE 754 binary16 conversion, round-to-nearest-even; overflow saturates to inf.
uint16_t float_to_half(float value);
float half_to_float(uint16_t bits);
inline float round_to_half(float value) { return half_to_float(float_to_half(value)); }

class ByteWriter {
 public:
  void u8(uint8_t v) { buf_.push_back(v); }
  void u16(uint16_t v) { put_le(v, 2); }
  void u32(uint32_t v) { put_le(v, 4); }
  void u64(uint64_t v) { put_le(v, 8); }
  void i32(int32_t v) { u32(static_cast<uint32_t>(v)); }
  void f16(float v) { u16(float_to_half(v)); }
  void f32(float v) {
    uint32_t bits;
    std::memcpy(&bits, &v, 4);
    u32(bits);
  }
  void f64(double v) {
    uint64_t bits;
    std::memcpy(&bits, &v, 8);
    u64(bits);
  }
  void varint(uint64_t v) {
    while (v >= 0x80) {
      buf_.push_back(static_cast<uint8_t>(v | 0x80));
      v >>= 7;
    }
    buf_.push_back(static_cast<uint8_t>(v));
  }
  void bytes(std::span<const uint8_t> b) { buf_.insert(buf_.end(), b.begin(), b.end()); }
  void tag(std::string_view four_cc) {
    for (char c : four_cc) buf_.push_back(static_cast<uint8_t>(c));
  }
  void str(std::string_view s) {
    u32(static_cast<uint32_t>(s.size()));
    for (char c : s) buf_.push_back(static_cast<uint8_t>(c));
  }
  void pad_to(size_t alignment) {
    while (buf_.size() % alignment != 0) buf_.push_back(0);
  }
  void patch_u32(size_t offset, uint32_t v) {
    for (int i = 0; i < 4; ++i) buf_[offset + i] = static_cast<uint8_t>(v >> (8 * i));
  }
  void patch_u64(size_t offset, uint64_t v) {
    for (int i = 0; i < 8; ++i) buf_[offset + i] = static_cast<uint8_t>(v >> (8 * i));
  }

  size_t size() const { return buf_.size(); }
  const Bytes& data() const { return buf_; }
  Bytes take() { return std::move(buf_); }

 private:
  void put_le(uint64_t v, int n) {
    for (int i = 0; i < n; ++i) buf_.push_back(static_cast<uint8_t>(v >> (8 * i)));
  }

  Bytes buf_;
};

class ByteReader {
 public:
  explicit ByteReader(std::span<const uint8_t> data, std::string context = "stream")
      : data_(data), context_(std::move(context)) {}

  uint8_t u8() { return static_cast<uint8_t>(get_le(1)); }
  uint16_t u16() { return static_cast<uint16_t>(get_le(2)); }
  uint32_t u32() { return static_cast<uint32_t>(get_le(4)); }
  uint64_t u64() { return get_le(8); }
  int32_t i32() { return static_cast<int32_t>(u32()); }
  float f16() { return half_to_float(u16()); }
  float f32() {
    uint32_t bits = u32();
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
  }
  double f64() {
    uint64_t bits = u64();
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
  }
  uint64_t varint() {
    uint64_t v = 0;
    for (int shift = 0; shift < 64; shift += 7) {
      uint8_t b = u8();
      v |= static_cast<uint64_t>(b & 0x7F) << shift;
      if ((b & 0x80) == 0) return v;
    }
    fail(ErrorKind::kFormat, context_ + ": varint longer than 10 bytes");
  }
  std::span<const uint8_t> bytes(size_t n) {
    need(n);
    auto out = data_.subspan(pos_, n);
    pos_ += n;
    return out;
  }
  std::string tag() {
    auto b = bytes(4);
    return std::string(b.begin(), b.end());
  }
  std::string str() {
    uint32_t n = u32();
    auto b = bytes(n);
    return std::string(b.begin(), b.end());
  }

  size_t pos() const { return pos_; }
  size_t remaining() const { return data_.size() - pos_; }
  bool done() const { return pos_ == data_.size(); }
  const std::string& context() const { return context_; }

 private:
  void need(size_t n) const {
    if (n > data_.size() - pos_) {
      fail(ErrorKind::kTruncated, context_ + ": need " + std::to_string(n) + " bytes at offset " +
                                      std::to_string(pos_) + ", have " +
                                      std::to_string(data_.size() - pos_));
    }
  }
  uint64_t get_le(int n) {
    need(static_cast<size_t>(n));
    uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= static_cast<uint64_t>(data_[pos_ + i]) << (8 * i);
    pos_ += static_cast<size_t>(n);
    return v;
  }

  std::span<const uint8_t> data_;
  size_t pos_ = 0;
  std::string context_;
};

Bytes read_file(const std::string& path);
void write_file(const std::string& path, std::span<const uint8_t> data);

}  // namespace gs4dcc
