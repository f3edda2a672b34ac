#pragma once

// Range coder over frozen integer CDFs.
//
// 64-bit low register, 32-bit range, byte-wise renormalisation with delayed
// carry propagation (cache byte + run of 0xFF). The leading byte of the
// classic scheme is always zero and is not written. At flush the final value
// is chosen inside [low, low+range) with as many trailing zero bytes as
// possible, and up to four trailing zero bytes are dropped; the decoder pads
// with at most four zeros before reporting exhausted input.

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "gs4dcc/bytes.hpp"

namespace gs4dcc {

constexpr int kDefaultCdfPrecision = 16;

struct IntegerCdf {
  int precision = kDefaultCdfPrecision;
  std::vector<uint32_t> cumulative;  // size = alphabet + 1, [0] = 0, back() = 2^precision

  size_t alphabet() const { return cumulative.empty() ? 0 : cumulative.size() - 1; }
  uint32_t mass(size_t symbol) const { return cumulative[symbol + 1] - cumulative[symbol]; }
  uint32_t total() const { return 1u << precision; }
  // Throws kInvalid if any invariant is violated.
  void validate() const;
  friend bool operator==(const IntegerCdf&, const IntegerCdf&) = default;
};

// Uniform CDF over `alphabet` symbols, remainders assigned to the lowest symbols.
IntegerCdf uniform_cdf(size_t alphabet, int precision = kDefaultCdfPrecision);

class RangeEncoder {
 public:
  explicit RangeEncoder(int precision = kDefaultCdfPrecision);

  // Encodes `symbol` with masses taken from `cumulative` (length alphabet+1).
  void encode(uint32_t symbol, std::span<const uint32_t> cumulative);
  void encode(uint32_t symbol, const IntegerCdf& cdf) { encode(symbol, cdf.cumulative); }

  Bytes finish();

 private:
  void shift_low();
  void emit(uint8_t b);

  int precision_;
  uint64_t low_ = 0;
  uint32_t range_ = 0xFFFFFFFFu;
  uint8_t cache_ = 0;
  uint64_t cache_size_ = 1;
  bool first_ = true;
  bool finished_ = false;
  Bytes out_;
};

class RangeDecoder {
 public:
  explicit RangeDecoder(std::span<const uint8_t> data, int precision = kDefaultCdfPrecision);

  uint32_t decode(std::span<const uint32_t> cumulative);
  uint32_t decode(const IntegerCdf& cdf) { return decode(cdf.cumulative); }

  // Bytes consumed including implicit zero padding.
  size_t consumed() const { return pos_; }

 private:
  uint8_t next_byte();
  void normalize();

  std::span<const uint8_t> data_;
  int precision_;
  size_t pos_ = 0;
  uint32_t range_ = 0xFFFFFFFFu;
  uint32_t code_ = 0;
};

using CdfProvider = std::function<const IntegerCdf&(size_t index)>;

Bytes encode_symbols(std::span<const uint32_t> symbols, const CdfProvider& provider);
std::vector<uint32_t> decode_symbols(std::span<const uint8_t> bytes, const CdfProvider& provider, size_t n);

// Σ −log2(mass/2^P) of the symbols under their CDFs.
double ideal_bits(std::span<const uint32_t> symbols, const CdfProvider& provider);

}  // namespace gs4dcc
