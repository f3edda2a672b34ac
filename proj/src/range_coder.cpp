#include "gs4dcc/range_coder.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace gs4dcc {

namespace {

constexpr uint32_t kTop = 1u << 24;
constexpr int kMaxPadBytes = 4;

void check_precision(int precision) {
  require(precision >= 1 && precision <= 16, ErrorKind::kInvalid,
          "CDF precision must be in [1,16], got " + std::to_string(precision));
}

}  // namespace

void IntegerCdf::validate() const {
  check_precision(precision);
  require(cumulative.size() >= 2, ErrorKind::kInvalid, "CDF needs at least one symbol");
  require(cumulative.front() == 0, ErrorKind::kInvalid, "CDF must start at 0");
  require(cumulative.back() == total(), ErrorKind::kInvalid, "CDF must end at 2^precision");
  for (size_t i = 0; i + 1 < cumulative.size(); ++i)
    require(cumulative[i] < cumulative[i + 1], ErrorKind::kInvalid,
            "CDF not strictly increasing at symbol " + std::to_string(i));
}

IntegerCdf uniform_cdf(size_t alphabet, int precision) {
  check_precision(precision);
  const uint32_t total = 1u << precision;
  require(alphabet >= 1 && alphabet <= total, ErrorKind::kInvalid, "uniform_cdf alphabet out of range");
  IntegerCdf cdf;
  cdf.precision = precision;
  cdf.cumulative.resize(alphabet + 1);
  const uint32_t base = total / static_cast<uint32_t>(alphabet);
  const uint32_t extra = total % static_cast<uint32_t>(alphabet);
  uint32_t acc = 0;
  for (size_t i = 0; i < alphabet; ++i) {
    cdf.cumulative[i] = acc;
    acc += base + (i < extra ? 1u : 0u);
  }
  cdf.cumulative[alphabet] = acc;
  return cdf;
}

RangeEncoder::RangeEncoder(int precision) : precision_(precision) { check_precision(precision); }

void RangeEncoder::emit(uint8_t b) {
  if (first_) {
    first_ = false;  // always zero; the decoder starts one byte in
    return;
  }
  out_.push_back(b);
}

void RangeEncoder::shift_low() {
  if (static_cast<uint32_t>(low_) < 0xFF000000u || (low_ >> 32) != 0) {
    const uint8_t carry = static_cast<uint8_t>(low_ >> 32);
    uint8_t temp = cache_;
    do {
      emit(static_cast<uint8_t>(temp + carry));
      temp = 0xFF;
    } while (--cache_size_ != 0);
    cache_ = static_cast<uint8_t>(static_cast<uint32_t>(low_) >> 24);
  }
  ++cache_size_;
  low_ = static_cast<uint64_t>(static_cast<uint32_t>(low_) << 8);
}

void RangeEncoder::encode(uint32_t symbol, std::span<const uint32_t> cumulative) {
  require(!finished_, ErrorKind::kInvalid, "encode after finish");
  require(cumulative.size() >= 2 && symbol + 1 < cumulative.size(), ErrorKind::kInvalid,
          "symbol " + std::to_string(symbol) + " outside alphabet of size " +
              std::to_string(cumulative.size() ? cumulative.size() - 1 : 0));
  const uint32_t lo = cumulative[symbol];
  const uint32_t hi = cumulative[symbol + 1];
  const uint32_t total = 1u << precision_;
  require(lo < hi && hi <= total, ErrorKind::kInvalid,
          "symbol " + std::to_string(symbol) + " has zero or invalid mass");
  const uint32_t r = range_ >> precision_;
  low_ += static_cast<uint64_t>(r) * lo;
  if (hi == total) {
    range_ -= r * lo;  // the last symbol absorbs the truncation remainder
  } else {
    range_ = r * (hi - lo);
  }
  while (range_ < kTop) {
    range_ <<= 8;
    shift_low();
  }
}

Bytes RangeEncoder::finish() {
  require(!finished_, ErrorKind::kInvalid, "finish called twice");
  finished_ = true;
  // Pick the value in [low, low+range) with the most trailing zero bytes.
  const uint64_t last = low_ + range_ - 1;
  for (int k = 1; k <= 4; ++k) {
    const uint64_t mask = (1ull << (32 - 8 * k)) - 1;
    const uint64_t v = (low_ + mask) & ~mask;
    if (v <= last) {
      low_ = v;
      break;
    }
  }
  for (int i = 0; i < 5; ++i) shift_low();
  int stripped = 0;
  while (!out_.empty() && out_.back() == 0 && stripped < kMaxPadBytes) {
    out_.pop_back();
    ++stripped;
  }
  return std::move(out_);
}

RangeDecoder::RangeDecoder(std::span<const uint8_t> data, int precision) : data_(data), precision_(precision) {
  check_precision(precision);
  for (int i = 0; i < 4; ++i) code_ = (code_ << 8) | next_byte();
}

uint8_t RangeDecoder::next_byte() {
  if (pos_ < data_.size()) return data_[pos_++];
  if (pos_ >= data_.size() + kMaxPadBytes)
    fail(ErrorKind::kTruncated, "range decoder input exhausted after " + std::to_string(data_.size()) + " bytes");
  ++pos_;
  return 0;
}

void RangeDecoder::normalize() {
  while (range_ < kTop) {
    code_ = (code_ << 8) | next_byte();
    range_ <<= 8;
  }
}

uint32_t RangeDecoder::decode(std::span<const uint32_t> cumulative) {
  require(cumulative.size() >= 2, ErrorKind::kInvalid, "decode with empty CDF");
  const uint32_t total = 1u << precision_;
  const uint32_t r = range_ >> precision_;
  uint32_t value = code_ / r;
  if (value >= total) value = total - 1;
  auto it = std::upper_bound(cumulative.begin(), cumulative.end(), value);
  if (it == cumulative.begin() || it == cumulative.end())
    fail(ErrorKind::kFormat, "decoded value outside CDF; stream and model disagree");
  const size_t symbol = static_cast<size_t>(it - cumulative.begin()) - 1;
  const uint32_t lo = cumulative[symbol];
  const uint32_t hi = cumulative[symbol + 1];
  code_ -= r * lo;
  if (hi == total) {
    range_ -= r * lo;
  } else {
    range_ = r * (hi - lo);
  }
  if (code_ >= range_) fail(ErrorKind::kFormat, "range decoder state corrupt; stream and model disagree");
  normalize();
  return static_cast<uint32_t>(symbol);
}

Bytes encode_symbols(std::span<const uint32_t> symbols, const CdfProvider& provider) {
  int precision = kDefaultCdfPrecision;
  if (!symbols.empty()) precision = provider(0).precision;
  RangeEncoder enc(precision);
  for (size_t i = 0; i < symbols.size(); ++i) {
    const IntegerCdf& cdf = provider(i);
    require(cdf.precision == precision, ErrorKind::kInvalid, "CDF precision changed mid-stream");
    enc.encode(symbols[i], cdf);
  }
  return enc.finish();
}

std::vector<uint32_t> decode_symbols(std::span<const uint8_t> bytes, const CdfProvider& provider, size_t n) {
  std::vector<uint32_t> out;
  out.reserve(n);
  if (n == 0) return out;
  const int precision = provider(0).precision;
  RangeDecoder dec(bytes, precision);
  for (size_t i = 0; i < n; ++i) {
    const IntegerCdf& cdf = provider(i);
    require(cdf.precision == precision, ErrorKind::kInvalid, "CDF precision changed mid-stream");
    out.push_back(dec.decode(cdf));
  }
  return out;
}

double ideal_bits(std::span<const uint32_t> symbols, const CdfProvider& provider) {
  double bits = 0.0;
  for (size_t i = 0; i < symbols.size(); ++i) {
    const IntegerCdf& cdf = provider(i);
    bits -= std::log2(static_cast<double>(cdf.mass(symbols[i])) / cdf.total());
  }
  return bits;
}

}  // namespace gs4dcc
