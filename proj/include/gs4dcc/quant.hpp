#pragma once

// Scalar quantizers: per-column min–max fixed point for Gaussian attributes and
// unit-step rounding (plus its additive-noise training surrogate) for features.

#include <cstdint>
#include <span>
#include <vector>

namespace gs4dcc {

class Rng;

struct MinMaxQuant {
  int bits = 8;
  std::vector<double> mins;  // per column
  std::vector<double> maxs;

  uint32_t levels() const { return (1u << bits) - 1u; }
  size_t columns() const { return mins.size(); }
  friend bool operator==(const MinMaxQuant&, const MinMaxQuant&) = default;
};

struct QuantizedTensor {
  size_t rows = 0;
  size_t cols = 0;
  std::vector<uint32_t> symbols;  // row-major
  MinMaxQuant quant;
  friend bool operator==(const QuantizedTensor&, const QuantizedTensor&) = default;
};

// Round half to even.
double round_half_even(double x);

// values: rows × cols row-major.
MinMaxQuant fit_minmax(std::span<const double> values, size_t rows, size_t cols, int bits);
QuantizedTensor quantize_with(std::span<const double> values, size_t rows, size_t cols, const MinMaxQuant& q);
QuantizedTensor quantize_minmax(std::span<const double> values, size_t rows, size_t cols, int bits);
std::vector<double> dequantize_minmax(const QuantizedTensor& qt);
// Worst-case reconstruction error for one column.
double minmax_error_bound(const MinMaxQuant& q, size_t col);

// Unit-step quantization.
int32_t round_quantize(double x);
std::vector<int32_t> round_quantize(std::span<const double> x);
// x + U(−½, ½), the differentiable training stand-in for rounding.
double noise_quantize(double x, Rng& rng);
std::vector<double> noise_quantize(std::span<const double> x, Rng& rng);

}  // namespace gs4dcc
