#include "gs4dcc/quant.hpp"

#include <algorithm>
#include <cfenv>
#include <cmath>
#include <limits>

#include "gs4dcc/error.hpp"
#include "gs4dcc/rng.hpp"

namespace gs4dcc {

double round_half_even(double x) {
  // nearbyint honours the current rounding mode; the codec never changes it
  // from FE_TONEAREST, which is ties-to-even.
  return std::nearbyint(x);
}

MinMaxQuant fit_minmax(std::span<const double> values, size_t rows, size_t cols, int bits) {
  require(bits >= 1 && bits <= 16, ErrorKind::kInvalid, "min-max bits must be in [1,16]");
  require(values.size() == rows * cols, ErrorKind::kShape, "quantize_minmax value count mismatch");
  MinMaxQuant q;
  q.bits = bits;
  q.mins.assign(cols, 0.0);
  q.maxs.assign(cols, 0.0);
  for (size_t c = 0; c < cols; ++c) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (size_t r = 0; r < rows; ++r) {
      double v = values[r * cols + c];
      require(std::isfinite(v), ErrorKind::kInvalid, "quantize_minmax got a non-finite value");
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    if (rows == 0) lo = hi = 0.0;
    q.mins[c] = lo;
    q.maxs[c] = hi;
  }
  return q;
}

QuantizedTensor quantize_with(std::span<const double> values, size_t rows, size_t cols, const MinMaxQuant& q) {
  require(values.size() == rows * cols && q.columns() == cols, ErrorKind::kShape,
          "quantize_with shape mismatch");
  QuantizedTensor qt{rows, cols, std::vector<uint32_t>(rows * cols), q};
  const double levels = q.levels();
  for (size_t c = 0; c < cols; ++c) {
    const double range = q.maxs[c] - q.mins[c];
    const double scale = range > 0.0 ? levels / range : 0.0;
    for (size_t r = 0; r < rows; ++r) {
      double s = round_half_even((values[r * cols + c] - q.mins[c]) * scale);
      qt.symbols[r * cols + c] = static_cast<uint32_t>(std::clamp(s, 0.0, levels));
    }
  }
  return qt;
}

QuantizedTensor quantize_minmax(std::span<const double> values, size_t rows, size_t cols, int bits) {
  return quantize_with(values, rows, cols, fit_minmax(values, rows, cols, bits));
}

std::vector<double> dequantize_minmax(const QuantizedTensor& qt) {
  std::vector<double> out(qt.rows * qt.cols);
  const double levels = qt.quant.levels();
  for (size_t c = 0; c < qt.cols; ++c) {
    const double step = (qt.quant.maxs[c] - qt.quant.mins[c]) / levels;
    for (size_t r = 0; r < qt.rows; ++r)
      out[r * qt.cols + c] = qt.quant.mins[c] + qt.symbols[r * qt.cols + c] * step;
  }
  return out;
}

double minmax_error_bound(const MinMaxQuant& q, size_t col) {
  return (q.maxs[col] - q.mins[col]) / (2.0 * q.levels());
}

int32_t round_quantize(double x) { return static_cast<int32_t>(round_half_even(x)); }

std::vector<int32_t> round_quantize(std::span<const double> x) {
  std::vector<int32_t> out(x.size());
  for (size_t i = 0; i < x.size(); ++i) out[i] = round_quantize(x[i]);
  return out;
}

double noise_quantize(double x, Rng& rng) { return x + rng.centered(); }

std::vector<double> noise_quantize(std::span<const double> x, Rng& rng) {
  std::vector<double> out(x.size());
  for (size_t i = 0; i < x.size(); ++i) out[i] = noise_quantize(x[i], rng);
  return out;
}

}  // namespace gs4dcc
