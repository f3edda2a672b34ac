#include <cmath>

#include "doctest.h"
#include "gs4dcc/error.hpp"
#include "gs4dcc/quant.hpp"
#include "gs4dcc/rng.hpp"

using namespace gs4dcc;

TEST_CASE("minmax: [0, 1] at 8 bits maps to the end codes") {
  std::vector<double> v{0.0, 1.0};
  QuantizedTensor q = quantize_minmax(v, 2, 1, 8);
  CHECK(q.symbols == std::vector<uint32_t>{0, 255});
  CHECK(dequantize_minmax(q) == v);
}

TEST_CASE("minmax: constant column quantizes to 0 and restores exactly") {
  std::vector<double> v(5, 7.0);
  QuantizedTensor q = quantize_minmax(v, 5, 1, 8);
  CHECK(q.symbols == std::vector<uint32_t>(5, 0));
  CHECK(q.quant.mins[0] == 7.0);
  CHECK(q.quant.maxs[0] == 7.0);
  CHECK(dequantize_minmax(q) == v);
}

TEST_CASE("minmax: 16-bit error bound range / 131070 holds for every entry") {
  Rng rng(21);
  const size_t n = 20000;
  std::vector<double> v(n * 2);
  for (size_t i = 0; i < n; ++i) {
    v[2 * i] = rng.uniform(-3.0, 5.0);
    v[2 * i + 1] = 1000.0 * rng.normal();
  }
  QuantizedTensor q = quantize_minmax(v, n, 2, 16);
  auto d = dequantize_minmax(q);
  for (size_t c = 0; c < 2; ++c) {
    const double range = q.quant.maxs[c] - q.quant.mins[c];
    const double bound = range / 131070.0;
    CHECK(minmax_error_bound(q.quant, c) == doctest::Approx(bound));
    double worst = 0.0;
    for (size_t i = 0; i < n; ++i) worst = std::max(worst, std::abs(v[2 * i + c] - d[2 * i + c]));
    CHECK(worst <= bound * (1 + 1e-12));
  }
}

TEST_CASE("minmax: shape and finiteness errors") {
  std::vector<double> v{1, 2, 3};
  CHECK_THROWS_AS(quantize_minmax(v, 2, 2, 8), Error);
  std::vector<double> bad{1.0, NAN};
  CHECK_THROWS_AS(quantize_minmax(bad, 2, 1, 8), Error);
}

TEST_CASE("round_quantize uses ties to even") {
  CHECK(round_quantize(2.5) == 2);
  CHECK(round_quantize(3.5) == 4);
  CHECK(round_quantize(-2.5) == -2);
  CHECK(round_quantize(-0.4) == 0);
  CHECK(round_half_even(0.5) == 0.0);
}

TEST_CASE("noise_quantize deviation lies in (-1/2, 1/2) and averages to zero") {
  // 20 streams of 10^6 draws, pooled
  const size_t n = 1000000, streams = 20;
  double sum = 0.0;
  for (uint64_t seed = 20; seed < 20 + streams; ++seed) {
    Rng rng(seed);
    for (size_t i = 0; i < n; ++i) {
      const double x = 0.001 * static_cast<double>(i % 997);
      const double d = noise_quantize(x, rng) - x;
      REQUIRE(d > -0.5);
      REQUIRE(d < 0.5);
      sum += d;
    }
  }
  // U(-1/2, 1/2) has σ = 1/√12
  const double total = double(n * streams);
  CHECK(std::abs(sum / total) < 3.0 / std::sqrt(12.0) / std::sqrt(total));
}
