#pragma once

// Probability models for the coded streams: discretized Gaussians with tail
// folding, a self-describing per-channel factorized prior, CDF freezing and
// rate evaluation (exact and noisy-surrogate).

#include <cstdint>
#include <span>
#include <vector>

#include "gs4dcc/range_coder.hpp"

namespace gs4dcc {

constexpr double kSigmaMin = 1e-2;
constexpr double kSigmaMax = 4096.0;  // 2^12

struct Support {
  int32_t lo = 0;
  int32_t hi = 0;
  size_t size() const { return static_cast<size_t>(static_cast<int64_t>(hi) - lo + 1); }
  bool contains(int32_t v) const { return v >= lo && v <= hi; }
  friend bool operator==(const Support&, const Support&) = default;
};

// Smallest support covering all values; {0,0} when empty.
Support support_of(std::span<const int32_t> values);

double clamp_sigma(double sigma);

// P(k) = Φ((k+½−μ)/σ) − Φ((k−½−μ)/σ) on [lo, hi]; the end bins absorb both tails.
std::vector<double> dg_pmf(double mu, double sigma, Support support);

// Proportional scaling to 2^precision with a floor of one count per bin and
// largest-remainder correction (ties go to the lower index).
IntegerCdf freeze_cdf(std::span<const double> pmf, int precision = kDefaultCdfPrecision);

// dg_pmf followed by freeze_cdf, into a reusable buffer.
void dg_cdf(double mu, double sigma, Support support, IntegerCdf& out, int precision = kDefaultCdfPrecision);

// Σ −log2 p(symbol), p floored at 2^−precision.
double rate_bits(std::span<const int32_t> symbols, std::span<const std::vector<double>> pmfs,
                 Support support, int precision = kDefaultCdfPrecision);

// Σ −log2 [Φ((x̃+½−μ)/σ) − Φ((x̃−½−μ)/σ)], with optional gradients.
struct NoisyRate {
  double bits = 0.0;
  std::vector<double> d_x, d_mu, d_sigma;
};
NoisyRate noisy_rate_bits(std::span<const double> x, std::span<const double> mu,
                          std::span<const double> sigma, bool with_grad = false);

// Per-channel discretized Gaussian, stored raw so a decoder needs no network.
struct FactorizedPrior {
  std::vector<float> mu;
  std::vector<float> sigma;

  size_t channels() const { return mu.size(); }
  // Moment fit over values laid out channel-major: values[c * per_channel + i].
  static FactorizedPrior fit(std::span<const int32_t> values, size_t channels);
  friend bool operator==(const FactorizedPrior&, const FactorizedPrior&) = default;
};

}  // namespace gs4dcc
