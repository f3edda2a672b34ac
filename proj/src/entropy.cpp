#include "gs4dcc/entropy.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "gs4dcc/error.hpp"
#include "gs4dcc/numkit.hpp"

namespace gs4dcc {

Support support_of(std::span<const int32_t> values) {
  if (values.empty()) return {0, 0};
  auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  return {*lo, *hi};
}

double clamp_sigma(double sigma) {
  if (!(sigma == sigma)) return kSigmaMax;  // NaN: least informative
  return std::clamp(sigma, kSigmaMin, kSigmaMax);
}

std::vector<double> dg_pmf(double mu, double sigma, Support support) {
  require(support.lo <= support.hi, ErrorKind::kInvalid, "support lo > hi");
  sigma = clamp_sigma(sigma);
  const size_t n = support.size();
  std::vector<double> pmf(n);
  if (n == 1) {
    pmf[0] = 1.0;
    return pmf;
  }
  // Bin edges e_j = (lo + j − ½ − μ)/σ for j = 1..n−1; the end bins extend to ±∞.
  auto edge = [&](size_t j) { return (support.lo + static_cast<double>(j) - 0.5 - mu) / sigma; };
  const double inf = std::numeric_limits<double>::infinity();
  for (size_t k = 0; k < n; ++k) {
    const double a = k == 0 ? -inf : edge(k);
    const double b = k + 1 == n ? inf : edge(k + 1);
    pmf[k] = normal_interval(a, b);
  }
  return pmf;
}

IntegerCdf freeze_cdf(std::span<const double> pmf, int precision) {
  require(precision >= 1 && precision <= 16, ErrorKind::kInvalid, "CDF precision must be in [1,16]");
  const size_t n = pmf.size();
  const uint64_t total = 1ull << precision;
  require(n >= 1, ErrorKind::kInvalid, "freeze_cdf needs a non-empty pmf");
  require(n <= total, ErrorKind::kInvalid,
          "alphabet of " + std::to_string(n) + " exceeds 2^" + std::to_string(precision));
  double sum = 0.0;
  for (double p : pmf) {
    require(std::isfinite(p) && p >= 0.0, ErrorKind::kInvalid, "pmf entries must be finite and >= 0");
    sum += p;
  }
  require(sum > 0.0, ErrorKind::kInvalid, "pmf has zero mass");

  const uint64_t spare = total - n;  // one count per bin is reserved up front
  std::vector<uint64_t> mass(n);
  std::vector<double> frac(n);
  uint64_t assigned = 0;
  for (size_t i = 0; i < n; ++i) {
    const double share = pmf[i] / sum * static_cast<double>(spare);
    const double fl = std::floor(share);
    mass[i] = 1 + static_cast<uint64_t>(fl);
    frac[i] = share - fl;
    assigned += mass[i];
  }
  if (assigned > total) {
    // Rounding in share can only overshoot by a count or two; take it back from the largest bins.
    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) { return mass[a] > mass[b]; });
    for (size_t i = 0; assigned > total; i = (i + 1) % n)
      if (mass[order[i]] > 1) --mass[order[i]], --assigned;
  } else if (assigned < total) {
    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) { return frac[a] > frac[b]; });
    for (size_t i = 0; assigned < total; i = (i + 1) % n) ++mass[order[i]], ++assigned;
  }

  IntegerCdf cdf;
  cdf.precision = precision;
  cdf.cumulative.resize(n + 1);
  uint64_t acc = 0;
  for (size_t i = 0; i < n; ++i) {
    cdf.cumulative[i] = static_cast<uint32_t>(acc);
    acc += mass[i];
  }
  cdf.cumulative[n] = static_cast<uint32_t>(acc);
  return cdf;
}

void dg_cdf(double mu, double sigma, Support support, IntegerCdf& out, int precision) {
  out = freeze_cdf(dg_pmf(mu, sigma, support), precision);
}

double rate_bits(std::span<const int32_t> symbols, std::span<const std::vector<double>> pmfs, Support support,
                 int precision) {
  require(symbols.size() == pmfs.size(), ErrorKind::kShape, "rate_bits: one pmf per symbol");
  const double floor = std::ldexp(1.0, -precision);
  double bits = 0.0;
  for (size_t i = 0; i < symbols.size(); ++i) {
    require(support.contains(symbols[i]), ErrorKind::kInvalid, "rate_bits: symbol outside support");
    const double p = pmfs[i][static_cast<size_t>(symbols[i] - support.lo)];
    bits -= std::log2(std::max(p, floor));
  }
  return bits;
}

NoisyRate noisy_rate_bits(std::span<const double> x, std::span<const double> mu, std::span<const double> sigma,
                          bool with_grad) {
  require(x.size() == mu.size() && x.size() == sigma.size(), ErrorKind::kShape,
          "noisy_rate_bits: x, mu, sigma lengths differ");
  NoisyRate r;
  if (with_grad) {
    r.d_x.resize(x.size());
    r.d_mu.resize(x.size());
    r.d_sigma.resize(x.size());
  }
  for (size_t i = 0; i < x.size(); ++i) {
    const double s = clamp_sigma(sigma[i]);
    BinBits b = gaussian_bin_bits(x[i], mu[i], s);
    r.bits += b.bits;
    if (with_grad) {
      r.d_x[i] = b.d_x;
      r.d_mu[i] = b.d_mu;
      r.d_sigma[i] = (sigma[i] >= kSigmaMin && sigma[i] <= kSigmaMax) ? b.d_sigma : 0.0;
    }
  }
  return r;
}

FactorizedPrior FactorizedPrior::fit(std::span<const int32_t> values, size_t channels) {
  require(channels > 0 && values.size() % channels == 0, ErrorKind::kShape,
          "FactorizedPrior::fit: values not divisible into channels");
  const size_t per = values.size() / channels;
  FactorizedPrior p;
  p.mu.resize(channels);
  p.sigma.resize(channels);
  for (size_t c = 0; c < channels; ++c) {
    double mean = 0.0;
    for (size_t i = 0; i < per; ++i) mean += values[c * per + i];
    mean = per ? mean / static_cast<double>(per) : 0.0;
    double var = 0.0;
    for (size_t i = 0; i < per; ++i) var += (values[c * per + i] - mean) * (values[c * per + i] - mean);
    var = per ? var / static_cast<double>(per) : 0.0;
    p.mu[c] = static_cast<float>(mean);
    p.sigma[c] = static_cast<float>(clamp_sigma(std::sqrt(var)));
  }
  return p;
}

}  // namespace gs4dcc
