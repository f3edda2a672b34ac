#include "gs4dcc/vqcc.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

#include "gs4dcc/interchange.hpp"
#include "gs4dcc/quant.hpp"
#include "gs4dcc/rng.hpp"
#include "gs4dcc/vq.hpp"

namespace gs4dcc {

namespace {
constexpr size_t kSynthesisHidden = 32;
}

MlpSpec VqccParams::synthesis_spec(uint32_t dim, uint32_t hyper) {
  return MlpSpec{{hyper, kSynthesisHidden, 2 * size_t{dim}}, {Activation::kRelu, Activation::kIdentity}};
}

void VqccParams::round_to_half() {
  for (size_t l = 0; l < synthesis.spec.layers(); ++l) {
    for (double& v : synthesis.weights.w[l].data()) v = gs4dcc::round_to_half(static_cast<float>(v));
    for (double& v : synthesis.weights.b[l]) v = gs4dcc::round_to_half(static_cast<float>(v));
  }
}

void write_vqcc_params(ByteWriter& w, const VqccParams& p) {
  w.u32(p.dim);
  w.u32(p.hyper);
  w.f32(p.y_offset);
  w.f32(p.y_scale);
  w.i32(p.z_support.lo);
  w.i32(p.z_support.hi);
  w.i32(p.y_support.lo);
  w.i32(p.y_support.hi);
  for (size_t c = 0; c < p.hyper; ++c) {
    w.f32(p.z_prior.mu[c]);
    w.f32(p.z_prior.sigma[c]);
  }
  write_mlp(w, p.synthesis, true);
}

VqccParams read_vqcc_params(ByteReader& r) {
  VqccParams p;
  p.dim = r.u32();
  p.hyper = r.u32();
  require(p.dim <= 4096 && p.hyper >= 1 && p.hyper <= 4096, ErrorKind::kFormat, "implausible VQCC shape");
  p.y_offset = r.f32();
  p.y_scale = r.f32();
  p.z_support = {r.i32(), r.i32()};
  p.y_support = {r.i32(), r.i32()};
  require(p.z_support.lo <= p.z_support.hi && p.y_support.lo <= p.y_support.hi, ErrorKind::kFormat,
          "VQCC support lo > hi");
  p.z_prior.mu.resize(p.hyper);
  p.z_prior.sigma.resize(p.hyper);
  for (size_t c = 0; c < p.hyper; ++c) {
    p.z_prior.mu[c] = r.f32();
    p.z_prior.sigma[c] = r.f32();
  }
  p.synthesis = read_mlp(r, true);
  require(p.synthesis.spec.in_width() == p.hyper && p.synthesis.spec.out_width() == 2 * size_t{p.dim},
          ErrorKind::kFormat, "VQCC synthesis widths do not match H and D");
  return p;
}

std::vector<int32_t> vqcc_latent_symbols(const Matrix& z) {
  std::vector<int32_t> out(z.size());
  for (size_t i = 0; i < z.size(); ++i) out[i] = round_quantize(z.data()[i]);
  return out;
}

void vqcc_fit_statistics(VqccModel& m, std::span<const uint32_t> symbols) {
  const size_t k = m.z.rows();
  const auto zbar = vqcc_latent_symbols(m.z);
  m.params.z_support = support_of(zbar);
  std::vector<int32_t> y(symbols.begin(), symbols.end());
  m.params.y_support = support_of(y);
  if (k == 0) return;
  // Channel-major copy for the moment fit.
  std::vector<int32_t> by_channel(zbar.size());
  for (size_t i = 0; i < k; ++i)
    for (size_t c = 0; c < m.params.hyper; ++c) by_channel[c * k + i] = zbar[i * m.params.hyper + c];
  m.params.z_prior = FactorizedPrior::fit(by_channel, m.params.hyper);
}

namespace {

VqccModel blank_model(size_t k, uint32_t dim, uint32_t hyper) {
  VqccModel m;
  m.params.dim = dim;
  m.params.hyper = hyper;
  m.params.synthesis = Mlp::zeros(VqccParams::synthesis_spec(dim, hyper));
  m.params.z_prior = FactorizedPrior{std::vector<float>(hyper, 0.0f), std::vector<float>(hyper, 1.0f)};
  m.z = Matrix(k, hyper);
  return m;
}

// Small noise on hidden units [from, end) so unused units can start learning.
void jitter(Mlp& mlp, Rng& rng, size_t from = 0) {
  Matrix& w1 = mlp.weights.w[0];
  Matrix& w2 = mlp.weights.w[1];
  for (size_t j = from; j < w1.rows(); ++j) {
    for (size_t c = 0; c < w1.cols(); ++c) w1(j, c) += rng.uniform(-1e-3, 1e-3);
    for (size_t o = 0; o < w2.rows(); ++o) w2(o, j) += rng.uniform(-1e-3, 1e-3);
  }
}

// Linear model: z carries the top principal components at a common step.
VqccModel pca_model(std::span<const uint32_t> symbols, size_t k, uint32_t dim, uint32_t hyper, Rng& rng) {
  VqccModel m = blank_model(k, dim, hyper);
  VqccParams& p = m.params;
  Eigen::MatrixXd y(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(dim));
  for (size_t i = 0; i < k; ++i)
    for (size_t d = 0; d < dim; ++d) y(i, d) = symbols[i * dim + d];
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(dim);
  if (k > 0) mean = y.colwise().mean().transpose();
  Eigen::MatrixXd yc = y.rowwise() - mean.transpose();
  Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(dim, dim);
  if (k > 1) cov = (yc.transpose() * yc) / static_cast<double>(k);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  // Eigen sorts ascending; take the top components.
  const size_t used = std::min<size_t>(hyper, dim);
  Eigen::MatrixXd basis(dim, used);
  std::vector<double> lambda(used);
  for (size_t j = 0; j < used; ++j) {
    const Eigen::Index col = static_cast<Eigen::Index>(dim - 1 - j);
    basis.col(static_cast<Eigen::Index>(j)) = eig.eigenvectors().col(col);
    lambda[j] = std::max(0.0, eig.eigenvalues()(col));
    // Fix the sign so the largest entry is positive (deterministic across solvers).
    Eigen::Index arg;
    basis.col(static_cast<Eigen::Index>(j)).cwiseAbs().maxCoeff(&arg);
    if (basis(arg, static_cast<Eigen::Index>(j)) < 0) basis.col(static_cast<Eigen::Index>(j)) *= -1.0;
  }
  double total_var = 0.0;
  for (Eigen::Index d = 0; d < cov.rows(); ++d) total_var += cov(d, d);
  double kept = 0.0;
  for (double l : lambda) kept += l;
  const double resid_var = dim ? std::max(0.0, total_var - kept) / dim : 0.0;

  // Latent step s: trade the z rate against the y residual it leaves,
  // using Gaussian high-rate estimates.
  auto est_bits = [&](double s) {
    const double ln_c = 0.5 * std::log2(2.0 * M_PI * M_E);
    double bits = 0.0;
    for (double l : lambda) bits += std::max(0.0, ln_c + 0.5 * std::log2(l / (s * s) + 1.0 / 12.0));
    const double res = resid_var + static_cast<double>(used) * s * s / (12.0 * std::max<uint32_t>(dim, 1)) + 1.0 / 12.0;
    bits += dim * std::max(0.0, ln_c + 0.5 * std::log2(res));
    return bits;
  };
  double step = 1.0, best = est_bits(1.0);
  for (double s = 1.0; s <= 256.0; s *= 1.1892071150027210) {  // 2^(1/4)
    const double b = est_bits(s);
    if (b < best) best = b, step = s;
  }

  for (size_t i = 0; i < k; ++i)
    for (size_t j = 0; j < used; ++j) {
      double c = 0.0;
      for (size_t d = 0; d < dim; ++d) c += yc(i, d) * basis(d, j);
      m.z(i, j) = c / step;
    }

  // Synthesis: hidden pairs carry relu(±ẑ_j), output μ is the linear reconstruction.
  Matrix& w1 = p.synthesis.weights.w[0];
  Matrix& w2 = p.synthesis.weights.w[1];
  auto& b2 = p.synthesis.weights.b[1];
  const double a = step / p.y_scale;
  for (size_t j = 0; j < used && 2 * j + 1 < kSynthesisHidden; ++j) {
    w1(2 * j, j) = 1.0;
    w1(2 * j + 1, j) = -1.0;
    for (size_t d = 0; d < dim; ++d) {
      w2(d, 2 * j) = a * basis(d, j);
      w2(d, 2 * j + 1) = -a * basis(d, j);
    }
  }
  const double sigma0 = std::sqrt(resid_var + used * step * step / (12.0 * std::max<uint32_t>(dim, 1)) + 1.0 / 12.0);
  for (size_t d = 0; d < dim; ++d) {
    b2[d] = (mean(d) - p.y_offset) / p.y_scale;
    b2[dim + d] = std::log(std::max(sigma0, 0.5) / p.y_scale);
  }
  jitter(p.synthesis, rng);
  vqcc_fit_statistics(m, symbols);
  return m;
}

// Cluster model: z channel 0 holds a cluster code; the hidden layer is a
// piecewise-linear basis in that code, so each code maps exactly to its
// cluster's mean and spread. Needs m - 1 hidden units.
VqccModel cluster_model(std::span<const uint32_t> symbols, size_t k, uint32_t dim, uint32_t hyper, size_t clusters,
                        Rng& rng) {
  VqccModel m = blank_model(k, dim, hyper);
  VqccParams& p = m.params;
  Matrix x(k, dim);
  for (size_t i = 0; i < x.size(); ++i) x.data()[i] = symbols[i];
  const KMeansResult km = kmeans_fit(x, clusters, rng.next_u64());

  // Most populated clusters get codes nearest the middle, where the prior is densest.
  std::vector<size_t> pop(clusters, 0);
  for (uint32_t c : km.indices) ++pop[c];
  std::vector<size_t> by_pop(clusters);
  for (size_t c = 0; c < clusters; ++c) by_pop[c] = c;
  std::stable_sort(by_pop.begin(), by_pop.end(), [&](size_t a, size_t b) { return pop[a] > pop[b]; });
  std::vector<int> code(clusters);
  for (size_t r = 0; r < clusters; ++r) code[by_pop[r]] = (r % 2 ? -1 : 1) * static_cast<int>((r + 1) / 2);
  std::vector<size_t> order(clusters);  // cluster at each ascending code
  for (size_t c = 0; c < clusters; ++c) order[c] = c;
  std::sort(order.begin(), order.end(), [&](size_t a, size_t b) { return code[a] < code[b]; });

  // Target outputs per cluster: normalised mean and log spread.
  Matrix target(clusters, 2 * size_t{dim});
  {
    std::vector<double> sum(clusters * dim, 0.0), sq(clusters * dim, 0.0);
    for (size_t i = 0; i < k; ++i)
      for (size_t d = 0; d < dim; ++d) {
        const double v = x(i, d);
        sum[km.indices[i] * dim + d] += v;
        sq[km.indices[i] * dim + d] += v * v;
      }
    for (size_t c = 0; c < clusters; ++c)
      for (size_t d = 0; d < dim; ++d) {
        const double n = static_cast<double>(std::max<size_t>(pop[c], 1));
        const double mean = sum[c * dim + d] / n;
        const double var = std::max(0.0, sq[c * dim + d] / n - mean * mean) + 1.0 / 12.0;
        target(c, d) = (mean - p.y_offset) / p.y_scale;
        target(c, dim + d) = std::log(std::max(std::sqrt(var), 0.5) / p.y_scale);
      }
  }
  Matrix& w1 = p.synthesis.weights.w[0];
  auto& b1 = p.synthesis.weights.b[0];
  Matrix& w2 = p.synthesis.weights.w[1];
  auto& b2 = p.synthesis.weights.b[1];
  const size_t out = 2 * size_t{dim};
  const double first = code[order[0]];
  // Weights are solved one unit at a time against the already binary16-rounded
  // earlier ones, so rounding error does not accumulate along the ramp.
  auto half = [](double v) { return static_cast<double>(gs4dcc::round_to_half(static_cast<float>(v))); };
  for (size_t o = 0; o < out; ++o) b2[o] = half(target(order[0], o));
  for (size_t j = 0; j + 1 < clusters; ++j) {
    // Unit j turns on at code j (relative to the lowest code).
    w1(j, 0) = 1.0;
    b1[j] = -(first + static_cast<double>(j));
    for (size_t o = 0; o < out; ++o) {
      double at_next = b2[o];
      for (size_t i = 0; i < j; ++i) at_next += w2(o, i) * static_cast<double>(j + 1 - i);
      w2(o, j) = half(target(order[j + 1], o) - at_next);
    }
  }
  for (size_t i = 0; i < k; ++i) m.z(i, 0) = code[km.indices[i]];
  jitter(p.synthesis, rng, clusters - 1);
  vqcc_fit_statistics(m, symbols);
  return m;
}

// Rate as it would be coded, i.e. with a binary16 synthesis.
double measured_bits(VqccModel m, std::span<const uint32_t> symbols) {
  m.params.round_to_half();
  const VqccRate r = vqcc_rate(symbols, vqcc_latent_symbols(m.z), m.z.rows(), m.params);
  return r.z_bits + r.y_bits;
}

}  // namespace

VqccModel vqcc_init(std::span<const uint32_t> symbols, size_t k, uint32_t dim, uint32_t hyper, uint64_t seed) {
  require(hyper >= 1, ErrorKind::kInvalid, "VQCC needs H >= 1");
  require(symbols.size() == k * dim, ErrorKind::kShape, "codebook symbols do not match K × D");
  Rng rng(seed);
  VqccModel best = pca_model(symbols, k, dim, hyper, rng);
  if (k < 2 || dim == 0) return best;
  double best_bits = measured_bits(best, symbols);
  const size_t max_clusters = std::min(k, kSynthesisHidden + 1);
  for (size_t c : {2, 4, 8, 16, 24, 33}) {
    const size_t n = std::min(c, max_clusters);
    VqccModel cand = cluster_model(symbols, k, dim, hyper, n, rng);
    const double bits = measured_bits(cand, symbols);
    if (bits < best_bits) best_bits = bits, best = std::move(cand);
    if (n == max_clusters) break;
  }
  return best;
}


void vqcc_distributions(const VqccParams& p, std::span<const int32_t> zbar, size_t k, std::vector<double>& mu,
                        std::vector<double>& sigma) {
  require(zbar.size() == k * p.hyper, ErrorKind::kShape, "latent symbols do not match K × H");
  Matrix zin(k, p.hyper);
  for (size_t i = 0; i < zbar.size(); ++i) zin.data()[i] = zbar[i];
  const Matrix out = mlp_forward(p.synthesis, zin);
  mu.resize(k * p.dim);
  sigma.resize(k * p.dim);
  for (size_t i = 0; i < k; ++i)
    for (size_t d = 0; d < p.dim; ++d) {
      mu[i * p.dim + d] = p.y_offset + p.y_scale * out(i, d);
      sigma[i * p.dim + d] = clamp_sigma(p.y_scale * std::exp(out(i, p.dim + d)));
    }
}

VqccStreams vqcc_encode(std::span<const uint32_t> symbols, std::span<const int32_t> zbar, size_t k,
                        const VqccParams& p) {
  require(symbols.size() == k * p.dim, ErrorKind::kShape, "codebook symbols do not match K × D");
  require(zbar.size() == k * p.hyper, ErrorKind::kShape, "latent symbols do not match K × H");
  VqccStreams s;
  IntegerCdf cdf;
  {
    std::vector<IntegerCdf> per_channel(p.hyper);
    for (size_t c = 0; c < p.hyper; ++c) dg_cdf(p.z_prior.mu[c], p.z_prior.sigma[c], p.z_support, per_channel[c]);
    RangeEncoder enc;
    for (size_t i = 0; i < zbar.size(); ++i) {
      require(p.z_support.contains(zbar[i]), ErrorKind::kInvalid, "latent symbol outside its support");
      enc.encode(static_cast<uint32_t>(zbar[i] - p.z_support.lo), per_channel[i % p.hyper]);
    }
    s.z = enc.finish();
  }
  std::vector<double> mu, sigma;
  vqcc_distributions(p, zbar, k, mu, sigma);
  RangeEncoder enc;
  for (size_t i = 0; i < symbols.size(); ++i) {
    const int32_t v = static_cast<int32_t>(symbols[i]);
    require(p.y_support.contains(v), ErrorKind::kInvalid, "codebook symbol outside its support");
    dg_cdf(mu[i], sigma[i], p.y_support, cdf);
    enc.encode(static_cast<uint32_t>(v - p.y_support.lo), cdf);
  }
  s.y = enc.finish();
  return s;
}

std::vector<uint32_t> vqcc_decode(std::span<const uint8_t> z_bytes, std::span<const uint8_t> y_bytes, size_t k,
                                  const VqccParams& p, std::vector<int32_t>* zbar_out) {
  std::vector<int32_t> zbar(k * p.hyper);
  {
    std::vector<IntegerCdf> per_channel(p.hyper);
    for (size_t c = 0; c < p.hyper; ++c) dg_cdf(p.z_prior.mu[c], p.z_prior.sigma[c], p.z_support, per_channel[c]);
    RangeDecoder dec(z_bytes);
    for (size_t i = 0; i < zbar.size(); ++i)
      zbar[i] = static_cast<int32_t>(dec.decode(per_channel[i % p.hyper])) + p.z_support.lo;
  }
  std::vector<double> mu, sigma;
  vqcc_distributions(p, zbar, k, mu, sigma);
  std::vector<uint32_t> out(k * p.dim);
  IntegerCdf cdf;
  RangeDecoder dec(y_bytes);
  for (size_t i = 0; i < out.size(); ++i) {
    dg_cdf(mu[i], sigma[i], p.y_support, cdf);
    out[i] = static_cast<uint32_t>(static_cast<int32_t>(dec.decode(cdf)) + p.y_support.lo);
  }
  if (zbar_out) *zbar_out = std::move(zbar);
  return out;
}

VqccRate vqcc_rate(std::span<const uint32_t> symbols, std::span<const int32_t> zbar, size_t k, const VqccParams& p) {
  VqccRate r;
  IntegerCdf cdf;
  std::vector<IntegerCdf> per_channel(p.hyper);
  for (size_t c = 0; c < p.hyper; ++c) dg_cdf(p.z_prior.mu[c], p.z_prior.sigma[c], p.z_support, per_channel[c]);
  for (size_t i = 0; i < zbar.size(); ++i) {
    const IntegerCdf& c = per_channel[i % p.hyper];
    r.z_bits -= std::log2(double(c.mass(static_cast<size_t>(zbar[i] - p.z_support.lo))) / c.total());
  }
  std::vector<double> mu, sigma;
  vqcc_distributions(p, zbar, k, mu, sigma);
  for (size_t i = 0; i < symbols.size(); ++i) {
    dg_cdf(mu[i], sigma[i], p.y_support, cdf);
    r.y_bits -=
        std::log2(double(cdf.mass(static_cast<size_t>(static_cast<int32_t>(symbols[i]) - p.y_support.lo))) /
                  cdf.total());
  }
  return r;
}

VqccGrads vqcc_surrogate(const VqccModel& m, std::span<const uint32_t> symbols, std::span<const double> noise) {
  const VqccParams& p = m.params;
  const size_t k = m.z.rows(), h = p.hyper, d = p.dim;
  require(noise.size() == k * h, ErrorKind::kShape, "one noise sample per latent");
  VqccGrads g;
  g.dz = Matrix(k, h);
  g.d_prior_mu.assign(h, 0.0);
  g.d_prior_sigma.assign(h, 0.0);
  if (k == 0) {
    g.synthesis = MlpGrads::zeros_like(p.synthesis);
    return g;
  }
  Matrix zt(k, h);
  for (size_t i = 0; i < zt.size(); ++i) zt.data()[i] = m.z.data()[i] + noise[i];

  // Latent rate under the factorized prior.
  std::vector<double> pm(k * h), ps(k * h);
  for (size_t i = 0; i < k; ++i)
    for (size_t c = 0; c < h; ++c) {
      pm[i * h + c] = p.z_prior.mu[c];
      ps[i * h + c] = p.z_prior.sigma[c];
    }
  NoisyRate zr = noisy_rate_bits(zt.data(), pm, ps, true);
  g.z_bits = zr.bits;
  for (size_t i = 0; i < k * h; ++i) {
    g.dz.data()[i] += zr.d_x[i];
    g.d_prior_mu[i % h] += zr.d_mu[i];
    g.d_prior_sigma[i % h] += zr.d_sigma[i];
  }

  // Codeword rate given the rounded latents, as the decoder sees them; the
  // gradient passes straight through the rounding.
  Matrix zr_in(k, h);
  for (size_t i = 0; i < zr_in.size(); ++i) zr_in.data()[i] = round_quantize(m.z.data()[i]);
  MlpTape tape;
  const Matrix out = mlp_forward(p.synthesis, zr_in, &tape);
  std::vector<double> x(k * d), mu(k * d), sigma(k * d);
  for (size_t i = 0; i < k; ++i)
    for (size_t j = 0; j < d; ++j) {
      x[i * d + j] = symbols[i * d + j];
      mu[i * d + j] = p.y_offset + p.y_scale * out(i, j);
      sigma[i * d + j] = p.y_scale * std::exp(out(i, d + j));
    }
  NoisyRate yr = noisy_rate_bits(x, mu, sigma, true);
  g.y_bits = yr.bits;
  Matrix up(k, 2 * d);
  for (size_t i = 0; i < k; ++i)
    for (size_t j = 0; j < d; ++j) {
      up(i, j) = yr.d_mu[i * d + j] * p.y_scale;
      up(i, d + j) = yr.d_sigma[i * d + j] * sigma[i * d + j];
    }
  g.synthesis = mlp_backward(p.synthesis, tape, up);
  g.dz += g.synthesis.dx;
  return g;
}

}  // namespace gs4dcc
