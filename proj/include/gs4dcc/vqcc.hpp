#pragma once

// Codebook coding with per-codeword hyperpriors.
//
// Every codeword i owns a free latent z_i ∈ R^H. Its rounded value z̄_i is
// coded under a stored per-channel prior; a small synthesis MLP maps ẑ_i to a
// discretized Gaussian (μ, σ) for each of the D codeword symbols.

#include <cstdint>
#include <span>
#include <vector>

#include "gs4dcc/bytes.hpp"
#include "gs4dcc/entropy.hpp"
#include "gs4dcc/numkit.hpp"

namespace gs4dcc {

struct VqccParams {
  uint32_t dim = 0;      // D
  uint32_t hyper = 8;    // H
  float y_offset = 127.5f;  // μ = y_offset + y_scale·o_μ, σ = y_scale·exp(o_σ)
  float y_scale = 32.0f;
  Mlp synthesis;         // H → 32 relu → 2D
  FactorizedPrior z_prior;
  Support z_support;
  Support y_support;

  static MlpSpec synthesis_spec(uint32_t dim, uint32_t hyper);
  void round_to_half();
  size_t parameter_count() const { return synthesis.parameter_count(); }
  friend bool operator==(const VqccParams&, const VqccParams&) = default;
};

void write_vqcc_params(ByteWriter& w, const VqccParams& p);
VqccParams read_vqcc_params(ByteReader& r);

// Codebook symbols (K × D, row-major) plus the learned latents (K × H).
struct VqccModel {
  VqccParams params;
  Matrix z;
};

// Initialisation, whichever codes the codebook in fewer bits:
//  - principal components: z_i is the codeword's projection on the top H
//    directions (step chosen to balance z and y rates), synthesis starts as
//    the matching linear reconstruction;
//  - cluster codes: k-means over the codewords, z_i0 is the cluster code and
//    the hidden layer is a ramp basis mapping each code to its cluster's
//    mean and spread (at most 33 clusters with 32 hidden units).
VqccModel vqcc_init(std::span<const uint32_t> symbols, size_t k, uint32_t dim, uint32_t hyper, uint64_t seed);

// Rounded latents, K × H.
std::vector<int32_t> vqcc_latent_symbols(const Matrix& z);
// Refit z support / prior and y support to the current content.
void vqcc_fit_statistics(VqccModel& m, std::span<const uint32_t> symbols);

// Per-codeword (μ, σ) from decoded latents; K × D each, row-major.
void vqcc_distributions(const VqccParams& p, std::span<const int32_t> zbar, size_t k, std::vector<double>& mu,
                        std::vector<double>& sigma);

struct VqccStreams {
  Bytes z, y;
};
VqccStreams vqcc_encode(std::span<const uint32_t> symbols, std::span<const int32_t> zbar, size_t k,
                        const VqccParams& p);
// Returns the codebook symbols (K × D); `zbar_out` receives the latents when set.
std::vector<uint32_t> vqcc_decode(std::span<const uint8_t> z_bytes, std::span<const uint8_t> y_bytes, size_t k,
                                  const VqccParams& p, std::vector<int32_t>* zbar_out = nullptr);

// Ideal bits under the frozen CDFs.
struct VqccRate {
  double z_bits = 0.0;
  double y_bits = 0.0;
};
VqccRate vqcc_rate(std::span<const uint32_t> symbols, std::span<const int32_t> zbar, size_t k, const VqccParams& p);

// Surrogate bits and gradients for one training step. The latent rate uses
// z + noise; the synthesis sees round(z), as the decoder does, and its
// gradient passes straight through the rounding.
struct VqccGrads {
  MlpGrads synthesis;
  std::vector<double> d_prior_mu, d_prior_sigma;
  Matrix dz;
  double z_bits = 0.0, y_bits = 0.0;
};
VqccGrads vqcc_surrogate(const VqccModel& m, std::span<const uint32_t> symbols, std::span<const double> noise);

}  // namespace gs4dcc
