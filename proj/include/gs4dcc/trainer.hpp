#pragma once

// Rate-only fitting of the entropy models to frozen quantized content.
//
// Loss = λ_e·L_voxels + λ_c·L_code (bits). The two terms touch disjoint
// parameter sets (NVCC vs VQCC), so each set is stepped on its own stream's
// bits per symbol with fixed-step gradient descent.

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "gs4dcc/nvcc.hpp"
#include "gs4dcc/vqcc.hpp"

namespace gs4dcc {

struct RatePreset {
  double lambda_e = 1e-4;
  size_t codebook_size = 6144;
};
using RateProfile = std::map<std::string, RatePreset>;

// high → (1e-5, 8192), mid → (1e-4, 6144), low → (1e-3, 4096).
const RateProfile& default_rate_profile();
// Lines "<tag> = <lambda_e>, <codebook size>"; '#' starts a comment.
RateProfile parse_rate_profile(const std::string& text);
RateProfile load_rate_profile(const std::string& path);
RatePreset rate_preset(const std::string& tag, const RateProfile& profile = default_rate_profile());

// Unit-step gain applied to voxel features before rounding: the high-rate
// optimum of λ_e·bits + MSE for a uniform quantizer, g = sqrt(ln 2 / (6 λ_e)).
double voxel_gain(double lambda_e);

struct TrainConfig {
  std::string preset = "mid";
  double lambda_e = 1e-4;
  double lambda_c = 0.01;
  size_t codebook_size = 6144;
  double lr = 1e-2;
  size_t steps = 300;
  uint64_t seed = 1;
  uint32_t hyper = 8;
  NvccMode mode = NvccMode::kFull;

  void apply_preset(const std::string& tag, const RateProfile& profile = default_rate_profile());
  void validate() const;
  std::string to_string() const;  // key=value lines
};
// key=value lines; unknown keys are errors. `preset` is applied first so
// explicit lambda_e / codebook_size lines override it.
TrainConfig parse_train_config(const std::string& text);
TrainConfig load_train_config(const std::string& path);

struct TracePoint {
  size_t step = 0;
  double voxel_bits = 0.0;  // surrogate bits of the voxel streams
  double code_bits = 0.0;   // surrogate bits of the codebook streams (z + y)
  double loss = 0.0;        // λ_e·voxel_bits + λ_c·code_bits
};
struct RateTrace {
  std::vector<TracePoint> points;
  std::string to_csv() const;
};

struct TrainResult {
  NvccParams nvcc;   // f16-rounded
  VqccModel vqcc;    // synthesis f16-rounded
  RateTrace trace;
  // Measured ideal bits under frozen CDFs, before and after.
  double initial_voxel_bits = 0.0, final_voxel_bits = 0.0;
  double initial_code_bits = 0.0, final_code_bits = 0.0;
  bool nvcc_reverted = false;  // training did not help; initial parameters kept
  bool vqcc_reverted = false;
};

// Fits NVCC to `voxels` only.
TrainResult train_nvcc(const QuantizedPyramid& voxels, const TrainConfig& cfg, RateTrace* trace = nullptr);
// Fits VQCC to codebook symbols (K × D) only.
TrainResult train_vqcc(std::span<const uint32_t> codebook, size_t k, uint32_t dim, const TrainConfig& cfg);
// Both, with a shared trace.
TrainResult train_entropy_models(const QuantizedPyramid& voxels, std::span<const uint32_t> codebook, size_t k,
                                 uint32_t dim, const TrainConfig& cfg);

}  // namespace gs4dcc
