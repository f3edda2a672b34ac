#pragma once

// Synthetic scenes for tests, benchmarks and the CLI `synth` command.
//
// Level-0 spatiotemporal planes follow an AR(1) process along time with
// coefficient ρ; each finer level mixes the upsampled coarser plane with fresh
// detail, fine = √κ·up(coarse) + √(1−κ)·detail. ρ = 0 gives i.i.d. grids.

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "gs4dcc/scene.hpp"

namespace gs4dcc {

class Rng;

struct SynthSpec {
  std::string name = "synthetic";
  size_t gaussians = 1000;
  int sh_degree = 1;
  uint32_t levels = 2;
  uint32_t channels = 8;
  uint32_t frames = 32;
  std::array<uint32_t, 3> base_resolution{16, 16, 16};
  uint32_t upsample = 2;
  double rho = 0.95;
  std::optional<double> kappa;  // defaults to ρ
  double amplitude = 0.3;       // marginal std of every plane entry
  size_t sh_clusters = 32;
  double sh_noise = 0.05;
  uint32_t decoder_hidden = 16;  // 0: heads read the voxel feature directly
  uint64_t seed = 1;
};

// Throws kInvalid on impossible sizes.
Scene synth_scene(const SynthSpec& spec);

// Clustered SH vectors (N × D, row-major): per-cluster centres with bands
// decaying in magnitude, plus isotropic noise.
std::vector<float> clustered_sh(size_t n, size_t dim, size_t clusters, double noise, Rng& rng);

// Pearson correlation of consecutive time rows over all spatiotemporal planes of level 0.
double temporal_correlation(const HexplanePyramid& voxels);

}  // namespace gs4dcc
