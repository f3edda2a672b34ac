#pragma once

// Uncompressed 4DGS scene: canonical Gaussians, the multi-resolution Hexplane
// voxel pyramid and the deformation decoder that turns voxel features into
// per-Gaussian attribute offsets.

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "gs4dcc/numkit.hpp"

namespace gs4dcc {

inline constexpr size_t sh_dim_for_degree(int degree) {
  return 3 * static_cast<size_t>(degree + 1) * static_cast<size_t>(degree + 1);
}

struct CanonicalGaussians {
  size_t count = 0;
  int sh_degree = 0;
  std::vector<float> positions;  // N×3, world units
  std::vector<float> scales;     // N×3, log-scale
  std::vector<float> rotations;  // N×4, unit quaternion (w, x, y, z)
  std::vector<float> opacities;  // N, logit
  std::vector<float> sh;         // N×D

  size_t sh_dim() const { return sh_dim_for_degree(sh_degree); }
  static CanonicalGaussians zeros(size_t n, int sh_degree);
  friend bool operator==(const CanonicalGaussians&, const CanonicalGaussians&) = default;
};

enum class PlaneKind : uint8_t { kSpatiotemporal = 0, kSpatial = 1 };

// Plane ids 0..2 pair one spatial axis with time, 3..5 are space–space.
inline constexpr size_t kPlanesPerLevel = 6;
enum Axis : uint8_t { kAxisX = 0, kAxisY = 1, kAxisZ = 2, kAxisT = 3 };

struct PlaneAxes {
  Axis rows;  // first grid axis
  Axis cols;  // second grid axis
};

constexpr PlaneAxes plane_axes(size_t plane_id) {
  constexpr PlaneAxes kAxes[kPlanesPerLevel] = {
      {kAxisT, kAxisX}, {kAxisT, kAxisY}, {kAxisT, kAxisZ},
      {kAxisX, kAxisY}, {kAxisX, kAxisZ}, {kAxisY, kAxisZ},
  };
  return kAxes[plane_id];
}
constexpr PlaneKind plane_kind(size_t plane_id) {
  return plane_id < 3 ? PlaneKind::kSpatiotemporal : PlaneKind::kSpatial;
}
const char* plane_name(size_t plane_id);

struct Plane {
  uint32_t channels = 0;
  uint32_t rows = 0;
  uint32_t cols = 0;
  std::vector<float> data;  // channel-major: [c][row][col]

  float at(size_t c, size_t r, size_t k) const { return data[(c * rows + r) * cols + k]; }
  float& at(size_t c, size_t r, size_t k) { return data[(c * rows + r) * cols + k]; }
  friend bool operator==(const Plane&, const Plane&) = default;
};

struct Level {
  std::array<uint32_t, 3> resolution{};  // spatial samples along x, y, z
  std::array<Plane, kPlanesPerLevel> planes;
  friend bool operator==(const Level&, const Level&) = default;
};

struct HexplanePyramid {
  uint32_t channels = 0;
  uint32_t frames = 0;  // time samples, identical across levels
  std::vector<Level> levels;

  size_t feature_width() const { return levels.size() * channels; }
  size_t element_count() const;
  // Allocates zero planes with shapes derived from resolutions.
  static HexplanePyramid zeros(uint32_t channels, uint32_t frames,
                               const std::vector<std::array<uint32_t, 3>>& resolutions);
  friend bool operator==(const HexplanePyramid&, const HexplanePyramid&) = default;
};

// Grid size of plane `plane_id` along its two axes.
std::array<uint32_t, 2> plane_shape(const std::array<uint32_t, 3>& resolution, uint32_t frames, size_t plane_id);

// Heads in fixed order; widths 3, 3, 4, 1, D.
enum DeformHead : size_t { kHeadPosition = 0, kHeadScale, kHeadRotation, kHeadOpacity, kHeadSh, kHeadCount };

struct DeformationDecoder {
  std::optional<Mlp> trunk;  // absent: heads read the voxel feature directly
  std::array<Mlp, kHeadCount> heads;

  size_t input_width() const;
  size_t parameter_count() const;
  friend bool operator==(const DeformationDecoder&, const DeformationDecoder&) = default;
};

enum class FusionRule : uint8_t { kProductConcat = 0 };

struct SceneMetadata {
  std::string name = "scene";
  float time_begin = 0.0f;
  float time_end = 1.0f;
  std::array<float, 3> bounds_min{-1.0f, -1.0f, -1.0f};
  std::array<float, 3> bounds_max{1.0f, 1.0f, 1.0f};
  FusionRule fusion = FusionRule::kProductConcat;
  friend bool operator==(const SceneMetadata&, const SceneMetadata&) = default;
};

struct Scene {
  CanonicalGaussians gaussians;
  HexplanePyramid voxels;
  DeformationDecoder decoder;
  SceneMetadata metadata;
  friend bool operator==(const Scene&, const Scene&) = default;
};

struct Violation {
  std::string path;
  std::string message;
};

struct ValidationReport {
  std::vector<Violation> violations;
  bool ok() const { return violations.empty(); }
  std::string to_string() const;
};

ValidationReport validate_scene(const Scene& scene);

// Feature at normalised position p ∈ [0,1]³ and time t ∈ [0,1]; width S·C.
// Per level the six bilinear samples are multiplied elementwise, then levels
// are concatenated. Coordinates outside [0,1] are clamped to the border.
std::vector<double> query_voxels(const HexplanePyramid& voxels, const std::array<double, 3>& p, double t);

// Canonical Gaussians deformed to time t. Rotations are re-normalised.
CanonicalGaussians apply_deformation(const Scene& scene, double t);

}  // namespace gs4dcc
