#pragma once

// Scene ⇄ container pipeline.
//
// Encode: min–max quantize canonical attributes, vector-quantize SH, quantize
// voxels, fit the entropy models, code everything into a 4DCC container.
// Decode: parse, entropy-decode every stream, and rebuild the quantized scene.

#include <span>
#include <string>

#include "gs4dcc/container.hpp"
#include "gs4dcc/nvcc.hpp"
#include "gs4dcc/quant.hpp"
#include "gs4dcc/scene.hpp"
#include "gs4dcc/trainer.hpp"
#include "gs4dcc/vqcc.hpp"

namespace gs4dcc {

inline constexpr int kPositionBits = 16;
inline constexpr int kAttributeBits = 8;

// Everything the decoder recovers from a container.
struct QuantizedScene {
  SceneMetadata metadata;
  int sh_degree = 0;
  QuantizedTensor positions, scales, rotations, opacities;  // N × {3,3,4,1}
  QuantizedTensor codebook;                                 // K × D, 8-bit
  std::vector<uint32_t> indices;                            // N
  double voxel_gain = 1.0;
  QuantizedPyramid voxels;
  DeformationDecoder decoder;  // binary16-rounded
  size_t count() const { return positions.rows; }
  friend bool operator==(const QuantizedScene&, const QuantizedScene&) = default;
};

// Estimated container size in bits, by stream.
struct RateBreakdown {
  double canon_raw = 0, indices = 0, codebook = 0, hyper = 0, voxels = 0, header = 0;
  double total() const { return canon_raw + indices + codebook + hyper + voxels + header; }
};

struct EncodeResult {
  Bytes container;
  QuantizedScene quantized;
  TrainResult training;
  size_t codebook_size = 0;  // K actually used: min(requested, N)
  RateBreakdown estimate;
  SizeReport sizes;
};

// Quantization stage only (no entropy models).
QuantizedScene quantize_scene(const Scene& scene, const TrainConfig& cfg, size_t* codebook_size = nullptr);

EncodeResult encode_scene(const Scene& scene, const TrainConfig& cfg);
// Encodes already-quantized content with given models.
Bytes encode_quantized(const QuantizedScene& q, const NvccParams& nvcc, const VqccModel& vqcc);

QuantizedScene decode_container(std::span<const uint8_t> bytes);
// Dequantized scene: SH = codebook[index], voxel features = symbol / gain.
Scene reconstruct(const QuantizedScene& q);

RateBreakdown estimate_total_rate(const QuantizedScene& q, const NvccParams& nvcc, const VqccModel& vqcc);

// Parameter-space PSNR in dB, 10·log10(peak² / MSE) with peak = value range of
// the reference attribute. Not an image metric.
struct Fidelity {
  double positions = 0, scales = 0, rotations = 0, opacities = 0, sh = 0, voxels = 0;
  double overall = 0;  // over all attributes, each normalised by its own peak
  std::string to_string() const;
};
Fidelity parameter_psnr(const Scene& reference, const Scene& decoded);

}  // namespace gs4dcc
