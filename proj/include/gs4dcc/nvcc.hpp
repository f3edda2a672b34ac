#pragma once

// Contextual coding of quantized Hexplane features.
//
// Every plane is cut into row features: spatiotemporal planes into one row
// per time step (C × X), space–space planes into a single row holding the
// whole grid (C × A·B). Rows are coded in plan order (level, plane, time) and
// each row's discretized-Gaussian parameters come from already-coded rows
// only:
//   temporal context  h_t = softmax(q·kᵀ/√d)·v + f̂_{t−1}, q from h_{t−1},
//                     k, v from f̂_{t−1} (tokens = spatial positions)
//   spatial context   the same plane one level coarser at the same t,
//                     linearly resampled to the finer grid
// and a per-level head network maps the available context to (μ, σ).

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "gs4dcc/bytes.hpp"
#include "gs4dcc/entropy.hpp"
#include "gs4dcc/numkit.hpp"
#include "gs4dcc/scene.hpp"

namespace gs4dcc {

enum class ContextCase : uint8_t {
  kFactorized = 0,  // no context: stored per-channel prior
  kTemporal = 1,    // hidden state only
  kSpatial = 2,     // coarser level only
  kFull = 3,        // hidden state and coarser level
};
const char* context_case_name(ContextCase c);

// Which contexts the coder is allowed to use. kFull is the codec; the rest
// are ablations measured against it.
enum class NvccMode : uint8_t {
  kFull = 0,
  kSpatialOnly = 1,
  kTemporalOnly = 2,
  kNoHidden = 3,  // temporal context is f̂_{t−1} itself, no attention
  kFactorized = 4,
};
const char* nvcc_mode_name(NvccMode m);

// level and t are 0-based.
ContextCase route_context(size_t level, size_t t, PlaneKind kind, NvccMode mode = NvccMode::kFull);

// Unit-step symbols of a pyramid, same layout as the float planes.
struct SymbolPlane {
  uint32_t rows = 0, cols = 0;
  std::vector<int32_t> data;    // [c][row][col]
  std::vector<double> latent;   // pre-rounding values (encoder/trainer only; may be empty)
  friend bool operator==(const SymbolPlane& a, const SymbolPlane& b) {
    return a.rows == b.rows && a.cols == b.cols && a.data == b.data;
  }
};

struct QuantizedPyramid {
  uint32_t channels = 0;
  uint32_t frames = 0;
  std::vector<std::array<uint32_t, 3>> resolutions;
  std::vector<std::array<SymbolPlane, kPlanesPerLevel>> planes;

  size_t levels() const { return resolutions.size(); }
  size_t element_count() const;
  // Same geometry, zero symbols.
  static QuantizedPyramid empty_like(const QuantizedPyramid& other);
  friend bool operator==(const QuantizedPyramid&, const QuantizedPyramid&) = default;
};

// symbols = round(feature · gain)
QuantizedPyramid quantize_voxels(const HexplanePyramid& voxels, double gain);
HexplanePyramid dequantize_voxels(const QuantizedPyramid& q, double gain);

struct RowKey {
  uint32_t level = 0, plane = 0, t = 0;
  friend bool operator==(const RowKey&, const RowKey&) = default;
};

struct RowFeature {
  RowKey key;
  uint32_t channels = 0;
  uint32_t length = 0;         // spatial positions L
  std::vector<int32_t> data;   // C × L, channel-major
};

// Coding order: level-major, then plane id, then t ascending.
std::vector<RowKey> coding_plan(const QuantizedPyramid& q);
std::vector<RowFeature> decompose_voxels(const QuantizedPyramid& q);
// Inverse of decompose_voxels onto the geometry of `shape`.
QuantizedPyramid recompose_voxels(const QuantizedPyramid& shape, std::span<const RowFeature> rows);

// Channel-wise linear resampling along the spatial axis, align-corners.
// coarse: C × L' (channel-major) → C × L.
std::vector<double> spatial_prior(std::span<const double> coarse, size_t channels, size_t coarse_len,
                                  size_t target_len);
// Bilinear, align-corners: C × A' × B' → C × A × B.
std::vector<double> spatial_prior_2d(std::span<const double> coarse, size_t channels, size_t ca, size_t cb,
                                     size_t a, size_t b);

// Parameters of one level; the three spatiotemporal planes share them.
struct NvccLevelParams {
  float ctx_scale = 1.0f;       // contexts and outputs are expressed in units of this
  AttentionWeights attention;   // C × C
  Mlp fusion;                   // 2C → 2C   (h, spatial)
  Mlp temporal;                 // C → 2C    (h)
  Mlp spatial;                  // C → 2C    (spatial prior, spatiotemporal planes)
  Mlp plane_spatial;            // C → 2C    (spatial prior, space–space planes)
  friend bool operator==(const NvccLevelParams&, const NvccLevelParams&) = default;
};

struct NvccParams {
  NvccMode mode = NvccMode::kFull;
  uint32_t channels = 0;
  std::vector<NvccLevelParams> levels;
  // Per section (level·6 + plane): coded support and factorized prior.
  std::vector<Support> supports;
  std::vector<FactorizedPrior> priors;

  // Head output layout: first C columns μ, last C columns log σ (both in ctx_scale units).
  static NvccParams initial(uint32_t channels, size_t levels, NvccMode mode, uint64_t seed);
  // Fits supports, priors and ctx_scale to the content.
  void fit_statistics(const QuantizedPyramid& q);
  // Round every stored network weight through binary16.
  void round_to_half();
  size_t parameter_count() const;
  friend bool operator==(const NvccParams&, const NvccParams&) = default;
};

inline size_t section_index(size_t level, size_t plane) { return level * kPlanesPerLevel + plane; }

void write_nvcc_params(ByteWriter& w, const NvccParams& p);
NvccParams read_nvcc_params(ByteReader& r);

// Tokens (L × C) view of a channel-major C × L row, scaled by 1/scale.
Matrix row_tokens(std::span<const double> row, size_t channels, size_t length, double scale);

// Distribution of one row: μ and σ, channel-major C × L.
struct RowDistribution {
  ContextCase which = ContextCase::kFactorized;
  std::vector<double> mu, sigma;
};

// Network inputs of one row; absent contexts are empty matrices.
struct RowContext {
  ContextCase which = ContextCase::kFactorized;
  PlaneKind kind = PlaneKind::kSpatiotemporal;
  Matrix hidden;   // L × C, normalised
  Matrix spatial;  // L × C, normalised
};

// Maps contexts to (μ, σ). Records the head forward pass when `tape` is set.
RowDistribution head_forward(const NvccLevelParams& lp, const FactorizedPrior& prior, const RowContext& ctx,
                             size_t channels, size_t length, MlpTape* tape = nullptr,
                             Matrix* raw_out = nullptr);
const Mlp& head_for(const NvccLevelParams& lp, ContextCase which, PlaneKind kind);
Mlp& head_for(NvccLevelParams& lp, ContextCase which, PlaneKind kind);

// Sequential context state: decoded symbols so far plus hidden states.
// Encoder and decoder both drive this object row by row, so the float path
// that produces every distribution is shared.
class NvccState {
 public:
  NvccState(const NvccParams& params, const QuantizedPyramid& geometry);

  // Contexts for the next row; must be called in plan order. Advances the
  // hidden state of spatiotemporal planes.
  RowContext context(const RowKey& key, AttentionTape* tape = nullptr);
  // Records the coded symbols of `key` (C × L) for later contexts.
  void commit(const RowKey& key, std::span<const int32_t> row);

  const QuantizedPyramid& decoded() const { return decoded_; }
  size_t row_length(const RowKey& key) const;

 private:
  std::vector<double> coarse_prior(const RowKey& key) const;

  const NvccParams& params_;
  QuantizedPyramid decoded_;
  std::vector<Matrix> hidden_;      // per section, L × C
  std::vector<int32_t> next_row_;   // per section, rows committed so far
};

struct NvccSection {
  RowKey first;          // (level, plane, 0)
  uint32_t symbol_count = 0;
  uint32_t symbol_crc = 0;  // CRC32 of the symbols as little-endian int32
  Bytes payload;
};

std::vector<NvccSection> nvcc_encode(const QuantizedPyramid& q, const NvccParams& params);
// `geometry` supplies shapes only; its symbols are ignored.
QuantizedPyramid nvcc_decode(std::span<const NvccSection> sections, const NvccParams& params,
                             const QuantizedPyramid& geometry);

// Exact coded rate under frozen CDFs, per section and in total.
struct NvccRate {
  std::vector<double> section_bits;
  double total_bits = 0.0;
};
NvccRate nvcc_rate(const QuantizedPyramid& q, const NvccParams& params);

// Distributions of every row in plan order, for causality checks.
std::vector<RowDistribution> nvcc_row_distributions(const QuantizedPyramid& q, const NvccParams& params);

// Gradients of the noisy-surrogate bits with respect to every trained weight.
// The recurrence is truncated to one step: h_{t−1} is treated as a constant.
struct NvccLevelGrads {
  AttentionGrads attention;  // only dwq, dwk, dwv are filled
  MlpGrads fusion, temporal, spatial, plane_spatial;
  // Symbols coded by each head (the attention serves fusion + temporal).
  size_t n_fusion = 0, n_temporal = 0, n_spatial = 0, n_plane_spatial = 0;
};
struct NvccGrads {
  std::vector<NvccLevelGrads> levels;
  double bits = 0.0;      // surrogate bits over all symbols
  size_t symbols = 0;
};
// x̃ = latent + U(−½, ½) (symbols stand in when latents are absent); the
// noise of section i is drawn from a stream seeded by (seed, i).
NvccGrads nvcc_surrogate(const QuantizedPyramid& q, const NvccParams& params, uint64_t seed);

uint32_t symbol_crc(std::span<const int32_t> symbols);

}  // namespace gs4dcc
