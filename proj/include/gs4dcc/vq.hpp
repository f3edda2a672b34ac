#pragma once

// Vector quantization of SH coefficients (k-means++ / Lloyd) and run-length
// coding of the resulting index stream.

#include <cstdint>
#include <span>
#include <vector>

#include "gs4dcc/bytes.hpp"
#include "gs4dcc/numkit.hpp"

namespace gs4dcc {

struct KMeansOptions {
  size_t max_iters = 30;
  double rel_tol = 1e-6;  // stop when the relative objective improvement falls below this
};

struct KMeansResult {
  Matrix centroids;                 // K × D
  std::vector<uint32_t> indices;    // N, nearest centroid, lowest index on ties
  std::vector<double> objective;    // Σ‖x − c‖² after every assignment step
};

// vectors: N × D. Requires 1 ≤ K ≤ N.
KMeansResult kmeans_fit(const Matrix& vectors, size_t k, uint64_t seed, const KMeansOptions& opts = {});

// Nearest centroid for every row, ties to the lowest index.
std::vector<uint32_t> assign_nearest(const Matrix& vectors, const Matrix& centroids);
double kmeans_objective(const Matrix& vectors, const Matrix& centroids, std::span<const uint32_t> indices);

// Index stream coding. Byte 0 is the mode (0 = RAW varints, 1 = (value, run)
// varint pairs); RAW is used only when strictly smaller.
enum class RleMode : uint8_t { kRaw = 0, kRuns = 1 };

Bytes rle_encode(std::span<const uint32_t> indices);
// `n` is the expected element count; fails on truncation, zero or overflowing runs.
std::vector<uint32_t> rle_decode(std::span<const uint8_t> bytes, size_t n);

}  // namespace gs4dcc
