#include "gs4dcc/vq.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "gs4dcc/parallel.hpp"
#include "gs4dcc/rng.hpp"

namespace gs4dcc {

namespace {

double sq_dist(std::span<const double> a, std::span<const double> b) {
  double acc = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    acc += d * d;
  }
  return acc;
}

Matrix kmeanspp_init(const Matrix& x, size_t k, Rng& rng) {
  const size_t n = x.rows();
  Matrix centers(k, x.cols());
  std::vector<double> d2(n, std::numeric_limits<double>::infinity());
  size_t pick = static_cast<size_t>(rng.below(n));
  for (size_t c = 0; c < k; ++c) {
    std::copy(x.row(pick).begin(), x.row(pick).end(), centers.row(c).begin());
    if (c + 1 == k) break;
    double total = 0.0;
    for (size_t i = 0; i < n; ++i) {
      d2[i] = std::min(d2[i], sq_dist(x.row(i), centers.row(c)));
      total += d2[i];
    }
    if (total <= 0.0) {
      pick = static_cast<size_t>(rng.below(n));  // every point already coincides with a center
      continue;
    }
    double target = rng.uniform() * total;
    pick = n - 1;
    for (size_t i = 0; i < n; ++i) {
      target -= d2[i];
      if (target < 0.0 && d2[i] > 0.0) {
        pick = i;
        break;
      }
    }
  }
  return centers;
}

}  // namespace

std::vector<uint32_t> assign_nearest(const Matrix& vectors, const Matrix& centroids) {
  require(vectors.cols() == centroids.cols(), ErrorKind::kShape, "assign_nearest dimension mismatch");
  std::vector<uint32_t> out(vectors.rows());
  parallel_for(vectors.rows(), [&](size_t begin, size_t end) {
    for (size_t i = begin; i < end; ++i) {
      double best = std::numeric_limits<double>::infinity();
      uint32_t arg = 0;
      for (size_t c = 0; c < centroids.rows(); ++c) {
        const double d = sq_dist(vectors.row(i), centroids.row(c));
        if (d < best) {
          best = d;
          arg = static_cast<uint32_t>(c);
        }
      }
      out[i] = arg;
    }
  });
  return out;
}

double kmeans_objective(const Matrix& vectors, const Matrix& centroids, std::span<const uint32_t> indices) {
  double obj = 0.0;
  for (size_t i = 0; i < vectors.rows(); ++i) obj += sq_dist(vectors.row(i), centroids.row(indices[i]));
  return obj;
}

KMeansResult kmeans_fit(const Matrix& x, size_t k, uint64_t seed, const KMeansOptions& opts) {
  const size_t n = x.rows(), d = x.cols();
  require(k >= 1, ErrorKind::kInvalid, "k-means needs K >= 1");
  require(k <= n, ErrorKind::kInvalid,
          "k-means codebook size " + std::to_string(k) + " exceeds point count " + std::to_string(n));
  require(x.all_finite(), ErrorKind::kInvalid, "k-means input has non-finite values");

  Rng rng(seed);
  KMeansResult res;
  res.centroids = kmeanspp_init(x, k, rng);
  res.indices = assign_nearest(x, res.centroids);
  res.objective.push_back(kmeans_objective(x, res.centroids, res.indices));

  for (size_t it = 0; it < opts.max_iters; ++it) {
    // Update: per-cluster means accumulated in point order.
    Matrix sums(k, d);
    std::vector<size_t> counts(k, 0);
    for (size_t i = 0; i < n; ++i) {
      auto s = sums.row(res.indices[i]);
      auto xi = x.row(i);
      for (size_t j = 0; j < d; ++j) s[j] += xi[j];
      ++counts[res.indices[i]];
    }
    std::vector<double> dist(n);
    for (size_t i = 0; i < n; ++i) dist[i] = sq_dist(x.row(i), res.centroids.row(res.indices[i]));
    for (size_t c = 0; c < k; ++c) {
      auto cen = res.centroids.row(c);
      if (counts[c] > 0) {
        for (size_t j = 0; j < d; ++j) cen[j] = sums(c, j) / static_cast<double>(counts[c]);
        continue;
      }
      // Empty cluster: move it onto the point farthest from its centroid.
      size_t far = 0;
      for (size_t i = 1; i < n; ++i)
        if (dist[i] > dist[far]) far = i;
      std::copy(x.row(far).begin(), x.row(far).end(), cen.begin());
      dist[far] = 0.0;
    }
    res.indices = assign_nearest(x, res.centroids);
    const double obj = kmeans_objective(x, res.centroids, res.indices);
    const double prev = res.objective.back();
    res.objective.push_back(obj);
    if (prev - obj <= opts.rel_tol * prev) break;
  }
  return res;
}

namespace {

size_t varint_len(uint64_t v) {
  size_t n = 1;
  while (v >= 0x80) {
    v >>= 7;
    ++n;
  }
  return n;
}

}  // namespace

Bytes rle_encode(std::span<const uint32_t> indices) {
  size_t raw_size = 0, run_size = 0;
  for (size_t i = 0; i < indices.size();) {
    size_t j = i;
    while (j < indices.size() && indices[j] == indices[i]) ++j;
    run_size += varint_len(indices[i]) + varint_len(j - i);
    for (size_t t = i; t < j; ++t) raw_size += varint_len(indices[t]);
    i = j;
  }
  ByteWriter w;
  if (raw_size < run_size) {
    w.u8(static_cast<uint8_t>(RleMode::kRaw));
    for (uint32_t v : indices) w.varint(v);
    return w.take();
  }
  w.u8(static_cast<uint8_t>(RleMode::kRuns));
  for (size_t i = 0; i < indices.size();) {
    size_t j = i;
    while (j < indices.size() && indices[j] == indices[i]) ++j;
    w.varint(indices[i]);
    w.varint(j - i);
    i = j;
  }
  return w.take();
}

std::vector<uint32_t> rle_decode(std::span<const uint8_t> bytes, size_t n) {
  ByteReader r(bytes, "index stream");
  const uint8_t mode = r.u8();
  std::vector<uint32_t> out;
  out.reserve(n);
  auto value = [&] {
    uint64_t v = r.varint();
    require(v <= std::numeric_limits<uint32_t>::max(), ErrorKind::kFormat, "index value exceeds 32 bits");
    return static_cast<uint32_t>(v);
  };
  if (mode == static_cast<uint8_t>(RleMode::kRaw)) {
    while (out.size() < n) out.push_back(value());
  } else if (mode == static_cast<uint8_t>(RleMode::kRuns)) {
    while (out.size() < n) {
      const uint32_t v = value();
      const uint64_t run = r.varint();
      require(run >= 1, ErrorKind::kFormat, "zero-length run");
      require(run <= n - out.size(), ErrorKind::kFormat,
              "run of " + std::to_string(run) + " overflows the " + std::to_string(n) + "-element stream");
      out.insert(out.end(), run, v);
    }
  } else {
    fail(ErrorKind::kFormat, "unknown index stream mode " + std::to_string(mode));
  }
  require(r.done(), ErrorKind::kFormat, "trailing bytes after index stream");
  return out;
}

}  // namespace gs4dcc
