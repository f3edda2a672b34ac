#include "gs4dcc/synth.hpp"

#include <cmath>

#include "gs4dcc/nvcc.hpp"
#include "gs4dcc/rng.hpp"

namespace gs4dcc {

std::vector<float> clustered_sh(size_t n, size_t dim, size_t clusters, double noise, Rng& rng) {
  require(clusters >= 1, ErrorKind::kInvalid, "need at least one SH cluster");
  // Band of coefficient j (three colour channels per band entry).
  auto band_scale = [](size_t j) {
    const size_t coeff = j / 3;
    const size_t band = coeff == 0 ? 0 : coeff < 4 ? 1 : coeff < 9 ? 2 : 3;
    return 1.0 / static_cast<double>(1 + 2 * band);
  };
  std::vector<double> centres(clusters * dim);
  for (size_t c = 0; c < clusters; ++c) {
    // Colour channels of one coefficient share a component, as real palettes do.
    for (size_t j = 0; j < dim; j += 3) {
      const double shared = rng.normal();
      for (size_t ch = 0; ch < 3 && j + ch < dim; ++ch)
        centres[c * dim + j + ch] = band_scale(j) * (0.8 * shared + 0.6 * rng.normal());
    }
  }
  std::vector<float> out(n * dim);
  for (size_t i = 0; i < n; ++i) {
    const size_t c = static_cast<size_t>(rng.below(clusters));
    for (size_t j = 0; j < dim; ++j)
      out[i * dim + j] = static_cast<float>(centres[c * dim + j] + noise * band_scale(j) * rng.normal());
  }
  return out;
}

namespace {

// AR(1) along rows (time) for a C × rows × cols grid, unit marginal variance.
std::vector<double> ar_grid(size_t channels, size_t rows, size_t cols, double rho, Rng& rng) {
  std::vector<double> g(channels * rows * cols);
  const double innov = std::sqrt(std::max(0.0, 1.0 - rho * rho));
  for (size_t c = 0; c < channels; ++c)
    for (size_t r = 0; r < rows; ++r)
      for (size_t k = 0; k < cols; ++k) {
        const size_t i = (c * rows + r) * cols + k;
        g[i] = r == 0 ? rng.normal() : rho * g[i - cols] + innov * rng.normal();
      }
  return g;
}

std::vector<double> iid_grid(size_t n, Rng& rng) {
  std::vector<double> g(n);
  for (double& v : g) v = rng.normal();
  return g;
}

}  // namespace

Scene synth_scene(const SynthSpec& spec) {
  require(spec.levels >= 1 && spec.levels <= 8, ErrorKind::kInvalid, "levels must be in [1, 8]");
  require(spec.channels >= 1 && spec.frames >= 1, ErrorKind::kInvalid, "channels and frames must be >= 1");
  require(spec.upsample >= 2, ErrorKind::kInvalid, "upsample factor must be >= 2");
  for (uint32_t r : spec.base_resolution) require(r >= 2, ErrorKind::kInvalid, "base resolution must be >= 2");
  require(spec.rho >= 0.0 && spec.rho < 1.0, ErrorKind::kInvalid, "rho must be in [0, 1)");
  const double kappa = spec.kappa.value_or(spec.rho);
  require(kappa >= 0.0 && kappa <= 1.0, ErrorKind::kInvalid, "kappa must be in [0, 1]");
  require(spec.sh_degree >= 0 && spec.sh_degree <= 3, ErrorKind::kInvalid, "SH degree must be in [0, 3]");

  Rng rng(spec.seed);
  Rng grid_rng = rng.fork();
  Rng gauss_rng = rng.fork();
  Rng mlp_rng = rng.fork();

  Scene scene;
  scene.metadata.name = spec.name;

  std::vector<std::array<uint32_t, 3>> res;
  for (uint32_t s = 0; s < spec.levels; ++s) {
    std::array<uint32_t, 3> r = spec.base_resolution;
    for (uint32_t& v : r)
      for (uint32_t i = 0; i < s; ++i) v *= spec.upsample;
    res.push_back(r);
  }
  scene.voxels = HexplanePyramid::zeros(spec.channels, spec.frames, res);
  const size_t C = spec.channels;
  const double mix_up = std::sqrt(kappa), mix_detail = std::sqrt(1.0 - kappa);
  std::array<std::vector<double>, kPlanesPerLevel> prev;
  for (size_t s = 0; s < spec.levels; ++s) {
    for (size_t p = 0; p < kPlanesPerLevel; ++p) {
      Plane& pl = scene.voxels.levels[s].planes[p];
      const bool st = plane_kind(p) == PlaneKind::kSpatiotemporal;
      std::vector<double> detail =
          st ? ar_grid(C, pl.rows, pl.cols, spec.rho, grid_rng) : iid_grid(pl.data.size(), grid_rng);
      std::vector<double> cur(detail.size());
      if (s == 0) {
        cur = detail;
      } else {
        const Plane& cp = scene.voxels.levels[s - 1].planes[p];
        std::vector<double> up;
        if (st) {
          up.resize(detail.size());
          for (size_t r = 0; r < pl.rows; ++r) {
            std::vector<double> row(C * cp.cols);
            for (size_t c = 0; c < C; ++c)
              for (size_t k = 0; k < cp.cols; ++k) row[c * cp.cols + k] = prev[p][(c * cp.rows + r) * cp.cols + k];
            auto fine = spatial_prior(row, C, cp.cols, pl.cols);
            for (size_t c = 0; c < C; ++c)
              for (size_t k = 0; k < pl.cols; ++k) up[(c * pl.rows + r) * pl.cols + k] = fine[c * pl.cols + k];
          }
        } else {
          up = spatial_prior_2d(prev[p], C, cp.rows, cp.cols, pl.rows, pl.cols);
        }
        for (size_t i = 0; i < cur.size(); ++i) cur[i] = mix_up * up[i] + mix_detail * detail[i];
      }
      for (size_t i = 0; i < cur.size(); ++i) pl.data[i] = static_cast<float>(spec.amplitude * cur[i]);
      prev[p] = std::move(cur);
    }
  }

  CanonicalGaussians& g = scene.gaussians;
  g = CanonicalGaussians::zeros(spec.gaussians, spec.sh_degree);
  for (size_t i = 0; i < spec.gaussians; ++i) {
    for (size_t a = 0; a < 3; ++a) {
      g.positions[i * 3 + a] = static_cast<float>(gauss_rng.uniform(-0.95, 0.95));
      g.scales[i * 3 + a] = static_cast<float>(-4.0 + 0.5 * gauss_rng.normal());
    }
    double q[4], norm = 0.0;
    for (double& v : q) {
      v = gauss_rng.normal();
      norm += v * v;
    }
    norm = std::sqrt(norm);
    for (size_t a = 0; a < 4; ++a) g.rotations[i * 4 + a] = static_cast<float>(q[a] / norm);
    g.opacities[i] = static_cast<float>(2.0 * gauss_rng.normal());
  }
  g.sh = clustered_sh(spec.gaussians, g.sh_dim(), spec.sh_clusters, spec.sh_noise, gauss_rng);

  const size_t feat = scene.voxels.feature_width();
  size_t head_in = feat;
  if (spec.decoder_hidden > 0) {
    scene.decoder.trunk = Mlp::random(MlpSpec{{feat, spec.decoder_hidden}, {Activation::kRelu}}, mlp_rng);
    head_in = spec.decoder_hidden;
  }
  const size_t widths[kHeadCount] = {3, 3, 4, 1, g.sh_dim()};
  for (size_t h = 0; h < kHeadCount; ++h)
    scene.decoder.heads[h] = Mlp::random(MlpSpec{{head_in, widths[h]}, {Activation::kIdentity}}, mlp_rng, 0.1);
  // Stored as f32 like every other scene field.
  auto to_f32 = [](Mlp& m) {
    for (Matrix& w : m.weights.w)
      for (double& v : w.data()) v = static_cast<float>(v);
  };
  if (scene.decoder.trunk) to_f32(*scene.decoder.trunk);
  for (Mlp& h : scene.decoder.heads) to_f32(h);
  return scene;
}

double temporal_correlation(const HexplanePyramid& voxels) {
  require(!voxels.levels.empty(), ErrorKind::kInvalid, "empty pyramid");
  double sa = 0, sb = 0, saa = 0, sbb = 0, sab = 0;
  size_t n = 0;
  for (size_t p = 0; p < 3; ++p) {
    const Plane& pl = voxels.levels[0].planes[p];
    for (size_t c = 0; c < pl.channels; ++c)
      for (size_t r = 1; r < pl.rows; ++r)
        for (size_t k = 0; k < pl.cols; ++k) {
          const double a = pl.at(c, r - 1, k), b = pl.at(c, r, k);
          sa += a, sb += b, saa += a * a, sbb += b * b, sab += a * b;
          ++n;
        }
  }
  require(n > 1, ErrorKind::kInvalid, "need at least two time rows");
  const double dn = static_cast<double>(n);
  const double cov = sab / dn - (sa / dn) * (sb / dn);
  const double va = saa / dn - (sa / dn) * (sa / dn), vb = sbb / dn - (sb / dn) * (sb / dn);
  return cov / std::sqrt(va * vb);
}

}  // namespace gs4dcc
