#include "gs4dcc/scene.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace gs4dcc {

const char* plane_name(size_t plane_id) {
  static const char* kNames[kPlanesPerLevel] = {"xt", "yt", "zt", "xy", "xz", "yz"};
  return plane_id < kPlanesPerLevel ? kNames[plane_id] : "?";
}

CanonicalGaussians CanonicalGaussians::zeros(size_t n, int sh_degree) {
  CanonicalGaussians g;
  g.count = n;
  g.sh_degree = sh_degree;
  g.positions.assign(n * 3, 0.0f);
  g.scales.assign(n * 3, 0.0f);
  g.rotations.assign(n * 4, 0.0f);
  for (size_t i = 0; i < n; ++i) g.rotations[i * 4] = 1.0f;
  g.opacities.assign(n, 0.0f);
  g.sh.assign(n * g.sh_dim(), 0.0f);
  return g;
}

std::array<uint32_t, 2> plane_shape(const std::array<uint32_t, 3>& resolution, uint32_t frames, size_t plane_id) {
  auto extent = [&](Axis a) { return a == kAxisT ? frames : resolution[a]; };
  PlaneAxes ax = plane_axes(plane_id);
  return {extent(ax.rows), extent(ax.cols)};
}

size_t HexplanePyramid::element_count() const {
  size_t n = 0;
  for (const Level& l : levels)
    for (const Plane& p : l.planes) n += p.data.size();
  return n;
}

HexplanePyramid HexplanePyramid::zeros(uint32_t channels, uint32_t frames,
                                       const std::vector<std::array<uint32_t, 3>>& resolutions) {
  HexplanePyramid pyr;
  pyr.channels = channels;
  pyr.frames = frames;
  for (const auto& res : resolutions) {
    Level level;
    level.resolution = res;
    for (size_t p = 0; p < kPlanesPerLevel; ++p) {
      auto [rows, cols] = plane_shape(res, frames, p);
      level.planes[p] = Plane{channels, rows, cols, std::vector<float>(size_t{channels} * rows * cols, 0.0f)};
    }
    pyr.levels.push_back(std::move(level));
  }
  return pyr;
}

size_t DeformationDecoder::input_width() const {
  return trunk ? trunk->spec.in_width() : heads[0].spec.in_width();
}

size_t DeformationDecoder::parameter_count() const {
  size_t n = trunk ? trunk->parameter_count() : 0;
  for (const Mlp& h : heads) n += h.parameter_count();
  return n;
}

std::string ValidationReport::to_string() const {
  std::ostringstream os;
  for (const Violation& v : violations) os << v.path << ": " << v.message << "\n";
  return os.str();
}

namespace {

class Checker {
 public:
  void check(bool cond, const std::string& path, const std::string& msg) {
    if (!cond) report.violations.push_back({path, msg});
  }
  template <class T>
  void finite(const std::vector<T>& v, const std::string& path) {
    for (size_t i = 0; i < v.size(); ++i)
      if (!std::isfinite(v[i])) {
        report.violations.push_back({path + "[" + std::to_string(i) + "]", "non-finite value"});
        return;
      }
  }
  ValidationReport report;
};

void check_gaussians(const CanonicalGaussians& g, Checker& c) {
  const size_t n = g.count;
  c.check(g.sh_degree >= 0 && g.sh_degree <= 3, "gaussians.sh_degree",
          "SH degree " + std::to_string(g.sh_degree) + " outside [0,3]");
  c.check(g.positions.size() == n * 3, "gaussians.positions", "expected N x 3 rows");
  c.check(g.scales.size() == n * 3, "gaussians.scales", "expected N x 3 rows");
  c.check(g.rotations.size() == n * 4, "gaussians.rotations", "expected N x 4 rows");
  c.check(g.opacities.size() == n, "gaussians.opacities", "expected N rows");
  c.check(g.sh.size() == n * g.sh_dim(), "gaussians.sh",
          "expected N x " + std::to_string(g.sh_dim()) + " for SH degree " + std::to_string(g.sh_degree));
  c.finite(g.positions, "gaussians.positions");
  c.finite(g.scales, "gaussians.scales");
  c.finite(g.opacities, "gaussians.opacities");
  c.finite(g.sh, "gaussians.sh");
  if (g.rotations.size() == n * 4) {
    for (size_t i = 0; i < n; ++i) {
      double norm2 = 0.0;
      for (int k = 0; k < 4; ++k) norm2 += double(g.rotations[i * 4 + k]) * g.rotations[i * 4 + k];
      const double norm = std::sqrt(norm2);
      if (!(std::abs(norm - 1.0) <= 1e-5)) {
        std::ostringstream msg;
        msg << "quaternion norm " << norm << " is not unit (tolerance 1e-5)";
        c.check(false, "gaussians.rotations[" + std::to_string(i) + "]", msg.str());
      }
    }
  }
}

void check_voxels(const HexplanePyramid& v, Checker& c) {
  c.check(!v.levels.empty(), "voxels.levels", "pyramid needs at least one level");
  c.check(v.channels > 0, "voxels.channels", "channel width must be positive");
  c.check(v.frames > 0, "voxels.frames", "time resolution must be positive");
  for (size_t s = 0; s < v.levels.size(); ++s) {
    const Level& level = v.levels[s];
    const std::string lp = "voxels.levels[" + std::to_string(s) + "]";
    for (int a = 0; a < 3; ++a) c.check(level.resolution[a] > 0, lp + ".resolution", "zero spatial resolution");
    if (s > 0) {
      const auto& prev = v.levels[s - 1].resolution;
      for (int a = 0; a < 3; ++a) {
        c.check(level.resolution[a] > prev[a], lp + ".resolution",
                "spatial resolution must strictly increase with level");
        c.check(prev[a] > 0 && level.resolution[a] % prev[a] == 0, lp + ".resolution",
                "finer resolution must be an integer multiple of the coarser one");
      }
    }
    for (size_t p = 0; p < kPlanesPerLevel; ++p) {
      const Plane& plane = level.planes[p];
      const std::string pp = lp + ".planes[" + std::to_string(p) + "]";
      auto [rows, cols] = plane_shape(level.resolution, v.frames, p);
      c.check(plane.channels == v.channels, pp, "channel width differs from pyramid channel width");
      c.check(plane.rows == rows && plane.cols == cols, pp,
              "grid " + std::to_string(plane.rows) + "x" + std::to_string(plane.cols) + " expected " +
                  std::to_string(rows) + "x" + std::to_string(cols));
      c.check(plane.data.size() == size_t{plane.channels} * plane.rows * plane.cols, pp,
              "data length does not match C x rows x cols");
      c.finite(plane.data, pp);
    }
  }
}

void check_mlp(const Mlp& m, const std::string& path, Checker& c) {
  try {
    m.validate();
  } catch (const Error& e) {
    c.check(false, path, e.what());
    return;
  }
  for (size_t l = 0; l < m.spec.layers(); ++l) {
    c.check(m.weights.w[l].all_finite(), path + ".w[" + std::to_string(l) + "]", "non-finite weight");
  }
}

void check_decoder(const Scene& scene, Checker& c) {
  const DeformationDecoder& d = scene.decoder;
  const size_t feat = scene.voxels.feature_width();
  size_t head_in = feat;
  if (d.trunk) {
    check_mlp(*d.trunk, "decoder.trunk", c);
    c.check(d.trunk->spec.widths.empty() || d.trunk->spec.in_width() == feat, "decoder.trunk",
            "trunk input width must equal S*C = " + std::to_string(feat));
    if (!d.trunk->spec.widths.empty()) head_in = d.trunk->spec.out_width();
  }
  const size_t out_widths[kHeadCount] = {3, 3, 4, 1, scene.gaussians.sh_dim()};
  static const char* kHeadNames[kHeadCount] = {"position", "scale", "rotation", "opacity", "sh"};
  for (size_t h = 0; h < kHeadCount; ++h) {
    const std::string path = std::string("decoder.heads.") + kHeadNames[h];
    check_mlp(d.heads[h], path, c);
    if (d.heads[h].spec.widths.empty()) continue;
    c.check(d.heads[h].spec.in_width() == head_in, path,
            "input width " + std::to_string(d.heads[h].spec.in_width()) + " expected " + std::to_string(head_in));
    c.check(d.heads[h].spec.out_width() == out_widths[h], path,
            "output width " + std::to_string(d.heads[h].spec.out_width()) + " expected " +
                std::to_string(out_widths[h]));
  }
}

}  // namespace

ValidationReport validate_scene(const Scene& scene) {
  Checker c;
  check_gaussians(scene.gaussians, c);
  check_voxels(scene.voxels, c);
  check_decoder(scene, c);
  const SceneMetadata& m = scene.metadata;
  c.check(m.time_begin == 0.0f && m.time_end == 1.0f, "metadata.time_range", "time range must be [0,1]");
  for (int a = 0; a < 3; ++a)
    c.check(m.bounds_max[a] > m.bounds_min[a], "metadata.bounds", "bounds must have positive extent");
  return c.report;
}

namespace {

double bilinear(const Plane& plane, size_t channel, double u, double v) {
  auto coord = [](double x, uint32_t n, size_t& i0, size_t& i1, double& frac) {
    x = std::clamp(x, 0.0, 1.0) * (n - 1);
    double fl = std::floor(x);
    i0 = static_cast<size_t>(fl);
    if (i0 + 1 >= n) {
      i0 = n - 1;
      i1 = i0;
      frac = 0.0;
    } else {
      i1 = i0 + 1;
      frac = x - fl;
    }
  };
  size_t r0, r1, c0, c1;
  double fr, fc;
  coord(u, plane.rows, r0, r1, fr);
  coord(v, plane.cols, c0, c1, fc);
  const double a = plane.at(channel, r0, c0), b = plane.at(channel, r0, c1);
  const double c = plane.at(channel, r1, c0), d = plane.at(channel, r1, c1);
  return (1.0 - fr) * ((1.0 - fc) * a + fc * b) + fr * ((1.0 - fc) * c + fc * d);
}

}  // namespace

std::vector<double> query_voxels(const HexplanePyramid& voxels, const std::array<double, 3>& p, double t) {
  const double coords[4] = {p[0], p[1], p[2], t};
  std::vector<double> out(voxels.feature_width(), 1.0);
  for (size_t s = 0; s < voxels.levels.size(); ++s) {
    const Level& level = voxels.levels[s];
    for (size_t pid = 0; pid < kPlanesPerLevel; ++pid) {
      const PlaneAxes ax = plane_axes(pid);
      for (size_t c = 0; c < voxels.channels; ++c)
        out[s * voxels.channels + c] *= bilinear(level.planes[pid], c, coords[ax.rows], coords[ax.cols]);
    }
  }
  return out;
}

CanonicalGaussians apply_deformation(const Scene& scene, double t) {
  const CanonicalGaussians& g = scene.gaussians;
  const DeformationDecoder& dec = scene.decoder;
  const size_t feat_w = scene.voxels.feature_width();
  require(dec.input_width() == feat_w, ErrorKind::kShape,
          "decoder input width " + std::to_string(dec.input_width()) + " != voxel feature width " +
              std::to_string(feat_w));
  const size_t n = g.count;
  const size_t d = g.sh_dim();
  const size_t widths[kHeadCount] = {3, 3, 4, 1, d};
  for (size_t h = 0; h < kHeadCount; ++h)
    require(dec.heads[h].spec.out_width() == widths[h], ErrorKind::kShape, "decoder head width mismatch");

  const SceneMetadata& m = scene.metadata;
  Matrix features(n, feat_w);
  for (size_t i = 0; i < n; ++i) {
    std::array<double, 3> p;
    for (int a = 0; a < 3; ++a)
      p[a] = (g.positions[i * 3 + a] - m.bounds_min[a]) / double(m.bounds_max[a] - m.bounds_min[a]);
    auto f = query_voxels(scene.voxels, p, t);
    std::copy(f.begin(), f.end(), features.row(i).begin());
  }
  const Matrix hidden = dec.trunk ? mlp_forward(*dec.trunk, features) : features;

  CanonicalGaussians out = g;
  auto add = [&](std::vector<float>& attr, size_t width, const Matrix& delta) {
    for (size_t i = 0; i < n; ++i)
      for (size_t k = 0; k < width; ++k)
        attr[i * width + k] = static_cast<float>(double(attr[i * width + k]) + delta(i, k));
  };
  add(out.positions, 3, mlp_forward(dec.heads[kHeadPosition], hidden));
  add(out.scales, 3, mlp_forward(dec.heads[kHeadScale], hidden));
  const Matrix drot = mlp_forward(dec.heads[kHeadRotation], hidden);
  add(out.rotations, 4, drot);
  add(out.opacities, 1, mlp_forward(dec.heads[kHeadOpacity], hidden));
  add(out.sh, d, mlp_forward(dec.heads[kHeadSh], hidden));
  for (size_t i = 0; i < n; ++i) {
    // Untouched rows keep their stored bits; a zero decoder is an exact identity.
    if (std::all_of(drot.row(i).begin(), drot.row(i).end(), [](double v) { return v == 0.0; })) continue;
    double norm = 0.0;
    for (int k = 0; k < 4; ++k) norm += double(out.rotations[i * 4 + k]) * out.rotations[i * 4 + k];
    norm = std::sqrt(norm);
    if (norm > 0.0)
      for (int k = 0; k < 4; ++k) out.rotations[i * 4 + k] = static_cast<float>(out.rotations[i * 4 + k] / norm);
  }
  return out;
}

}  // namespace gs4dcc
