#pragma once

#include <vector>

#include "gs4dcc/numkit.hpp"
#include "gs4dcc/rng.hpp"

namespace gs4dcc::testing {

inline Matrix random_matrix(size_t r, size_t c, Rng& rng, double scale = 1.0) {
  Matrix m(r, c);
  for (double& v : m.data()) v = scale * rng.normal();
  return m;
}

// All weights then all biases, layer by layer.
inline std::vector<double> flatten(const MlpWeights& w) {
  std::vector<double> out;
  for (size_t l = 0; l < w.w.size(); ++l) {
    out.insert(out.end(), w.w[l].data().begin(), w.w[l].data().end());
    out.insert(out.end(), w.b[l].begin(), w.b[l].end());
  }
  return out;
}

inline MlpWeights unflatten(const MlpWeights& shape, std::span<const double> flat) {
  MlpWeights w = shape;
  size_t k = 0;
  for (size_t l = 0; l < w.w.size(); ++l) {
    for (double& v : w.w[l].data()) v = flat[k++];
    for (double& v : w.b[l]) v = flat[k++];
  }
  return w;
}

inline std::vector<double> flatten(const MlpGrads& g) {
  std::vector<double> out;
  for (size_t l = 0; l < g.dw.size(); ++l) {
    out.insert(out.end(), g.dw[l].data().begin(), g.dw[l].data().end());
    out.insert(out.end(), g.db[l].begin(), g.db[l].end());
  }
  return out;
}

inline double dot(const Matrix& a, const Matrix& b) {
  double s = 0.0;
  for (size_t i = 0; i < a.size(); ++i) s += a.data()[i] * b.data()[i];
  return s;
}

}  // namespace gs4dcc::testing

#include "gs4dcc/synth.hpp"

namespace gs4dcc::testing {

inline SynthSpec small_spec(uint64_t seed = 1) {
  SynthSpec s;
  s.gaussians = 40;
  s.levels = 2;
  s.channels = 2;
  s.frames = 4;
  s.base_resolution = {4, 4, 4};
  s.sh_clusters = 4;
  s.decoder_hidden = 4;
  s.seed = seed;
  return s;
}

}  // namespace gs4dcc::testing
