#include "gs4dcc/nvcc.hpp"

#include <algorithm>
#include <cmath>

#include "gs4dcc/interchange.hpp"
#include "gs4dcc/parallel.hpp"
#include "gs4dcc/quant.hpp"
#include "gs4dcc/rng.hpp"

namespace gs4dcc {

const char* context_case_name(ContextCase c) {
  switch (c) {
    case ContextCase::kFactorized: return "factorized";
    case ContextCase::kTemporal: return "temporal";
    case ContextCase::kSpatial: return "spatial";
    case ContextCase::kFull: return "full";
  }
  return "?";
}

const char* nvcc_mode_name(NvccMode m) {
  switch (m) {
    case NvccMode::kFull: return "full";
    case NvccMode::kSpatialOnly: return "spatial-only";
    case NvccMode::kTemporalOnly: return "temporal-only";
    case NvccMode::kNoHidden: return "no-hidden";
    case NvccMode::kFactorized: return "factorized";
  }
  return "?";
}

ContextCase route_context(size_t level, size_t t, PlaneKind kind, NvccMode mode) {
  const bool spatial_ok = level > 0 && mode != NvccMode::kTemporalOnly && mode != NvccMode::kFactorized;
  const bool temporal_ok = kind == PlaneKind::kSpatiotemporal && t > 0 && mode != NvccMode::kSpatialOnly &&
                           mode != NvccMode::kFactorized;
  if (spatial_ok && temporal_ok) return ContextCase::kFull;
  if (temporal_ok) return ContextCase::kTemporal;
  if (spatial_ok) return ContextCase::kSpatial;
  return ContextCase::kFactorized;
}

size_t QuantizedPyramid::element_count() const {
  size_t n = 0;
  for (const auto& lvl : planes)
    for (const SymbolPlane& p : lvl) n += p.data.size();
  return n;
}

QuantizedPyramid QuantizedPyramid::empty_like(const QuantizedPyramid& other) {
  QuantizedPyramid q;
  q.channels = other.channels;
  q.frames = other.frames;
  q.resolutions = other.resolutions;
  q.planes.resize(other.planes.size());
  for (size_t s = 0; s < other.planes.size(); ++s)
    for (size_t p = 0; p < kPlanesPerLevel; ++p) {
      const SymbolPlane& src = other.planes[s][p];
      q.planes[s][p] = SymbolPlane{src.rows, src.cols, std::vector<int32_t>(src.data.size(), 0), {}};
    }
  return q;
}

QuantizedPyramid quantize_voxels(const HexplanePyramid& voxels, double gain) {
  require(gain > 0.0 && std::isfinite(gain), ErrorKind::kInvalid, "voxel quantization gain must be positive");
  QuantizedPyramid q;
  q.channels = voxels.channels;
  q.frames = voxels.frames;
  q.planes.resize(voxels.levels.size());
  for (size_t s = 0; s < voxels.levels.size(); ++s) {
    q.resolutions.push_back(voxels.levels[s].resolution);
    for (size_t p = 0; p < kPlanesPerLevel; ++p) {
      const Plane& src = voxels.levels[s].planes[p];
      SymbolPlane& dst = q.planes[s][p];
      dst.rows = src.rows;
      dst.cols = src.cols;
      dst.latent.resize(src.data.size());
      dst.data.resize(src.data.size());
      for (size_t i = 0; i < src.data.size(); ++i) {
        dst.latent[i] = double(src.data[i]) * gain;
        const double r = round_half_even(dst.latent[i]);
        require(std::abs(r) < 1e9, ErrorKind::kInvalid, "voxel feature too large for the chosen gain");
        dst.data[i] = static_cast<int32_t>(r);
      }
    }
  }
  return q;
}

HexplanePyramid dequantize_voxels(const QuantizedPyramid& q, double gain) {
  HexplanePyramid v = HexplanePyramid::zeros(q.channels, q.frames, q.resolutions);
  for (size_t s = 0; s < q.levels(); ++s)
    for (size_t p = 0; p < kPlanesPerLevel; ++p) {
      const auto& src = q.planes[s][p].data;
      auto& dst = v.levels[s].planes[p].data;
      for (size_t i = 0; i < src.size(); ++i) dst[i] = static_cast<float>(src[i] / gain);
    }
  return v;
}

namespace {

size_t rows_in_plane(const QuantizedPyramid& q, size_t plane) {
  return plane_kind(plane) == PlaneKind::kSpatiotemporal ? q.frames : 1;
}

size_t row_len(const SymbolPlane& sp, size_t plane) {
  return plane_kind(plane) == PlaneKind::kSpatiotemporal ? sp.cols : size_t{sp.rows} * sp.cols;
}

std::vector<int32_t> extract_row(const SymbolPlane& sp, size_t channels, size_t plane, size_t t) {
  if (plane_kind(plane) == PlaneKind::kSpatial) return sp.data;
  const size_t len = sp.cols;
  std::vector<int32_t> row(channels * len);
  for (size_t c = 0; c < channels; ++c)
    std::copy_n(sp.data.begin() + static_cast<ptrdiff_t>((c * sp.rows + t) * len), len,
                row.begin() + static_cast<ptrdiff_t>(c * len));
  return row;
}

void insert_row(SymbolPlane& sp, size_t channels, size_t plane, size_t t, std::span<const int32_t> row) {
  if (plane_kind(plane) == PlaneKind::kSpatial) {
    require(row.size() == sp.data.size(), ErrorKind::kShape, "row does not match plane size");
    std::copy(row.begin(), row.end(), sp.data.begin());
    return;
  }
  const size_t len = sp.cols;
  require(row.size() == channels * len, ErrorKind::kShape, "row does not match plane width");
  for (size_t c = 0; c < channels; ++c)
    std::copy_n(row.begin() + static_cast<ptrdiff_t>(c * len), len,
                sp.data.begin() + static_cast<ptrdiff_t>((c * sp.rows + t) * len));
}

// h_t from h_{t−1} and the previous decoded row.
Matrix temporal_context(const NvccLevelParams& lp, NvccMode mode, const Matrix& h_prev,
                        std::span<const int32_t> prev_row, size_t channels, size_t len, AttentionTape* tape) {
  std::vector<double> prevd(prev_row.begin(), prev_row.end());
  Matrix f_prev = row_tokens(prevd, channels, len, lp.ctx_scale);
  if (mode == NvccMode::kNoHidden) return f_prev;
  return cross_attention_update(h_prev, f_prev, lp.attention, tape);
}

// Coarser level resampled onto the finer row (st planes: same t) or plane.
std::vector<double> coarse_context(const SymbolPlane& coarse, const SymbolPlane& fine, size_t channels,
                                   size_t plane, size_t t) {
  if (plane_kind(plane) == PlaneKind::kSpatiotemporal) {
    auto row = extract_row(coarse, channels, plane, t);
    std::vector<double> rowd(row.begin(), row.end());
    return spatial_prior(rowd, channels, coarse.cols, fine.cols);
  }
  std::vector<double> all(coarse.data.begin(), coarse.data.end());
  return spatial_prior_2d(all, channels, coarse.rows, coarse.cols, fine.rows, fine.cols);
}

}  // namespace

std::vector<RowKey> coding_plan(const QuantizedPyramid& q) {
  std::vector<RowKey> plan;
  for (uint32_t s = 0; s < q.levels(); ++s)
    for (uint32_t p = 0; p < kPlanesPerLevel; ++p)
      for (uint32_t t = 0; t < rows_in_plane(q, p); ++t) plan.push_back({s, p, t});
  return plan;
}

std::vector<RowFeature> decompose_voxels(const QuantizedPyramid& q) {
  std::vector<RowFeature> rows;
  for (const RowKey& k : coding_plan(q)) {
    const SymbolPlane& sp = q.planes[k.level][k.plane];
    RowFeature f;
    f.key = k;
    f.channels = q.channels;
    f.length = static_cast<uint32_t>(row_len(sp, k.plane));
    f.data = extract_row(sp, q.channels, k.plane, k.t);
    rows.push_back(std::move(f));
  }
  return rows;
}

QuantizedPyramid recompose_voxels(const QuantizedPyramid& shape, std::span<const RowFeature> rows) {
  QuantizedPyramid q = QuantizedPyramid::empty_like(shape);
  for (const RowFeature& f : rows) {
    require(f.key.level < q.levels() && f.key.plane < kPlanesPerLevel, ErrorKind::kShape, "row key out of range");
    insert_row(q.planes[f.key.level][f.key.plane], q.channels, f.key.plane, f.key.t, f.data);
  }
  return q;
}

std::vector<double> spatial_prior(std::span<const double> coarse, size_t channels, size_t coarse_len,
                                  size_t target_len) {
  require(coarse_len > 0, ErrorKind::kInvalid, "spatial prior from an empty coarser row");
  require(coarse.size() == channels * coarse_len, ErrorKind::kShape, "coarse row size mismatch");
  std::vector<double> out(channels * target_len);
  for (size_t i = 0; i < target_len; ++i) {
    const double x = target_len == 1 ? 0.0
                                     : static_cast<double>(i) * static_cast<double>(coarse_len - 1) /
                                           static_cast<double>(target_len - 1);
    size_t i0 = static_cast<size_t>(std::floor(x));
    if (i0 >= coarse_len) i0 = coarse_len - 1;
    const size_t i1 = std::min(i0 + 1, coarse_len - 1);
    const double f = x - static_cast<double>(i0);
    for (size_t c = 0; c < channels; ++c) {
      const double a = coarse[c * coarse_len + i0];
      const double b = coarse[c * coarse_len + i1];
      out[c * target_len + i] = f == 0.0 ? a : (1.0 - f) * a + f * b;
    }
  }
  return out;
}

std::vector<double> spatial_prior_2d(std::span<const double> coarse, size_t channels, size_t ca, size_t cb,
                                     size_t a, size_t b) {
  require(ca > 0 && cb > 0, ErrorKind::kInvalid, "spatial prior from an empty coarser plane");
  require(coarse.size() == channels * ca * cb, ErrorKind::kShape, "coarse plane size mismatch");
  // Separable: resample columns (B axis) per row, then rows (A axis).
  std::vector<double> tmp(channels * ca * b);
  for (size_t c = 0; c < channels; ++c)
    for (size_t r = 0; r < ca; ++r) {
      auto line = spatial_prior(coarse.subspan((c * ca + r) * cb, cb), 1, cb, b);
      std::copy(line.begin(), line.end(), tmp.begin() + static_cast<ptrdiff_t>((c * ca + r) * b));
    }
  std::vector<double> out(channels * a * b);
  std::vector<double> col(ca);
  for (size_t c = 0; c < channels; ++c)
    for (size_t k = 0; k < b; ++k) {
      for (size_t r = 0; r < ca; ++r) col[r] = tmp[(c * ca + r) * b + k];
      auto line = spatial_prior(col, 1, ca, a);
      for (size_t r = 0; r < a; ++r) out[(c * a + r) * b + k] = line[r];
    }
  return out;
}

namespace {

// Relu-pair initialisation: hidden units carry relu(x) and relu(−x) for each
// input so the μ outputs start as a weighted sum of the contexts.
Mlp paired_head(size_t channels, size_t inputs_per_group, const std::vector<double>& group_gain, double log_sigma,
                Rng& rng) {
  const size_t in = channels * inputs_per_group;
  Mlp m = Mlp::zeros(MlpSpec{{in, 2 * in, 2 * channels}, {Activation::kRelu, Activation::kIdentity}});
  Matrix& w1 = m.weights.w[0];
  Matrix& w2 = m.weights.w[1];
  for (size_t i = 0; i < in; ++i) {
    w1(2 * i, i) = 1.0;
    w1(2 * i + 1, i) = -1.0;
  }
  for (size_t g = 0; g < inputs_per_group; ++g)
    for (size_t c = 0; c < channels; ++c) {
      const size_t i = g * channels + c;
      w2(c, 2 * i) = group_gain[g];
      w2(c, 2 * i + 1) = -group_gain[g];
    }
  for (size_t c = 0; c < channels; ++c) m.weights.b[1][channels + c] = log_sigma;
  for (Matrix* w : {&w1, &w2})
    for (double& v : w->data()) v += rng.uniform(-0.01, 0.01);
  return m;
}

void round_mlp(Mlp& m) {
  for (size_t l = 0; l < m.spec.layers(); ++l) {
    for (double& v : m.weights.w[l].data()) v = round_to_half(static_cast<float>(v));
    for (double& v : m.weights.b[l]) v = round_to_half(static_cast<float>(v));
  }
}

}  // namespace

NvccParams NvccParams::initial(uint32_t channels, size_t levels, NvccMode mode, uint64_t seed) {
  require(channels > 0, ErrorKind::kInvalid, "NVCC needs at least one channel");
  Rng rng(seed);
  NvccParams p;
  p.mode = mode;
  p.channels = channels;
  const double init_log_sigma = 0.0;
  for (size_t s = 0; s < levels; ++s) {
    NvccLevelParams lp;
    const double bound = 0.5 / std::sqrt(static_cast<double>(channels));
    for (Matrix* w : {&lp.attention.wq, &lp.attention.wk, &lp.attention.wv}) {
      *w = Matrix(channels, channels);
      for (double& v : w->data()) v = rng.uniform(-bound, bound);
    }
    lp.attention.wv *= 0.1;
    lp.fusion = paired_head(channels, 2, {0.5, 0.5}, init_log_sigma, rng);
    lp.temporal = paired_head(channels, 1, {0.5}, init_log_sigma, rng);
    lp.spatial = paired_head(channels, 1, {0.5}, init_log_sigma, rng);
    lp.plane_spatial = paired_head(channels, 1, {0.5}, init_log_sigma, rng);
    p.levels.push_back(std::move(lp));
  }
  p.supports.assign(levels * kPlanesPerLevel, Support{0, 0});
  p.priors.assign(levels * kPlanesPerLevel,
                  FactorizedPrior{std::vector<float>(channels, 0.0f), std::vector<float>(channels, 1.0f)});
  return p;
}

void NvccParams::fit_statistics(const QuantizedPyramid& q) {
  require(q.channels == channels && q.levels() == levels.size(), ErrorKind::kShape,
          "NVCC parameters do not match pyramid geometry");
  supports.assign(q.levels() * kPlanesPerLevel, Support{0, 0});
  priors.assign(q.levels() * kPlanesPerLevel, FactorizedPrior{});
  for (size_t s = 0; s < q.levels(); ++s) {
    double sum_sq = 0.0;
    size_t count = 0;
    for (size_t p = 0; p < kPlanesPerLevel; ++p) {
      const SymbolPlane& sp = q.planes[s][p];
      supports[section_index(s, p)] = support_of(sp.data);
      for (int32_t v : sp.data) sum_sq += double(v) * v;
      count += sp.data.size();

      // Prior over the rows that fall back to it (whole section if none do).
      std::vector<std::vector<int32_t>> rows;
      for (size_t t = 0; t < rows_in_plane(q, p); ++t)
        if (route_context(s, t, plane_kind(p), mode) == ContextCase::kFactorized)
          rows.push_back(extract_row(sp, channels, p, t));
      if (rows.empty())
        for (size_t t = 0; t < rows_in_plane(q, p); ++t) rows.push_back(extract_row(sp, channels, p, t));
      const size_t len = row_len(sp, p);
      std::vector<int32_t> by_channel(channels * len * rows.size());
      for (size_t r = 0; r < rows.size(); ++r)
        for (size_t c = 0; c < channels; ++c)
          std::copy_n(rows[r].begin() + static_cast<ptrdiff_t>(c * len), len,
                      by_channel.begin() + static_cast<ptrdiff_t>((c * rows.size() + r) * len));
      priors[section_index(s, p)] = FactorizedPrior::fit(by_channel, channels);
    }
    const double rms = count ? std::sqrt(sum_sq / static_cast<double>(count)) : 0.0;
    levels[s].ctx_scale = static_cast<float>(std::max(1.0, rms));
  }
}

void NvccParams::round_to_half() {
  for (NvccLevelParams& lp : levels) {
    for (Matrix* w : {&lp.attention.wq, &lp.attention.wk, &lp.attention.wv})
      for (double& v : w->data()) v = gs4dcc::round_to_half(static_cast<float>(v));
    for (Mlp* m : {&lp.fusion, &lp.temporal, &lp.spatial, &lp.plane_spatial}) round_mlp(*m);
  }
}

size_t NvccParams::parameter_count() const {
  size_t n = 0;
  for (const NvccLevelParams& lp : levels)
    n += 3 * lp.attention.wq.size() + lp.fusion.parameter_count() + lp.temporal.parameter_count() +
         lp.spatial.parameter_count() + lp.plane_spatial.parameter_count();
  return n;
}

void write_nvcc_params(ByteWriter& w, const NvccParams& p) {
  w.u8(static_cast<uint8_t>(p.mode));
  w.u32(p.channels);
  w.u32(static_cast<uint32_t>(p.levels.size()));
  for (const NvccLevelParams& lp : p.levels) {
    w.f32(lp.ctx_scale);
    for (const Matrix* m : {&lp.attention.wq, &lp.attention.wk, &lp.attention.wv})
      for (double v : m->data()) w.f16(static_cast<float>(v));
    for (const Mlp* m : {&lp.fusion, &lp.temporal, &lp.spatial, &lp.plane_spatial}) write_mlp(w, *m, true);
  }
  for (size_t i = 0; i < p.supports.size(); ++i) {
    w.i32(p.supports[i].lo);
    w.i32(p.supports[i].hi);
    for (size_t c = 0; c < p.channels; ++c) {
      w.f32(p.priors[i].mu[c]);
      w.f32(p.priors[i].sigma[c]);
    }
  }
}

NvccParams read_nvcc_params(ByteReader& r) {
  NvccParams p;
  const uint8_t mode = r.u8();
  require(mode <= static_cast<uint8_t>(NvccMode::kFactorized), ErrorKind::kFormat, "unknown NVCC mode");
  p.mode = static_cast<NvccMode>(mode);
  p.channels = r.u32();
  const uint32_t levels = r.u32();
  require(p.channels >= 1 && p.channels <= 4096 && levels <= 64, ErrorKind::kFormat, "implausible NVCC shape");
  for (uint32_t s = 0; s < levels; ++s) {
    NvccLevelParams lp;
    lp.ctx_scale = r.f32();
    for (Matrix* m : {&lp.attention.wq, &lp.attention.wk, &lp.attention.wv}) {
      *m = Matrix(p.channels, p.channels);
      for (double& v : m->data()) v = r.f16();
    }
    for (Mlp* m : {&lp.fusion, &lp.temporal, &lp.spatial, &lp.plane_spatial}) *m = read_mlp(r, true);
    p.levels.push_back(std::move(lp));
  }
  p.supports.resize(size_t{levels} * kPlanesPerLevel);
  p.priors.resize(size_t{levels} * kPlanesPerLevel);
  for (size_t i = 0; i < p.supports.size(); ++i) {
    p.supports[i].lo = r.i32();
    p.supports[i].hi = r.i32();
    require(p.supports[i].lo <= p.supports[i].hi, ErrorKind::kFormat, "NVCC support lo > hi");
    p.priors[i].mu.resize(p.channels);
    p.priors[i].sigma.resize(p.channels);
    for (size_t c = 0; c < p.channels; ++c) {
      p.priors[i].mu[c] = r.f32();
      p.priors[i].sigma[c] = r.f32();
    }
  }
  return p;
}

Matrix row_tokens(std::span<const double> row, size_t channels, size_t length, double scale) {
  Matrix m(length, channels);
  const double inv = 1.0 / scale;
  for (size_t c = 0; c < channels; ++c)
    for (size_t l = 0; l < length; ++l) m(l, c) = row[c * length + l] * inv;
  return m;
}

const Mlp& head_for(const NvccLevelParams& lp, ContextCase which, PlaneKind kind) {
  switch (which) {
    case ContextCase::kFull: return lp.fusion;
    case ContextCase::kTemporal: return lp.temporal;
    case ContextCase::kSpatial: return kind == PlaneKind::kSpatial ? lp.plane_spatial : lp.spatial;
    case ContextCase::kFactorized: break;
  }
  fail(ErrorKind::kInvalid, "factorized rows have no head network");
}

Mlp& head_for(NvccLevelParams& lp, ContextCase which, PlaneKind kind) {
  return const_cast<Mlp&>(head_for(static_cast<const NvccLevelParams&>(lp), which, kind));
}

RowDistribution head_forward(const NvccLevelParams& lp, const FactorizedPrior& prior, const RowContext& ctx,
                             size_t channels, size_t length, MlpTape* tape, Matrix* raw_out) {
  RowDistribution d;
  d.which = ctx.which;
  d.mu.resize(channels * length);
  d.sigma.resize(channels * length);
  if (ctx.which == ContextCase::kFactorized) {
    for (size_t c = 0; c < channels; ++c)
      for (size_t l = 0; l < length; ++l) {
        d.mu[c * length + l] = prior.mu[c];
        d.sigma[c * length + l] = clamp_sigma(prior.sigma[c]);
      }
    return d;
  }
  const bool has_h = ctx.which == ContextCase::kFull || ctx.which == ContextCase::kTemporal;
  const bool has_s = ctx.which == ContextCase::kFull || ctx.which == ContextCase::kSpatial;
  require(!has_h || (ctx.hidden.rows() == length && ctx.hidden.cols() == channels), ErrorKind::kShape,
          "temporal context shape mismatch");
  require(!has_s || (ctx.spatial.rows() == length && ctx.spatial.cols() == channels), ErrorKind::kShape,
          "spatial context shape mismatch");
  Matrix x(length, (has_h ? channels : 0) + (has_s ? channels : 0));
  for (size_t l = 0; l < length; ++l) {
    size_t col = 0;
    if (has_h)
      for (size_t c = 0; c < channels; ++c) x(l, col++) = ctx.hidden(l, c);
    if (has_s)
      for (size_t c = 0; c < channels; ++c) x(l, col++) = ctx.spatial(l, c);
  }
  const Matrix out = mlp_forward(head_for(lp, ctx.which, ctx.kind), x, tape);
  const double sc = lp.ctx_scale;
  for (size_t c = 0; c < channels; ++c)
    for (size_t l = 0; l < length; ++l) {
      d.mu[c * length + l] = sc * out(l, c);
      d.sigma[c * length + l] = clamp_sigma(sc * std::exp(out(l, channels + c)));
    }
  if (raw_out) *raw_out = out;
  return d;
}

NvccState::NvccState(const NvccParams& params, const QuantizedPyramid& geometry)
    : params_(params), decoded_(QuantizedPyramid::empty_like(geometry)) {
  require(params.channels == geometry.channels && params.levels.size() == geometry.levels(), ErrorKind::kShape,
          "NVCC parameters do not match pyramid geometry");
  require(params.supports.size() == geometry.levels() * kPlanesPerLevel &&
              params.priors.size() == geometry.levels() * kPlanesPerLevel,
          ErrorKind::kShape, "NVCC section tables do not match pyramid geometry");
  hidden_.resize(geometry.levels() * kPlanesPerLevel);
  next_row_.assign(geometry.levels() * kPlanesPerLevel, 0);
  for (size_t s = 0; s < geometry.levels(); ++s)
    for (size_t p = 0; p < 3; ++p) hidden_[section_index(s, p)] = Matrix(geometry.planes[s][p].cols, params.channels);
}

size_t NvccState::row_length(const RowKey& key) const {
  return row_len(decoded_.planes[key.level][key.plane], key.plane);
}

std::vector<double> NvccState::coarse_prior(const RowKey& key) const {
  const size_t coarse_sec = section_index(key.level - 1, key.plane);
  if (plane_kind(key.plane) == PlaneKind::kSpatiotemporal)
    require(next_row_[coarse_sec] > static_cast<int32_t>(key.t), ErrorKind::kInvalid,
            "coarser row not yet coded; rows must follow the coding plan");
  else
    require(next_row_[coarse_sec] == 1, ErrorKind::kInvalid, "coarser plane not yet coded");
  return coarse_context(decoded_.planes[key.level - 1][key.plane], decoded_.planes[key.level][key.plane],
                        decoded_.channels, key.plane, key.t);
}

RowContext NvccState::context(const RowKey& key, AttentionTape* tape) {
  require(key.level < decoded_.levels() && key.plane < kPlanesPerLevel, ErrorKind::kShape, "row key out of range");
  const size_t sec = section_index(key.level, key.plane);
  require(next_row_[sec] == static_cast<int32_t>(key.t), ErrorKind::kInvalid, "rows must be visited in plan order");
  const PlaneKind kind = plane_kind(key.plane);
  const NvccLevelParams& lp = params_.levels[key.level];
  const size_t channels = decoded_.channels;
  const size_t len = row_length(key);

  RowContext ctx;
  ctx.kind = kind;
  ctx.which = route_context(key.level, key.t, kind, params_.mode);
  if (ctx.which == ContextCase::kFull || ctx.which == ContextCase::kTemporal) {
    auto prev = extract_row(decoded_.planes[key.level][key.plane], channels, key.plane, key.t - 1);
    hidden_[sec] = temporal_context(lp, params_.mode, hidden_[sec], prev, channels, len, tape);
    ctx.hidden = hidden_[sec];
  }
  if (ctx.which == ContextCase::kFull || ctx.which == ContextCase::kSpatial)
    ctx.spatial = row_tokens(coarse_prior(key), channels, len, lp.ctx_scale);
  return ctx;
}

void NvccState::commit(const RowKey& key, std::span<const int32_t> row) {
  const size_t sec = section_index(key.level, key.plane);
  require(next_row_[sec] == static_cast<int32_t>(key.t), ErrorKind::kInvalid, "rows must be committed in plan order");
  insert_row(decoded_.planes[key.level][key.plane], decoded_.channels, key.plane, key.t, row);
  ++next_row_[sec];
}

uint32_t symbol_crc(std::span<const int32_t> symbols) {
  ByteWriter w;
  for (int32_t v : symbols) w.i32(v);
  return crc32(w.data());
}

namespace {

// Visits every row in plan order with its distribution. `row_symbols` returns
// the symbols to commit after `visit` has run (original for the encoder,
// freshly decoded for the decoder).
template <class Visit>
void drive(const NvccParams& params, const QuantizedPyramid& geometry, Visit&& visit) {
  NvccState state(params, geometry);
  for (const RowKey& key : coding_plan(geometry)) {
    RowContext ctx = state.context(key);
    const size_t len = state.row_length(key);
    RowDistribution dist = head_forward(params.levels[key.level], params.priors[section_index(key.level, key.plane)],
                                        ctx, geometry.channels, len);
    std::vector<int32_t> row = visit(key, dist, len);
    state.commit(key, row);
  }
}

void check_support(const Support& sup, int32_t v, const RowKey& key) {
  require(sup.contains(v), ErrorKind::kInvalid,
          "symbol " + std::to_string(v) + " outside support [" + std::to_string(sup.lo) + "," +
              std::to_string(sup.hi) + "] in level " + std::to_string(key.level) + " plane " +
              plane_name(key.plane));
}

}  // namespace

std::vector<NvccSection> nvcc_encode(const QuantizedPyramid& q, const NvccParams& params) {
  std::vector<NvccSection> sections;
  std::optional<RangeEncoder> enc;
  std::vector<int32_t> section_symbols;
  IntegerCdf cdf;
  auto close = [&] {
    if (!enc) return;
    sections.back().payload = enc->finish();
    sections.back().symbol_count = static_cast<uint32_t>(section_symbols.size());
    sections.back().symbol_crc = symbol_crc(section_symbols);
    enc.reset();
  };
  drive(params, q, [&](const RowKey& key, const RowDistribution& dist, size_t len) {
    if (key.t == 0) {
      close();
      sections.push_back(NvccSection{key, 0, 0, {}});
      enc.emplace();
      section_symbols.clear();
    }
    const Support& sup = params.supports[section_index(key.level, key.plane)];
    std::vector<int32_t> row = extract_row(q.planes[key.level][key.plane], q.channels, key.plane, key.t);
    for (size_t i = 0; i < row.size(); ++i) {
      check_support(sup, row[i], key);
      dg_cdf(dist.mu[i], dist.sigma[i], sup, cdf);
      enc->encode(static_cast<uint32_t>(row[i] - sup.lo), cdf);
    }
    (void)len;
    section_symbols.insert(section_symbols.end(), row.begin(), row.end());
    return row;
  });
  close();
  return sections;
}

QuantizedPyramid nvcc_decode(std::span<const NvccSection> sections, const NvccParams& params,
                             const QuantizedPyramid& geometry) {
  const auto plan = coding_plan(geometry);
  size_t expected_sections = 0;
  for (const RowKey& k : plan) expected_sections += k.t == 0;
  require(sections.size() == expected_sections, ErrorKind::kFormat,
          "NVCC section count " + std::to_string(sections.size()) + ", plan needs " +
              std::to_string(expected_sections));

  QuantizedPyramid out;
  size_t sec_i = 0;
  std::optional<RangeDecoder> dec;
  std::vector<int32_t> section_symbols;
  IntegerCdf cdf;
  auto verify = [&] {
    if (!dec) return;
    const NvccSection& s = sections[sec_i - 1];
    if (section_symbols.size() != s.symbol_count || symbol_crc(section_symbols) != s.symbol_crc)
      fail(ErrorKind::kChecksum, "decoded symbols of level " + std::to_string(s.first.level) + " plane " +
                                     plane_name(s.first.plane) + " fail their checksum");
  };
  NvccState state(params, geometry);
  for (const RowKey& key : plan) {
    if (key.t == 0) {
      verify();
      const NvccSection& s = sections[sec_i++];
      require(s.first.level == key.level && s.first.plane == key.plane, ErrorKind::kFormat,
              "NVCC sections out of plan order");
      dec.emplace(s.payload);
      section_symbols.clear();
    }
    RowContext ctx = state.context(key);
    const size_t len = state.row_length(key);
    const Support& sup = params.supports[section_index(key.level, key.plane)];
    RowDistribution dist =
        head_forward(params.levels[key.level], params.priors[section_index(key.level, key.plane)], ctx,
                     geometry.channels, len);
    std::vector<int32_t> row(dist.mu.size());
    for (size_t i = 0; i < row.size(); ++i) {
      dg_cdf(dist.mu[i], dist.sigma[i], sup, cdf);
      row[i] = static_cast<int32_t>(dec->decode(cdf)) + sup.lo;
    }
    section_symbols.insert(section_symbols.end(), row.begin(), row.end());
    state.commit(key, row);
  }
  verify();
  out = state.decoded();
  return out;
}

NvccRate nvcc_rate(const QuantizedPyramid& q, const NvccParams& params) {
  NvccRate rate;
  rate.section_bits.assign(q.levels() * kPlanesPerLevel, 0.0);
  IntegerCdf cdf;
  drive(params, q, [&](const RowKey& key, const RowDistribution& dist, size_t) {
    const size_t sec = section_index(key.level, key.plane);
    const Support& sup = params.supports[sec];
    std::vector<int32_t> row = extract_row(q.planes[key.level][key.plane], q.channels, key.plane, key.t);
    for (size_t i = 0; i < row.size(); ++i) {
      check_support(sup, row[i], key);
      dg_cdf(dist.mu[i], dist.sigma[i], sup, cdf);
      rate.section_bits[sec] -= std::log2(double(cdf.mass(static_cast<size_t>(row[i] - sup.lo))) / cdf.total());
    }
    return row;
  });
  for (double b : rate.section_bits) rate.total_bits += b;
  return rate;
}

std::vector<RowDistribution> nvcc_row_distributions(const QuantizedPyramid& q, const NvccParams& params) {
  std::vector<RowDistribution> out;
  drive(params, q, [&](const RowKey& key, const RowDistribution& dist, size_t) {
    out.push_back(dist);
    return extract_row(q.planes[key.level][key.plane], q.channels, key.plane, key.t);
  });
  return out;
}

}  // namespace gs4dcc

namespace gs4dcc {

namespace {

NvccLevelGrads zero_level_grads(const NvccLevelParams& lp) {
  NvccLevelGrads g;
  const size_t c = lp.attention.wq.rows();
  g.attention.dwq = Matrix(c, c);
  g.attention.dwk = Matrix(c, c);
  g.attention.dwv = Matrix(c, c);
  g.fusion = MlpGrads::zeros_like(lp.fusion);
  g.temporal = MlpGrads::zeros_like(lp.temporal);
  g.spatial = MlpGrads::zeros_like(lp.spatial);
  g.plane_spatial = MlpGrads::zeros_like(lp.plane_spatial);
  return g;
}

MlpGrads& head_grads(NvccLevelGrads& g, ContextCase which, PlaneKind kind) {
  switch (which) {
    case ContextCase::kFull: return g.fusion;
    case ContextCase::kTemporal: return g.temporal;
    default: return kind == PlaneKind::kSpatial ? g.plane_spatial : g.spatial;
  }
}

size_t& head_count(NvccLevelGrads& g, ContextCase which, PlaneKind kind) {
  switch (which) {
    case ContextCase::kFull: return g.n_fusion;
    case ContextCase::kTemporal: return g.n_temporal;
    default: return kind == PlaneKind::kSpatial ? g.n_plane_spatial : g.n_spatial;
  }
}

struct SectionGrads {
  NvccLevelGrads g;
  double bits = 0.0;
  size_t symbols = 0;
};

SectionGrads section_surrogate(const QuantizedPyramid& q, const NvccParams& params, size_t level, size_t plane,
                               uint64_t seed) {
  const NvccLevelParams& lp = params.levels[level];
  const FactorizedPrior& prior = params.priors[section_index(level, plane)];
  const SymbolPlane& sp = q.planes[level][plane];
  const size_t channels = q.channels;
  const PlaneKind kind = plane_kind(plane);
  const size_t len = row_len(sp, plane);
  const size_t rows = rows_in_plane(q, plane);
  const double sc = lp.ctx_scale;

  SectionGrads out;
  out.g = zero_level_grads(lp);
  Rng rng(seed);
  Matrix hidden(len, channels);
  std::vector<AttentionTape> tapes;
  std::vector<Matrix> direct;
  for (size_t t = 0; t < rows; ++t) {
    RowContext ctx;
    ctx.kind = kind;
    ctx.which = route_context(level, t, kind, params.mode);
    AttentionTape atape;
    bool have_attention = false;
    if (ctx.which == ContextCase::kFull || ctx.which == ContextCase::kTemporal) {
      auto prev = extract_row(sp, channels, plane, t - 1);
      hidden = temporal_context(lp, params.mode, hidden, prev, channels, len, &atape);
      have_attention = params.mode != NvccMode::kNoHidden;
      ctx.hidden = hidden;
    }
    if (ctx.which == ContextCase::kFull || ctx.which == ContextCase::kSpatial)
      ctx.spatial = row_tokens(coarse_context(q.planes[level - 1][plane], sp, channels, plane, t), channels, len, sc);

    // Noisy latents of this row, channel-major.
    std::vector<double> x(channels * len);
    const auto row = extract_row(sp, channels, plane, t);
    for (size_t c = 0; c < channels; ++c)
      for (size_t l = 0; l < len; ++l) {
        const size_t src = kind == PlaneKind::kSpatial ? c * len + l : (c * sp.rows + t) * len + l;
        const double base = sp.latent.empty() ? double(row[c * len + l]) : sp.latent[src];
        x[c * len + l] = base + rng.centered();
      }
    out.symbols += x.size();

    if (ctx.which == ContextCase::kFactorized) {
      RowDistribution d = head_forward(lp, prior, ctx, channels, len);
      out.bits += noisy_rate_bits(x, d.mu, d.sigma).bits;
      continue;
    }
    MlpTape tape;
    Matrix raw;
    head_forward(lp, prior, ctx, channels, len, &tape, &raw);
    std::vector<double> mu(x.size()), sigma(x.size());
    for (size_t c = 0; c < channels; ++c)
      for (size_t l = 0; l < len; ++l) {
        mu[c * len + l] = sc * raw(l, c);
        sigma[c * len + l] = sc * std::exp(raw(l, channels + c));
      }
    NoisyRate nr = noisy_rate_bits(x, mu, sigma, true);
    out.bits += nr.bits;
    Matrix up(len, 2 * channels);
    for (size_t c = 0; c < channels; ++c)
      for (size_t l = 0; l < len; ++l) {
        up(l, c) = nr.d_mu[c * len + l] * sc;
        up(l, channels + c) = nr.d_sigma[c * len + l] * sigma[c * len + l];
      }
    MlpGrads hg = mlp_backward(head_for(lp, ctx.which, kind), tape, up);
    head_grads(out.g, ctx.which, kind).accumulate(hg);
    head_count(out.g, ctx.which, kind) += x.size();
    if (have_attention) {
      Matrix dh(len, channels);
      for (size_t l = 0; l < len; ++l)
        for (size_t c = 0; c < channels; ++c) dh(l, c) = hg.dx(l, c);
      tapes.push_back(std::move(atape));
      direct.push_back(std::move(dh));
    }
  }
  // back through the recurrence; attention rows form one unbroken chain from h_0 = 0
  Matrix carry(len, channels);
  for (size_t i = tapes.size(); i-- > 0;) {
    direct[i] += carry;
    AttentionGrads ag = cross_attention_backward(lp.attention, tapes[i], direct[i]);
    out.g.attention.dwq += ag.dwq;
    out.g.attention.dwk += ag.dwk;
    out.g.attention.dwv += ag.dwv;
    carry = std::move(ag.dh_prev);
  }
  return out;
}

}  // namespace

NvccGrads nvcc_surrogate(const QuantizedPyramid& q, const NvccParams& params, uint64_t seed) {
  require(params.channels == q.channels && params.levels.size() == q.levels(), ErrorKind::kShape,
          "NVCC parameters do not match pyramid geometry");
  const size_t sections = q.levels() * kPlanesPerLevel;
  std::vector<SectionGrads> parts(sections);
  parallel_for(sections, [&](size_t begin, size_t end) {
    for (size_t i = begin; i < end; ++i)
      parts[i] = section_surrogate(q, params, i / kPlanesPerLevel, i % kPlanesPerLevel,
                                   seed ^ (0x9E3779B97F4A7C15ull * (i + 1)));
  });
  NvccGrads g;
  for (size_t s = 0; s < q.levels(); ++s) g.levels.push_back(zero_level_grads(params.levels[s]));
  for (size_t i = 0; i < sections; ++i) {  // fixed reduction order
    NvccLevelGrads& lg = g.levels[i / kPlanesPerLevel];
    lg.attention.dwq += parts[i].g.attention.dwq;
    lg.attention.dwk += parts[i].g.attention.dwk;
    lg.attention.dwv += parts[i].g.attention.dwv;
    lg.fusion.accumulate(parts[i].g.fusion);
    lg.temporal.accumulate(parts[i].g.temporal);
    lg.spatial.accumulate(parts[i].g.spatial);
    lg.plane_spatial.accumulate(parts[i].g.plane_spatial);
    lg.n_fusion += parts[i].g.n_fusion;
    lg.n_temporal += parts[i].g.n_temporal;
    lg.n_spatial += parts[i].g.n_spatial;
    lg.n_plane_spatial += parts[i].g.n_plane_spatial;
    g.bits += parts[i].bits;
    g.symbols += parts[i].symbols;
  }
  return g;
}

}  // namespace gs4dcc
