#include "gs4dcc/codec.hpp"

#include <algorithm>
#include <map>
#include <cmath>
#include <limits>
#include <sstream>

#include "gs4dcc/interchange.hpp"
#include "gs4dcc/vq.hpp"

namespace gs4dcc {

namespace {

constexpr uint8_t kCodingPlanLevelMajor = 0;
constexpr size_t kCanonBytesPerGaussian = 3 * 2 + 3 + 4 + 1;

std::vector<double> widen(std::span<const float> v) { return {v.begin(), v.end()}; }

DeformationDecoder half_decoder(const DeformationDecoder& d) {
  ByteWriter w;
  write_decoder(w, d, true);
  ByteReader r(w.data(), "decoder");
  return read_decoder(r, true);
}

void write_quant(ByteWriter& w, const MinMaxQuant& q) {
  w.u8(static_cast<uint8_t>(q.bits));
  w.u32(static_cast<uint32_t>(q.columns()));
  for (size_t c = 0; c < q.columns(); ++c) {
    w.f64(q.mins[c]);
    w.f64(q.maxs[c]);
  }
}

MinMaxQuant read_quant(ByteReader& r, size_t expect_cols) {
  MinMaxQuant q;
  q.bits = r.u8();
  require(q.bits >= 1 && q.bits <= 16, ErrorKind::kFormat, "quantizer bit depth out of range");
  const uint32_t cols = r.u32();
  require(cols == expect_cols, ErrorKind::kFormat,
          "quantizer has " + std::to_string(cols) + " columns, expected " + std::to_string(expect_cols));
  for (size_t c = 0; c < cols; ++c) {
    q.mins.push_back(r.f64());
    q.maxs.push_back(r.f64());
    require(q.mins.back() <= q.maxs.back(), ErrorKind::kFormat, "quantizer min > max");
  }
  return q;
}

Bytes header_bytes(const QuantizedScene& q, const NvccParams& nvcc, const VqccModel& vqcc) {
  ByteWriter w;
  const SceneMetadata& m = q.metadata;
  w.str(m.name);
  w.f32(m.time_begin);
  w.f32(m.time_end);
  for (float v : m.bounds_min) w.f32(v);
  for (float v : m.bounds_max) w.f32(v);
  w.u8(static_cast<uint8_t>(m.fusion));
  w.u32(static_cast<uint32_t>(q.count()));
  w.u8(static_cast<uint8_t>(q.sh_degree));
  write_quant(w, q.positions.quant);
  write_quant(w, q.scales.quant);
  write_quant(w, q.rotations.quant);
  write_quant(w, q.opacities.quant);
  w.u32(static_cast<uint32_t>(q.codebook.rows));
  w.u32(static_cast<uint32_t>(q.codebook.cols));
  write_quant(w, q.codebook.quant);
  w.u32(q.voxels.channels);
  w.u32(q.voxels.frames);
  w.u32(static_cast<uint32_t>(q.voxels.levels()));
  for (const auto& r : q.voxels.resolutions)
    for (uint32_t v : r) w.u32(v);
  w.f64(q.voxel_gain);
  w.f64(kSigmaMin);
  w.u8(kCodingPlanLevelMajor);
  w.u8(static_cast<uint8_t>(kDefaultCdfPrecision));
  write_nvcc_params(w, nvcc);
  write_vqcc_params(w, vqcc.params);
  return w.take();
}

Bytes canon_bytes(const QuantizedScene& q) {
  ByteWriter w;
  for (size_t i = 0; i < q.count(); ++i) {
    for (size_t a = 0; a < 3; ++a) w.u16(static_cast<uint16_t>(q.positions.symbols[i * 3 + a]));
    for (size_t a = 0; a < 3; ++a) w.u8(static_cast<uint8_t>(q.scales.symbols[i * 3 + a]));
    for (size_t a = 0; a < 4; ++a) w.u8(static_cast<uint8_t>(q.rotations.symbols[i * 4 + a]));
    w.u8(static_cast<uint8_t>(q.opacities.symbols[i]));
  }
  return w.take();
}

Bytes codebook_bytes(const VqccStreams& s) {
  ByteWriter w;
  w.u32(static_cast<uint32_t>(s.z.size()));
  w.bytes(s.z);
  w.u32(crc32(s.z));
  w.u32(static_cast<uint32_t>(s.y.size()));
  w.bytes(s.y);
  w.u32(crc32(s.y));
  return w.take();
}

Bytes voxel_bytes(const NvccSection& s) {
  ByteWriter w;
  w.u32(s.symbol_count);
  w.u32(s.symbol_crc);
  w.bytes(s.payload);
  return w.take();
}

Bytes decoder_bytes(const DeformationDecoder& d) {
  ByteWriter w;
  write_decoder(w, d, true);
  return w.take();
}

QuantizedPyramid voxel_geometry(uint32_t channels, uint32_t frames,
                                const std::vector<std::array<uint32_t, 3>>& resolutions) {
  QuantizedPyramid g;
  g.channels = channels;
  g.frames = frames;
  g.resolutions = resolutions;
  g.planes.resize(resolutions.size());
  for (size_t s = 0; s < resolutions.size(); ++s)
    for (size_t p = 0; p < kPlanesPerLevel; ++p) {
      const auto shape = plane_shape(resolutions[s], frames, p);
      g.planes[s][p] = SymbolPlane{shape[0], shape[1],
                                   std::vector<int32_t>(size_t{channels} * shape[0] * shape[1], 0), {}};
    }
  return g;
}

Container assemble(const QuantizedScene& q, const NvccParams& nvcc, const VqccModel& vqcc, const VqccStreams& cb,
                   const std::vector<NvccSection>& vox) {
  Container c;
  auto add = [&](SectionKind kind, uint16_t id, Bytes b) {
    c.sections.push_back(Section{static_cast<uint16_t>(kind), id, std::move(b)});
  };
  add(SectionKind::kHeader, 0, header_bytes(q, nvcc, vqcc));
  add(SectionKind::kCanon, 0, canon_bytes(q));
  add(SectionKind::kIndices, 0, rle_encode(q.indices));
  add(SectionKind::kCodebook, 0, codebook_bytes(cb));
  for (const NvccSection& s : vox)
    add(SectionKind::kVoxels, static_cast<uint16_t>(section_index(s.first.level, s.first.plane)), voxel_bytes(s));
  add(SectionKind::kDecoder, 0, decoder_bytes(q.decoder));
  return c;
}

}  // namespace

QuantizedScene quantize_scene(const Scene& scene, const TrainConfig& cfg, size_t* codebook_size) {
  const ValidationReport report = validate_scene(scene);
  require(report.ok(), ErrorKind::kInvalid, "invalid scene:\n" + report.to_string());
  cfg.validate();
  const CanonicalGaussians& g = scene.gaussians;
  const size_t n = g.count, d = g.sh_dim();

  QuantizedScene q;
  q.metadata = scene.metadata;
  q.sh_degree = g.sh_degree;
  q.positions = quantize_minmax(widen(g.positions), n, 3, kPositionBits);
  q.scales = quantize_minmax(widen(g.scales), n, 3, kAttributeBits);
  q.rotations = quantize_minmax(widen(g.rotations), n, 4, kAttributeBits);
  q.opacities = quantize_minmax(widen(g.opacities), n, 1, kAttributeBits);

  const size_t k = std::min(cfg.codebook_size, n);
  if (codebook_size) *codebook_size = k;
  if (k > 0) {
    Matrix sh(n, d, widen(g.sh));
    KMeansResult km = kmeans_fit(sh, k, cfg.seed);
    q.codebook = quantize_minmax(km.centroids.data(), k, d, kAttributeBits);
    q.indices = std::move(km.indices);
  } else {
    q.codebook = quantize_minmax(std::vector<double>{}, 0, d, kAttributeBits);
  }
  q.voxel_gain = voxel_gain(cfg.lambda_e);
  q.voxels = quantize_voxels(scene.voxels, q.voxel_gain);
  q.decoder = half_decoder(scene.decoder);
  return q;
}

Bytes encode_quantized(const QuantizedScene& q, const NvccParams& nvcc, const VqccModel& vqcc) {
  const auto zbar = vqcc_latent_symbols(vqcc.z);
  const VqccStreams cb = vqcc_encode(q.codebook.symbols, zbar, q.codebook.rows, vqcc.params);
  const auto vox = nvcc_encode(q.voxels, nvcc);
  return write_container(assemble(q, nvcc, vqcc, cb, vox));
}

EncodeResult encode_scene(const Scene& scene, const TrainConfig& cfg) {
  EncodeResult res;
  res.quantized = quantize_scene(scene, cfg, &res.codebook_size);
  const QuantizedScene& q = res.quantized;
  res.training =
      train_entropy_models(q.voxels, q.codebook.symbols, q.codebook.rows, static_cast<uint32_t>(q.codebook.cols), cfg);
  res.container = encode_quantized(q, res.training.nvcc, res.training.vqcc);
  res.estimate = estimate_total_rate(q, res.training.nvcc, res.training.vqcc);
  res.sizes = size_report(res.container);
  return res;
}

QuantizedScene decode_container(std::span<const uint8_t> bytes) {
  ReadResult rr = read_container(bytes);
  const Section* header = nullptr;
  const Section* canon = nullptr;
  const Section* idx = nullptr;
  const Section* cbk = nullptr;
  const Section* mlpw = nullptr;
  std::map<uint16_t, const Section*> vox;
  for (const Section& s : rr.container.sections) {
    auto once = [&](const Section*& slot) {
      require(slot == nullptr, ErrorKind::kFormat, std::string("duplicate ") + section_kind_name(s.kind) + " section");
      slot = &s;
    };
    switch (static_cast<SectionKind>(s.kind)) {
      case SectionKind::kHeader: once(header); break;
      case SectionKind::kCanon: once(canon); break;
      case SectionKind::kIndices: once(idx); break;
      case SectionKind::kCodebook: once(cbk); break;
      case SectionKind::kDecoder: once(mlpw); break;
      case SectionKind::kVoxels:
        require(!vox.count(s.id), ErrorKind::kFormat, "duplicate section " + section_label(s.kind, s.id));
        vox[s.id] = &s;
        break;
    }
  }
  require(header && canon && idx && cbk && mlpw, ErrorKind::kFormat, "container is missing a required section");

  QuantizedScene q;
  ByteReader r(header->payload, "HEADER");
  SceneMetadata& m = q.metadata;
  m.name = r.str();
  m.time_begin = r.f32();
  m.time_end = r.f32();
  for (float& v : m.bounds_min) v = r.f32();
  for (float& v : m.bounds_max) v = r.f32();
  const uint8_t fusion = r.u8();
  require(fusion == static_cast<uint8_t>(FusionRule::kProductConcat), ErrorKind::kFormat, "unknown fusion rule");
  m.fusion = static_cast<FusionRule>(fusion);
  const size_t n = r.u32();
  q.sh_degree = r.u8();
  require(q.sh_degree <= 3, ErrorKind::kFormat, "SH degree out of range");
  auto tensor = [&](size_t rows, size_t cols) {
    QuantizedTensor t;
    t.rows = rows;
    t.cols = cols;
    t.quant = read_quant(r, cols);
    return t;
  };
  q.positions = tensor(n, 3);
  q.scales = tensor(n, 3);
  q.rotations = tensor(n, 4);
  q.opacities = tensor(n, 1);
  const size_t k = r.u32();
  const size_t d = r.u32();
  require(d == sh_dim_for_degree(q.sh_degree), ErrorKind::kFormat, "codebook width does not match SH degree");
  require(k <= n, ErrorKind::kFormat, "codebook larger than the Gaussian count");
  q.codebook = tensor(k, d);
  const uint32_t channels = r.u32();
  const uint32_t frames = r.u32();
  const uint32_t levels = r.u32();
  require(levels <= 16 && channels <= 4096, ErrorKind::kFormat, "implausible voxel geometry");
  std::vector<std::array<uint32_t, 3>> res(levels);
  for (auto& rr3 : res)
    for (uint32_t& v : rr3) v = r.u32();
  q.voxel_gain = r.f64();
  require(q.voxel_gain > 0 && std::isfinite(q.voxel_gain), ErrorKind::kFormat, "bad voxel gain");
  require(r.f64() == kSigmaMin, ErrorKind::kFormat, "stream was coded with a different sigma floor");
  require(r.u8() == kCodingPlanLevelMajor, ErrorKind::kFormat, "unknown coding plan");
  require(r.u8() == kDefaultCdfPrecision, ErrorKind::kFormat, "unsupported CDF precision");
  NvccParams nvcc = read_nvcc_params(r);
  VqccParams vqp = read_vqcc_params(r);
  require(r.done(), ErrorKind::kFormat, "trailing bytes in HEADER");
  require(vqp.dim == d, ErrorKind::kFormat, "VQCC width does not match the codebook");

  // Canonical attributes.
  require(canon->payload.size() == n * kCanonBytesPerGaussian, ErrorKind::kFormat,
          "CANON holds " + std::to_string(canon->payload.size()) + " bytes, expected " +
              std::to_string(n * kCanonBytesPerGaussian));
  ByteReader cr(canon->payload, "CANON");
  q.positions.symbols.resize(n * 3);
  q.scales.symbols.resize(n * 3);
  q.rotations.symbols.resize(n * 4);
  q.opacities.symbols.resize(n);
  for (size_t i = 0; i < n; ++i) {
    for (size_t a = 0; a < 3; ++a) q.positions.symbols[i * 3 + a] = cr.u16();
    for (size_t a = 0; a < 3; ++a) q.scales.symbols[i * 3 + a] = cr.u8();
    for (size_t a = 0; a < 4; ++a) q.rotations.symbols[i * 4 + a] = cr.u8();
    q.opacities.symbols[i] = cr.u8();
  }
  for (const QuantizedTensor* t : {&q.positions, &q.scales, &q.rotations, &q.opacities})
    for (uint32_t v : t->symbols)
      require(v <= t->quant.levels(), ErrorKind::kFormat, "CANON symbol exceeds its bit depth");

  q.indices = rle_decode(idx->payload, n);
  for (uint32_t v : q.indices) require(v < k, ErrorKind::kFormat, "index exceeds the codebook size");

  // Codebook streams.
  ByteReader br(cbk->payload, "CBK");
  auto stream = [&](const char* what) {
    const uint32_t len = br.u32();
    auto b = br.bytes(len);
    require(crc32(b) == br.u32(), ErrorKind::kChecksum, std::string("CBK ") + what + " stream fails its CRC32");
    return b;
  };
  auto zb = stream("z");
  auto yb = stream("y");
  require(br.done(), ErrorKind::kFormat, "trailing bytes in CBK");
  q.codebook.symbols = vqcc_decode(zb, yb, k, vqp);
  for (uint32_t v : q.codebook.symbols)
    require(v <= q.codebook.quant.levels(), ErrorKind::kFormat, "codebook symbol exceeds its bit depth");

  // Voxels.
  const QuantizedPyramid geometry = voxel_geometry(channels, frames, res);
  require(vox.size() == levels * kPlanesPerLevel, ErrorKind::kFormat,
          "container holds " + std::to_string(vox.size()) + " voxel sections, geometry needs " +
              std::to_string(levels * kPlanesPerLevel));
  std::vector<NvccSection> sections;
  for (uint32_t s = 0; s < levels; ++s)
    for (uint32_t p = 0; p < kPlanesPerLevel; ++p) {
      const uint16_t id = static_cast<uint16_t>(section_index(s, p));
      auto it = vox.find(id);
      require(it != vox.end(), ErrorKind::kFormat, "missing section " + section_label(5, id));
      ByteReader vr(it->second->payload, section_label(5, id));
      NvccSection sec;
      sec.first = RowKey{s, p, 0};
      sec.symbol_count = vr.u32();
      sec.symbol_crc = vr.u32();
      auto rest = vr.bytes(vr.remaining());
      sec.payload.assign(rest.begin(), rest.end());
      sections.push_back(std::move(sec));
    }
  q.voxels = nvcc_decode(sections, nvcc, geometry);

  ByteReader mr(mlpw->payload, "MLPW");
  q.decoder = read_decoder(mr, true);
  require(mr.done(), ErrorKind::kFormat, "trailing bytes in MLPW");
  return q;
}

Scene reconstruct(const QuantizedScene& q) {
  Scene s;
  s.metadata = q.metadata;
  const size_t n = q.count();
  CanonicalGaussians& g = s.gaussians;
  g = CanonicalGaussians::zeros(n, q.sh_degree);
  auto narrow = [](const std::vector<double>& v, std::vector<float>& out) {
    out.assign(v.size(), 0.0f);
    for (size_t i = 0; i < v.size(); ++i) out[i] = static_cast<float>(v[i]);
  };
  narrow(dequantize_minmax(q.positions), g.positions);
  narrow(dequantize_minmax(q.scales), g.scales);
  narrow(dequantize_minmax(q.opacities), g.opacities);
  const auto rot = dequantize_minmax(q.rotations);
  for (size_t i = 0; i < n; ++i) {
    double norm = 0.0;
    for (size_t a = 0; a < 4; ++a) norm += rot[i * 4 + a] * rot[i * 4 + a];
    norm = std::sqrt(norm);
    for (size_t a = 0; a < 4; ++a)
      g.rotations[i * 4 + a] = static_cast<float>(norm > 0 ? rot[i * 4 + a] / norm : (a == 0 ? 1.0 : 0.0));
  }
  const size_t d = g.sh_dim();
  const auto cb = dequantize_minmax(q.codebook);
  for (size_t i = 0; i < n; ++i)
    for (size_t j = 0; j < d; ++j) g.sh[i * d + j] = static_cast<float>(cb[q.indices[i] * d + j]);
  s.voxels = dequantize_voxels(q.voxels, q.voxel_gain);
  s.decoder = q.decoder;
  return s;
}

RateBreakdown estimate_total_rate(const QuantizedScene& q, const NvccParams& nvcc, const VqccModel& vqcc) {
  RateBreakdown b;
  const auto zbar = vqcc_latent_symbols(vqcc.z);
  const VqccRate vr = vqcc_rate(q.codebook.symbols, zbar, q.codebook.rows, vqcc.params);
  const NvccRate nr = nvcc_rate(q.voxels, nvcc);
  const Bytes canon = canon_bytes(q);
  const Bytes idx = rle_encode(q.indices);
  b.canon_raw = 8.0 * canon.size();
  b.indices = 8.0 * idx.size();
  b.codebook = vr.y_bits;
  b.hyper = vr.z_bits;
  b.voxels = nr.total_bits;

  // Framing: lay out a container whose coded payloads have the estimated
  // lengths and charge everything that is not a coded stream to the header.
  auto bytes_for = [](double bits) { return static_cast<size_t>(std::ceil(bits / 8.0)); };
  VqccStreams cb{Bytes(bytes_for(vr.z_bits)), Bytes(bytes_for(vr.y_bits))};
  std::vector<NvccSection> vox;
  double stream_bytes = static_cast<double>(cb.z.size() + cb.y.size());
  for (size_t s = 0; s < q.voxels.levels(); ++s)
    for (size_t p = 0; p < kPlanesPerLevel; ++p) {
      NvccSection sec;
      sec.first = RowKey{static_cast<uint32_t>(s), static_cast<uint32_t>(p), 0};
      sec.payload.resize(bytes_for(nr.section_bits[section_index(s, p)]));
      stream_bytes += static_cast<double>(sec.payload.size());
      vox.push_back(std::move(sec));
    }
  const size_t layout = write_container(assemble(q, nvcc, vqcc, cb, vox)).size();
  b.header = 8.0 * (static_cast<double>(layout) - stream_bytes - canon.size() - idx.size());
  return b;
}

namespace {

struct Acc {
  double sq = 0.0;
  size_t n = 0;
  double lo = std::numeric_limits<double>::infinity(), hi = -std::numeric_limits<double>::infinity();
  void add(double ref, double dec) {
    sq += (ref - dec) * (ref - dec);
    ++n;
    lo = std::min(lo, ref);
    hi = std::max(hi, ref);
  }
  double peak() const { return hi > lo ? hi - lo : 1.0; }
  double nmse() const { return n ? sq / n / (peak() * peak()) : 0.0; }
  double psnr() const {
    const double e = nmse();
    return e > 0 ? -10.0 * std::log10(e) : std::numeric_limits<double>::infinity();
  }
};

Acc compare(std::span<const float> a, std::span<const float> b) {
  require(a.size() == b.size(), ErrorKind::kShape, "fidelity: attribute sizes differ");
  Acc acc;
  for (size_t i = 0; i < a.size(); ++i) acc.add(a[i], b[i]);
  return acc;
}

}  // namespace

Fidelity parameter_psnr(const Scene& ref, const Scene& dec) {
  const CanonicalGaussians &a = ref.gaussians, &b = dec.gaussians;
  Acc pos = compare(a.positions, b.positions), sc = compare(a.scales, b.scales),
      rot = compare(a.rotations, b.rotations), op = compare(a.opacities, b.opacities), sh = compare(a.sh, b.sh);
  Acc vox;
  require(ref.voxels.levels.size() == dec.voxels.levels.size(), ErrorKind::kShape, "fidelity: level counts differ");
  for (size_t s = 0; s < ref.voxels.levels.size(); ++s)
    for (size_t p = 0; p < kPlanesPerLevel; ++p) {
      const auto& x = ref.voxels.levels[s].planes[p].data;
      const auto& y = dec.voxels.levels[s].planes[p].data;
      require(x.size() == y.size(), ErrorKind::kShape, "fidelity: plane sizes differ");
      for (size_t i = 0; i < x.size(); ++i) vox.add(x[i], y[i]);
    }
  Fidelity f;
  f.positions = pos.psnr();
  f.scales = sc.psnr();
  f.rotations = rot.psnr();
  f.opacities = op.psnr();
  f.sh = sh.psnr();
  f.voxels = vox.psnr();
  double sum = 0.0;
  int count = 0;
  for (const Acc* acc : {&pos, &sc, &rot, &op, &sh, &vox})
    if (acc->n) sum += acc->nmse(), ++count;
  f.overall = count && sum > 0 ? -10.0 * std::log10(sum / count) : std::numeric_limits<double>::infinity();
  return f;
}

std::string Fidelity::to_string() const {
  std::ostringstream os;
  os.precision(4);
  os << std::fixed;
  os << "psnr_positions_db\t" << positions << "\n"
     << "psnr_scales_db\t" << scales << "\n"
     << "psnr_rotations_db\t" << rotations << "\n"
     << "psnr_opacities_db\t" << opacities << "\n"
     << "psnr_sh_db\t" << sh << "\n"
     << "psnr_voxels_db\t" << voxels << "\n"
     << "psnr_overall_db\t" << overall << "\n";
  return os.str();
}

}  // namespace gs4dcc
