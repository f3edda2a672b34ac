#include "gs4dcc/interchange.hpp"

#include <map>
#include <string>

namespace gs4dcc {

namespace {

void put_floats(ByteWriter& w, const std::vector<float>& v) {
  for (float f : v) w.f32(f);
}

std::vector<float> get_floats(ByteReader& r, size_t n) {
  require(n <= r.remaining() / 4, ErrorKind::kTruncated, r.context() + ": float array exceeds chunk");
  std::vector<float> v(n);
  for (float& f : v) f = r.f32();
  return v;
}

void chunk(ByteWriter& out, std::string_view tag, const ByteWriter& payload) {
  out.tag(tag);
  out.u32(static_cast<uint32_t>(payload.size()));
  out.bytes(payload.data());
  out.u32(crc32(payload.data()));
}

}  // namespace

void write_mlp(ByteWriter& w, const Mlp& mlp, bool half) {
  mlp.validate();
  w.u32(static_cast<uint32_t>(mlp.spec.layers()));
  for (size_t width : mlp.spec.widths) w.u32(static_cast<uint32_t>(width));
  for (Activation a : mlp.spec.activations) w.u8(static_cast<uint8_t>(a));
  for (size_t l = 0; l < mlp.spec.layers(); ++l) {
    for (double v : mlp.weights.w[l].data()) half ? w.f16(static_cast<float>(v)) : w.f32(static_cast<float>(v));
    for (double v : mlp.weights.b[l]) half ? w.f16(static_cast<float>(v)) : w.f32(static_cast<float>(v));
  }
}

Mlp read_mlp(ByteReader& r, bool half) {
  const uint32_t layers = r.u32();
  require(layers >= 1 && layers <= 64, ErrorKind::kFormat, r.context() + ": implausible MLP layer count");
  MlpSpec spec;
  for (uint32_t i = 0; i <= layers; ++i) {
    uint32_t width = r.u32();
    require(width >= 1 && width <= (1u << 20), ErrorKind::kFormat, r.context() + ": implausible MLP width");
    spec.widths.push_back(width);
  }
  for (uint32_t i = 0; i < layers; ++i) {
    uint8_t a = r.u8();
    require(a <= static_cast<uint8_t>(Activation::kExp), ErrorKind::kFormat, r.context() + ": unknown activation");
    spec.activations.push_back(static_cast<Activation>(a));
  }
  Mlp mlp = Mlp::zeros(spec);
  const size_t bytes_per = half ? 2 : 4;
  for (size_t l = 0; l < layers; ++l) {
    require((mlp.weights.w[l].size() + mlp.weights.b[l].size()) <= r.remaining() / bytes_per, ErrorKind::kTruncated,
            r.context() + ": MLP weights exceed payload");
    for (double& v : mlp.weights.w[l].data()) v = half ? r.f16() : r.f32();
    for (double& v : mlp.weights.b[l]) v = half ? r.f16() : r.f32();
  }
  return mlp;
}

void write_decoder(ByteWriter& w, const DeformationDecoder& d, bool half) {
  w.u8(d.trunk ? 1 : 0);
  if (d.trunk) write_mlp(w, *d.trunk, half);
  for (const Mlp& h : d.heads) write_mlp(w, h, half);
}

DeformationDecoder read_decoder(ByteReader& r, bool half) {
  DeformationDecoder d;
  if (r.u8()) d.trunk = read_mlp(r, half);
  for (Mlp& h : d.heads) h = read_mlp(r, half);
  return d;
}

Bytes write_interchange(const Scene& scene) {
  ValidationReport report = validate_scene(scene);
  require(report.ok(), ErrorKind::kInvalid, "refusing to write invalid scene:\n" + report.to_string());

  ByteWriter out;
  out.tag(std::string_view(kInterchangeMagic, 8));
  out.u16(kInterchangeVersion);

  const CanonicalGaussians& g = scene.gaussians;
  {
    ByteWriter p;
    p.u32(static_cast<uint32_t>(g.count));
    p.u32(static_cast<uint32_t>(g.sh_degree));
    put_floats(p, g.positions);
    put_floats(p, g.scales);
    put_floats(p, g.rotations);
    put_floats(p, g.opacities);
    put_floats(p, g.sh);
    chunk(out, "GAUS", p);
  }
  const HexplanePyramid& v = scene.voxels;
  for (size_t s = 0; s < v.levels.size(); ++s) {
    for (size_t pid = 0; pid < kPlanesPerLevel; ++pid) {
      const Plane& plane = v.levels[s].planes[pid];
      ByteWriter p;
      p.u32(static_cast<uint32_t>(s));
      p.u32(static_cast<uint32_t>(pid));
      p.u32(plane.channels);
      p.u32(plane.rows);
      p.u32(plane.cols);
      put_floats(p, plane.data);
      chunk(out, "PLNE", p);
    }
  }
  {
    ByteWriter p;
    write_decoder(p, scene.decoder, false);
    chunk(out, "MLPW", p);
  }
  {
    const SceneMetadata& m = scene.metadata;
    ByteWriter p;
    p.str(m.name);
    p.f32(m.time_begin);
    p.f32(m.time_end);
    for (float f : m.bounds_min) p.f32(f);
    for (float f : m.bounds_max) p.f32(f);
    p.u8(static_cast<uint8_t>(m.fusion));
    p.u32(v.channels);
    p.u32(v.frames);
    p.u32(static_cast<uint32_t>(v.levels.size()));
    for (const Level& l : v.levels)
      for (uint32_t r : l.resolution) p.u32(r);
    chunk(out, "META", p);
  }
  return out.take();
}

Scene read_interchange(std::span<const uint8_t> bytes) {
  ByteReader r(bytes, "interchange");
  if (bytes.size() < 8 || std::string(bytes.begin(), bytes.begin() + 8) != std::string(kInterchangeMagic, 8))
    fail(ErrorKind::kBadMagic, "not a GS4DXCHG file");
  r.bytes(8);
  const uint16_t version = r.u16();
  require(version == kInterchangeVersion, ErrorKind::kVersion,
          "interchange version " + std::to_string(version) + ", expected " + std::to_string(kInterchangeVersion));

  Scene scene;
  bool have_gaus = false, have_mlpw = false, have_meta = false;
  std::map<std::pair<uint32_t, uint32_t>, Plane> planes;
  while (!r.done()) {
    const std::string tag = r.tag();
    const uint32_t len = r.u32();
    if (len > r.remaining() || r.remaining() - len < 4)
      fail(ErrorKind::kTruncated, "chunk " + tag + " declares " + std::to_string(len) + " bytes, " +
                                      std::to_string(r.remaining()) + " remain");
    auto payload = r.bytes(len);
    const uint32_t crc = r.u32();
    if (crc != crc32(payload)) fail(ErrorKind::kChecksum, "chunk " + tag + " CRC mismatch");
    ByteReader p(payload, "chunk " + tag);

    if (tag == "GAUS") {
      CanonicalGaussians& g = scene.gaussians;
      g.count = p.u32();
      g.sh_degree = static_cast<int>(p.u32());
      require(g.sh_degree >= 0 && g.sh_degree <= 3, ErrorKind::kFormat, "GAUS: SH degree out of range");
      g.positions = get_floats(p, g.count * 3);
      g.scales = get_floats(p, g.count * 3);
      g.rotations = get_floats(p, g.count * 4);
      g.opacities = get_floats(p, g.count);
      g.sh = get_floats(p, g.count * g.sh_dim());
      have_gaus = true;
    } else if (tag == "PLNE") {
      const uint32_t level = p.u32(), pid = p.u32();
      Plane plane;
      plane.channels = p.u32();
      plane.rows = p.u32();
      plane.cols = p.u32();
      require(pid < kPlanesPerLevel, ErrorKind::kFormat, "PLNE: plane id out of range");
      plane.data = get_floats(p, size_t{plane.channels} * plane.rows * plane.cols);
      require(planes.emplace(std::make_pair(level, pid), std::move(plane)).second, ErrorKind::kFormat,
              "PLNE: duplicate plane");
    } else if (tag == "MLPW") {
      scene.decoder = read_decoder(p, false);
      have_mlpw = true;
    } else if (tag == "META") {
      SceneMetadata& m = scene.metadata;
      m.name = p.str();
      m.time_begin = p.f32();
      m.time_end = p.f32();
      for (float& f : m.bounds_min) f = p.f32();
      for (float& f : m.bounds_max) f = p.f32();
      const uint8_t fusion = p.u8();
      require(fusion == static_cast<uint8_t>(FusionRule::kProductConcat), ErrorKind::kFormat,
              "META: unknown fusion rule");
      m.fusion = FusionRule::kProductConcat;
      scene.voxels.channels = p.u32();
      scene.voxels.frames = p.u32();
      const uint32_t levels = p.u32();
      require(levels <= 64, ErrorKind::kFormat, "META: implausible level count");
      scene.voxels.levels.resize(levels);
      for (Level& l : scene.voxels.levels)
        for (uint32_t& res : l.resolution) res = p.u32();
      have_meta = true;
    } else {
      continue;  // unknown chunk
    }
    require(p.done(), ErrorKind::kFormat, "chunk " + tag + " has trailing bytes");
  }
  require(have_gaus && have_mlpw && have_meta, ErrorKind::kFormat, "missing GAUS, MLPW or META chunk");
  for (size_t s = 0; s < scene.voxels.levels.size(); ++s) {
    for (size_t pid = 0; pid < kPlanesPerLevel; ++pid) {
      auto it = planes.find({static_cast<uint32_t>(s), static_cast<uint32_t>(pid)});
      require(it != planes.end(), ErrorKind::kFormat,
              "missing PLNE for level " + std::to_string(s) + " plane " + plane_name(pid));
      scene.voxels.levels[s].planes[pid] = std::move(it->second);
      planes.erase(it);
    }
  }
  require(planes.empty(), ErrorKind::kFormat, "PLNE chunk for a level not declared in META");
  return scene;
}

}  // namespace gs4dcc
