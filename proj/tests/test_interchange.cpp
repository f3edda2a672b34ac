#include "doctest.h"
#include "gs4dcc/error.hpp"
#include "gs4dcc/interchange.hpp"
#include "gs4dcc/synth.hpp"
#include "helpers.hpp"

using namespace gs4dcc;
using namespace gs4dcc::testing;

namespace {

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("no error raised");
  return ErrorKind::kIo;
}

// Offset of the n-th chunk header (tag) in a file.
size_t chunk_offset(const Bytes& b, size_t n) {
  size_t off = 10;
  for (size_t i = 0; i < n; ++i) {
    ByteReader r(std::span<const uint8_t>(b).subspan(off + 4, 4));
    off += 4 + 4 + r.u32() + 4;
  }
  return off;
}

}  // namespace

TEST_CASE("interchange: round trip is byte identical") {
  for (uint64_t seed : {1, 2}) {
    Scene s = synth_scene(small_spec(seed));
    Bytes a = write_interchange(s);
    Scene back = read_interchange(a);
    CHECK(back == s);
    CHECK(write_interchange(back) == a);
  }
  SynthSpec flat = small_spec(3);
  flat.decoder_hidden = 0;
  flat.sh_degree = 0;
  Scene s = synth_scene(flat);
  CHECK(read_interchange(write_interchange(s)) == s);
}

TEST_CASE("interchange: layout starts with magic, version and GAUS") {
  Bytes b = write_interchange(synth_scene(small_spec()));
  CHECK(std::string(b.begin(), b.begin() + 8) == "GS4DXCHG");
  CHECK(b[8] == 1);
  CHECK(b[9] == 0);
  CHECK(std::string(b.begin() + 10, b.begin() + 14) == "GAUS");
}

TEST_CASE("interchange: empty file is a bad magic") {
  CHECK(kind_of([] { read_interchange(Bytes{}); }) == ErrorKind::kBadMagic);
  CHECK(kind_of([] { read_interchange(Bytes{'G', 'S', '4', 'D'}); }) == ErrorKind::kBadMagic);
}

TEST_CASE("interchange: corrupted chunk length is a truncation") {
  Bytes b = write_interchange(synth_scene(small_spec()));
  const size_t off = chunk_offset(b, 1);
  b[off + 4 + 3] = 0x7F;
  CHECK(kind_of([&] { read_interchange(b); }) == ErrorKind::kTruncated);
  Bytes cut = write_interchange(synth_scene(small_spec()));
  cut.resize(cut.size() - 3);
  CHECK(kind_of([&] { read_interchange(cut); }) == ErrorKind::kTruncated);
}

TEST_CASE("interchange: flipped payload byte fails its chunk CRC") {
  Bytes b = write_interchange(synth_scene(small_spec()));
  b[chunk_offset(b, 2) + 8 + 20] ^= 0x01;
  try {
    read_interchange(b);
    FAIL("expected CRC error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kChecksum);
    CHECK(std::string(e.what()).find("PLNE") != std::string::npos);
  }
}

TEST_CASE("interchange: version and missing plane") {
  Bytes b = write_interchange(synth_scene(small_spec()));
  Bytes v = b;
  v[8] = 9;
  CHECK(kind_of([&] { read_interchange(v); }) == ErrorKind::kVersion);

  // drop the 4th PLNE chunk (chunk 0 is GAUS)
  const size_t a = chunk_offset(b, 4), e = chunk_offset(b, 5);
  Bytes missing(b.begin(), b.begin() + a);
  missing.insert(missing.end(), b.begin() + e, b.end());
  try {
    read_interchange(missing);
    FAIL("expected missing plane");
  } catch (const Error& err) {
    CHECK(err.kind() == ErrorKind::kFormat);
    CHECK(std::string(err.what()).find("missing PLNE for level 0 plane xy") != std::string::npos);
  }
}

TEST_CASE("interchange: invalid scenes are refused on write") {
  Scene s = synth_scene(small_spec());
  s.gaussians.rotations[0] = 3.0f;
  CHECK(kind_of([&] { write_interchange(s); }) == ErrorKind::kInvalid);
}

TEST_CASE("mlp serialization in half precision rounds weights") {
  Rng rng(61);
  Mlp m = Mlp::random(MlpSpec{{3, 5, 2}, {Activation::kRelu, Activation::kIdentity}}, rng);
  ByteWriter w;
  write_mlp(w, m, true);
  ByteReader r(w.data());
  Mlp back = read_mlp(r, true);
  CHECK(r.done());
  for (size_t l = 0; l < 2; ++l)
    for (size_t i = 0; i < m.weights.w[l].size(); ++i)
      CHECK(back.weights.w[l].data()[i] == double(round_to_half(float(m.weights.w[l].data()[i]))));
}
