#pragma once

// "GS4DXCHG" interchange format: the uncompressed scene as little-endian f32
// chunks, each with its own CRC32. Layout in docs/formats.md.

#include <span>

#include "gs4dcc/bytes.hpp"
#include "gs4dcc/scene.hpp"

namespace gs4dcc {

inline constexpr char kInterchangeMagic[9] = "GS4DXCHG";
inline constexpr uint16_t kInterchangeVersion = 1;

// Throws kInvalid when the scene fails validation.
Bytes write_interchange(const Scene& scene);
Scene read_interchange(std::span<const uint8_t> bytes);

// MLP serialization shared with the compressed container; weights use
// `half` 16-bit floats when set, f32 otherwise.
void write_mlp(ByteWriter& w, const Mlp& mlp, bool half);
Mlp read_mlp(ByteReader& r, bool half);
void write_decoder(ByteWriter& w, const DeformationDecoder& d, bool half);
DeformationDecoder read_decoder(ByteReader& r, bool half);

}  // namespace gs4dcc
