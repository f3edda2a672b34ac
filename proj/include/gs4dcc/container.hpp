#pragma once

// "4DCC" container: a section table followed by 8-byte aligned payloads.
//
//   magic "4DCC" | u16 version | u16 flags | u32 section count
//   count × { u16 kind | u16 id | u32 offset | u32 length | u32 crc32 }
//   u32 crc32 of everything above
//   payloads (zero padded to 8-byte boundaries)

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "gs4dcc/bytes.hpp"

namespace gs4dcc {

inline constexpr char kContainerMagic[4] = {'4', 'D', 'C', 'C'};
inline constexpr uint16_t kContainerVersion = 1;
inline constexpr size_t kContainerAlign = 8;

enum class SectionKind : uint16_t {
  kHeader = 1,
  kCanon = 2,
  kIndices = 3,
  kCodebook = 4,
  kVoxels = 5,
  kDecoder = 6,
};
const char* section_kind_name(uint16_t kind);

struct Section {
  uint16_t kind = 0;
  uint16_t id = 0;   // VOX: level·6 + plane; 0 otherwise
  Bytes payload;
  friend bool operator==(const Section&, const Section&) = default;
};

struct SectionEntry {
  uint16_t kind = 0, id = 0;
  uint32_t offset = 0, length = 0, crc = 0;
};

struct Container {
  uint16_t flags = 0;
  std::vector<Section> sections;
  friend bool operator==(const Container&, const Container&) = default;
};

// Human-readable section label, e.g. "VOX[1,xt]".
std::string section_label(uint16_t kind, uint16_t id);

Bytes write_container(const Container& c);

struct ReadResult {
  Container container;           // known sections, file order
  std::vector<SectionEntry> table;
  std::vector<SectionEntry> skipped;  // unknown kinds
};
ReadResult read_container(std::span<const uint8_t> bytes);

struct SizeReport {
  struct Row {
    std::string label;
    uint16_t kind = 0, id = 0;
    size_t bytes = 0;
  };
  std::vector<Row> rows;  // one per section, file order
  size_t overhead = 0;    // magic, table and alignment padding
  size_t total = 0;       // equals the file length
  size_t bytes_of(uint16_t kind) const;
  std::string to_string() const;
};
SizeReport size_report(std::span<const uint8_t> bytes);

}  // namespace gs4dcc
