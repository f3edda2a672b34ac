#include "gs4dcc/container.hpp"

#include <algorithm>
#include <cstring>
#include <sstream>

#include "gs4dcc/scene.hpp"

namespace gs4dcc {

const char* section_kind_name(uint16_t kind) {
  switch (static_cast<SectionKind>(kind)) {
    case SectionKind::kHeader: return "HEADER";
    case SectionKind::kCanon: return "CANON";
    case SectionKind::kIndices: return "IDX";
    case SectionKind::kCodebook: return "CBK";
    case SectionKind::kVoxels: return "VOX";
    case SectionKind::kDecoder: return "MLPW";
  }
  return "UNKNOWN";
}

std::string section_label(uint16_t kind, uint16_t id) {
  std::string s = section_kind_name(kind);
  if (kind == static_cast<uint16_t>(SectionKind::kVoxels))
    s += "[" + std::to_string(id / kPlanesPerLevel) + "," + plane_name(id % kPlanesPerLevel) + "]";
  else if (s == "UNKNOWN")
    s += "(" + std::to_string(kind) + ")";
  return s;
}

namespace {
constexpr size_t kPrefixBytes = 4 + 2 + 2 + 4;
constexpr size_t kEntryBytes = 16;

size_t align_up(size_t v) { return (v + kContainerAlign - 1) / kContainerAlign * kContainerAlign; }
}  // namespace

Bytes write_container(const Container& c) {
  ByteWriter w;
  w.bytes({reinterpret_cast<const uint8_t*>(kContainerMagic), 4});
  w.u16(kContainerVersion);
  w.u16(c.flags);
  w.u32(static_cast<uint32_t>(c.sections.size()));
  size_t offset = align_up(kPrefixBytes + kEntryBytes * c.sections.size() + 4);
  for (const Section& s : c.sections) {
    require(offset + s.payload.size() <= UINT32_MAX, ErrorKind::kInvalid, "container larger than 4 GiB");
    w.u16(s.kind);
    w.u16(s.id);
    w.u32(static_cast<uint32_t>(offset));
    w.u32(static_cast<uint32_t>(s.payload.size()));
    w.u32(crc32(s.payload));
    offset = align_up(offset + s.payload.size());
  }
  w.u32(crc32(w.data()));
  for (const Section& s : c.sections) {
    w.pad_to(kContainerAlign);
    w.bytes(s.payload);
  }
  return w.take();
}

ReadResult read_container(std::span<const uint8_t> bytes) {
  ByteReader r(bytes, "container");
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kContainerMagic, 4) != 0)
    fail(ErrorKind::kBadMagic, "not a 4DCC container (bad magic)");
  r.bytes(4);
  const uint16_t version = r.u16();
  require(version == kContainerVersion, ErrorKind::kVersion,
          "container version " + std::to_string(version) + " not supported (expected " +
              std::to_string(kContainerVersion) + ")");
  ReadResult out;
  out.container.flags = r.u16();
  const uint32_t count = r.u32();
  require(count <= (bytes.size() - kPrefixBytes) / kEntryBytes, ErrorKind::kTruncated,
          "section table of " + std::to_string(count) + " entries exceeds the file");
  for (uint32_t i = 0; i < count; ++i) {
    SectionEntry e;
    e.kind = r.u16();
    e.id = r.u16();
    e.offset = r.u32();
    e.length = r.u32();
    e.crc = r.u32();
    out.table.push_back(e);
  }
  const size_t table_end = r.pos();
  const uint32_t table_crc = r.u32();
  require(crc32(bytes.first(table_end)) == table_crc, ErrorKind::kChecksum, "section table checksum mismatch");

  // Bounds and overlap.
  std::vector<SectionEntry> sorted = out.table;
  std::sort(sorted.begin(), sorted.end(), [](auto& a, auto& b) { return a.offset < b.offset; });
  size_t prev_end = r.pos();
  for (const SectionEntry& e : sorted) {
    const std::string label = section_label(e.kind, e.id);
    require(size_t{e.offset} + e.length <= bytes.size(), ErrorKind::kTruncated,
            "section " + label + " extends past the end of the file");
    require(e.offset >= prev_end, ErrorKind::kFormat, "section " + label + " overlaps its predecessor");
    prev_end = size_t{e.offset} + e.length;
  }

  for (const SectionEntry& e : out.table) {
    const std::string label = section_label(e.kind, e.id);
    auto payload = bytes.subspan(e.offset, e.length);
    require(crc32(payload) == e.crc, ErrorKind::kChecksum, "section " + label + " fails its CRC32");
    if (e.kind < static_cast<uint16_t>(SectionKind::kHeader) || e.kind > static_cast<uint16_t>(SectionKind::kDecoder)) {
      out.skipped.push_back(e);
      continue;
    }
    out.container.sections.push_back(Section{e.kind, e.id, Bytes(payload.begin(), payload.end())});
  }
  return out;
}

size_t SizeReport::bytes_of(uint16_t kind) const {
  size_t n = 0;
  for (const Row& r : rows)
    if (r.kind == kind) n += r.bytes;
  return n;
}

std::string SizeReport::to_string() const {
  std::ostringstream os;
  for (const Row& r : rows) os << r.label << "\t" << r.bytes << "\n";
  os << "overhead\t" << overhead << "\n";
  os << "total\t" << total << "\n";
  return os.str();
}

SizeReport size_report(std::span<const uint8_t> bytes) {
  ReadResult rr = read_container(bytes);
  SizeReport rep;
  size_t payload = 0;
  for (const SectionEntry& e : rr.table) {
    rep.rows.push_back({section_label(e.kind, e.id), e.kind, e.id, e.length});
    payload += e.length;
  }
  rep.total = bytes.size();
  rep.overhead = rep.total - payload;
  return rep;
}

}  // namespace gs4dcc
