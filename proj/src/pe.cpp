#include "byteprobe/pe.hpp"

#include <algorithm>

#include "byteprobe/errors.hpp"

namespace byteprobe {

namespace {

std::uint16_t rd16(const std::vector<std::uint8_t>& b, std::size_t off) {
  return static_cast<std::uint16_t>(b[off] | (b[off + 1] << 8));
}

std::uint32_t rd32(const std::vector<std::uint8_t>& b, std::size_t off) {
  return static_cast<std::uint32_t>(b[off]) | (static_cast<std::uint32_t>(b[off + 1]) << 8) |
         (static_cast<std::uint32_t>(b[off + 2]) << 16) |
         (static_cast<std::uint32_t>(b[off + 3]) << 24);
}

std::uint64_t rd64(const std::vector<std::uint8_t>& b, std::size_t off) {
  return static_cast<std::uint64_t>(rd32(b, off)) |
         (static_cast<std::uint64_t>(rd32(b, off + 4)) << 32);
}

bool fits(const std::vector<std::uint8_t>& b, std::size_t off, std::size_t n) {
  return off <= b.size() && n <= b.size() - off;
}

// Reads a NUL-terminated ASCII string, capped; returns nullopt when the
// terminator is missing inside the cap or the offset is out of range.
std::optional<std::string> read_asciiz(const std::vector<std::uint8_t>& b, std::size_t off,
                                       std::size_t cap = 512) {
  if (off >= b.size()) return std::nullopt;
  std::string s;
  for (std::size_t i = off; i < b.size() && s.size() < cap; ++i) {
    if (b[i] == 0) return s;
    s.push_back(static_cast<char>(b[i]));
  }
  return std::nullopt;
}

constexpr std::uint32_t kDansMarker = 0x536e6144;  // "DanS"
constexpr std::uint32_t kRichMarker = 0x68636952;  // "Rich"

}  // namespace

std::optional<RichHeader> decode_rich_header(const std::vector<std::uint8_t>& bytes,
                                             std::vector<std::string>* warnings) {
  if (bytes.size() < 0x40 + 8) return std::nullopt;
  const std::uint32_t e_lfanew = rd32(bytes, 0x3c);
  const std::size_t scan_end = std::min<std::size_t>(e_lfanew, bytes.size());
  if (scan_end < 0x40 + 8) return std::nullopt;

  // The marker is dword-aligned; take the last occurrence before the PE
  // headers so a stray "Rich" inside the stub message cannot shadow it.
  std::size_t marker = 0;
  bool found = false;
  for (std::size_t off = 0x40; off + 8 <= scan_end; off += 4) {
    if (rd32(bytes, off) == kRichMarker) {
      marker = off;
      found = true;
    }
  }
  if (!found) return std::nullopt;

  const std::uint32_t key = rd32(bytes, marker + 4);
  std::size_t start = 0;
  bool have_start = false;
  for (std::size_t off = marker; off >= 0x40 + 4;) {
    off -= 4;
    if ((rd32(bytes, off) ^ key) == kDansMarker) {
      start = off;
      have_start = true;
      break;
    }
  }
  if (!have_start || marker - start < 16 || (marker - start - 16) % 8 != 0) {
    if (warnings) warnings->push_back("rich header: marker without recoverable DanS block");
    return std::nullopt;
  }

  RichHeader rich;
  rich.xor_key = key;
  rich.start = start;
  rich.end = marker + 8;
  for (std::size_t off = start + 16; off + 8 <= marker; off += 8) {
    const std::uint32_t comp = rd32(bytes, off) ^ key;
    const std::uint32_t count = rd32(bytes, off + 4) ^ key;
    rich.entries.push_back({static_cast<std::uint16_t>(comp >> 16),
                            static_cast<std::uint16_t>(comp & 0xffff), count});
  }
  return rich;
}

std::optional<std::size_t> rva_to_offset(const PeImage& pe, std::uint32_t rva) {
  for (const SectionInfo& s : pe.sections) {
    const std::uint32_t extent = std::max(s.virtual_size, s.raw_size);
    if (rva >= s.virtual_address && rva < s.virtual_address + extent) {
      const std::uint32_t delta = rva - s.virtual_address;
      if (delta >= s.raw_size) return std::nullopt;  // virtual-only tail
      const std::size_t off = static_cast<std::size_t>(s.raw_offset) + delta;
      return off < pe.file_size ? std::optional<std::size_t>(off) : std::nullopt;
    }
  }
  // Below the first section the image is mapped 1:1 from the file.
  if (rva < pe.size_of_headers && rva < pe.file_size) return rva;
  return std::nullopt;
}

std::uint32_t compute_checksum(const std::vector<std::uint8_t>& bytes,
                               std::size_t checksum_field_offset) {
  if (!fits(bytes, checksum_field_offset, 4)) {
    throw InputError("compute_checksum: checksum field outside file");
  }
  auto byte_at = [&](std::size_t i) -> std::uint32_t {
    if (i >= checksum_field_offset && i < checksum_field_offset + 4) return 0;
    return bytes[i];
  };
  std::uint32_t sum = 0;
  const std::size_t even = bytes.size() & ~std::size_t{1};
  for (std::size_t i = 0; i < even; i += 2) {
    sum += byte_at(i) | (byte_at(i + 1) << 8);
    sum = (sum & 0xffff) + (sum >> 16);
  }
  if (bytes.size() & 1) {
    sum += byte_at(bytes.size() - 1);
    sum = (sum & 0xffff) + (sum >> 16);
  }
  sum = (sum & 0xffff) + (sum >> 16);
  return sum + static_cast<std::uint32_t>(bytes.size());
}

namespace {

void parse_imports(const std::vector<std::uint8_t>& bytes, PeImage& pe) {
  const DataDirectory dir = pe.directories[kDirImport];
  if (dir.rva == 0 || dir.size == 0) return;
  const auto table_off = rva_to_offset(pe, dir.rva);
  if (!table_off) {
    pe.warnings.push_back("imports: directory RVA maps to no file data");
    return;
  }

  const std::size_t thunk_size = pe.pe32_plus ? 8 : 4;
  const std::uint64_t ordinal_flag = pe.pe32_plus ? (1ull << 63) : (1ull << 31);

  std::size_t desc_off = *table_off;
  std::size_t desc_count = 0;
  for (;; desc_off += 20, ++desc_count) {
    if (!fits(bytes, desc_off, 20)) {
      pe.warnings.push_back("imports: descriptor table runs past end of file");
      break;
    }
    const std::uint32_t original_first_thunk = rd32(bytes, desc_off);
    const std::uint32_t name_rva = rd32(bytes, desc_off + 12);
    const std::uint32_t first_thunk = rd32(bytes, desc_off + 16);
    if (original_first_thunk == 0 && name_rva == 0 && first_thunk == 0) break;
    if (desc_count >= 64) {
      pe.warnings.push_back("imports: descriptor table unterminated after 64 entries");
      break;
    }

    ImportedDll dll;
    const auto name_off = rva_to_offset(pe, name_rva);
    auto name = name_off ? read_asciiz(bytes, *name_off) : std::nullopt;
    if (!name) {
      pe.warnings.push_back("imports: descriptor " + std::to_string(desc_count) +
                            " has unreadable DLL name");
      continue;
    }
    dll.dll_name = *name;
    dll.name_offset = *name_off;
    dll.name_end = *name_off + name->size() + 1;
    pe.import_spans.emplace_back(dll.name_offset, dll.name_end);

    const std::uint32_t thunk_rva = original_first_thunk ? original_first_thunk : first_thunk;
    auto thunk_off = rva_to_offset(pe, thunk_rva);
    if (!thunk_off) {
      pe.warnings.push_back("imports: " + dll.dll_name + " thunk array unreadable");
      pe.imports.push_back(std::move(dll));
      continue;
    }
    for (std::size_t t = *thunk_off, n = 0; ; t += thunk_size, ++n) {
      if (!fits(bytes, t, thunk_size) || n >= 4096) {
        pe.warnings.push_back("imports: " + dll.dll_name + " thunk array unterminated");
        break;
      }
      const std::uint64_t entry = pe.pe32_plus ? rd64(bytes, t) : rd32(bytes, t);
      if (entry == 0) break;
      if (entry & ordinal_flag) continue;  // import by ordinal: no name bytes
      const auto hint_off = rva_to_offset(pe, static_cast<std::uint32_t>(entry));
      auto fn_name = hint_off ? read_asciiz(bytes, *hint_off + 2) : std::nullopt;
      if (!fn_name) {
        pe.warnings.push_back("imports: " + dll.dll_name + " has unreadable hint/name entry");
        continue;
      }
      ImportedFunction fn;
      fn.name = *fn_name;
      fn.name_offset = *hint_off + 2;
      fn.name_end = fn.name_offset + fn_name->size() + 1;
      // Span covers the 2-byte hint as well.
      pe.import_spans.emplace_back(*hint_off, fn.name_end);
      dll.functions.push_back(std::move(fn));
    }
    pe.imports.push_back(std::move(dll));
  }
  if (desc_count > 0) {
    pe.import_spans.emplace_back(*table_off, desc_off + 20);  // incl. terminator
  }
}

void parse_exports(const std::vector<std::uint8_t>& bytes, PeImage& pe) {
  const DataDirectory dir = pe.directories[kDirExport];
  if (dir.rva == 0 || dir.size == 0) return;
  const auto dir_off = rva_to_offset(pe, dir.rva);
  if (!dir_off || !fits(bytes, *dir_off, 40)) {
    pe.warnings.push_back("exports: directory unreadable");
    return;
  }
  pe.export_start = *dir_off;
  pe.export_end = std::min<std::size_t>(*dir_off + dir.size, bytes.size());
  const std::uint32_t n_names = rd32(bytes, *dir_off + 24);
  const std::uint32_t names_rva = rd32(bytes, *dir_off + 32);
  const auto names_off = rva_to_offset(pe, names_rva);
  if (!names_off) {
    if (n_names) pe.warnings.push_back("exports: name pointer table unreadable");
    return;
  }
  const std::uint32_t capped = std::min<std::uint32_t>(n_names, 4096);
  if (capped < n_names) pe.warnings.push_back("exports: name count capped");
  for (std::uint32_t i = 0; i < capped; ++i) {
    if (!fits(bytes, *names_off + 4 * i, 4)) {
      pe.warnings.push_back("exports: name pointer table truncated");
      break;
    }
    const auto str_off = rva_to_offset(pe, rd32(bytes, *names_off + 4 * i));
    auto name = str_off ? read_asciiz(bytes, *str_off) : std::nullopt;
    if (!name) {
      pe.warnings.push_back("exports: entry " + std::to_string(i) + " has unreadable name");
      continue;
    }
    pe.export_names.push_back(*name);
  }
}

}  // namespace

PeImage parse_pe(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 64) throw NotAPeError("parse_pe: shorter than a DOS header");
  if (bytes[0] != 'M' || bytes[1] != 'Z') throw NotAPeError("parse_pe: missing MZ signature");

  PeImage pe;
  pe.file_size = bytes.size();
  pe.e_lfanew = rd32(bytes, 0x3c);
  if (!fits(bytes, pe.e_lfanew, 4) || rd32(bytes, pe.e_lfanew) != 0x00004550) {  // "PE\0\0"
    throw NotAPeError("parse_pe: e_lfanew does not reach a PE signature");
  }

  pe.rich = decode_rich_header(bytes, &pe.warnings);

  const std::size_t coff = pe.e_lfanew + 4;
  if (!fits(bytes, coff, 20)) throw NotAPeError("parse_pe: truncated COFF header");
  pe.machine = rd16(bytes, coff);
  pe.section_count = rd16(bytes, coff + 2);
  const std::uint16_t opt_size = rd16(bytes, coff + 16);
  pe.coff_characteristics = rd16(bytes, coff + 18);

  const std::size_t opt = coff + 20;
  pe.optional_header_offset = opt;
  if (!fits(bytes, opt, opt_size) || opt_size < 2) {
    throw NotAPeError("parse_pe: truncated optional header");
  }
  const std::uint16_t magic = rd16(bytes, opt);
  if (magic == 0x20b) {
    pe.pe32_plus = true;
  } else if (magic != 0x10b) {
    throw NotAPeError("parse_pe: unknown optional header magic");
  }

  if (opt_size >= 64 + 4) {
    pe.checksum_offset = opt + 64;
    pe.checksum_value = rd32(bytes, pe.checksum_offset);
  } else {
    pe.warnings.push_back("optional header too short for a checksum field");
  }
  if (opt_size >= 60 + 4) {
    pe.size_of_headers = rd32(bytes, opt + 60);
  }

  const std::size_t dirs_off = opt + (pe.pe32_plus ? 112 : 96);
  const std::size_t count_off = dirs_off - 4;
  if (fits(bytes, count_off, 4)) {
    pe.num_data_dirs = std::min<std::uint32_t>(rd32(bytes, count_off), 16);
    for (std::uint32_t i = 0; i < pe.num_data_dirs; ++i) {
      if (!fits(bytes, dirs_off + 8 * i, 8) || dirs_off + 8 * i >= opt + opt_size) {
        pe.warnings.push_back("data directories truncated at index " + std::to_string(i));
        pe.num_data_dirs = i;
        break;
      }
      pe.directories[i] = {rd32(bytes, dirs_off + 8 * i), rd32(bytes, dirs_off + 8 * i + 4)};
    }
  } else {
    pe.warnings.push_back("optional header too short for data directories");
  }

  pe.headers_end = opt + opt_size;
  std::size_t sec = pe.headers_end;
  for (std::uint16_t i = 0; i < pe.section_count; ++i, sec += 40) {
    if (!fits(bytes, sec, 40)) {
      pe.warnings.push_back("section table truncated at entry " + std::to_string(i));
      break;
    }
    SectionInfo s;
    for (std::size_t c = 0; c < 8 && bytes[sec + c]; ++c) s.name.push_back(static_cast<char>(bytes[sec + c]));
    s.virtual_size = rd32(bytes, sec + 8);
    s.virtual_address = rd32(bytes, sec + 12);
    s.raw_size = rd32(bytes, sec + 16);
    s.raw_offset = rd32(bytes, sec + 20);
    s.characteristics = rd32(bytes, sec + 36);
    if (s.raw_size > 0) {
      if (s.raw_offset >= bytes.size()) {
        pe.warnings.push_back("section " + s.name + " raw data lies outside the file");
        s.raw_size = 0;
      } else if (static_cast<std::size_t>(s.raw_offset) + s.raw_size > bytes.size()) {
        pe.warnings.push_back("section " + s.name + " raw data clipped at end of file");
        s.raw_size = static_cast<std::uint32_t>(bytes.size() - s.raw_offset);
      }
    }
    pe.sections.push_back(std::move(s));
  }
  pe.section_table_end = sec;

  // Overlap check runs on a copy sorted by raw offset; header order is kept
  // for RVA resolution.
  std::vector<const SectionInfo*> by_raw;
  for (const auto& s : pe.sections) {
    if (s.raw_size) by_raw.push_back(&s);
  }
  std::sort(by_raw.begin(), by_raw.end(), [](const SectionInfo* a, const SectionInfo* b) {
    return a->raw_offset < b->raw_offset;
  });
  for (std::size_t i = 1; i < by_raw.size(); ++i) {
    if (static_cast<std::size_t>(by_raw[i - 1]->raw_offset) + by_raw[i - 1]->raw_size >
        by_raw[i]->raw_offset) {
      pe.warnings.push_back("sections " + by_raw[i - 1]->name + " and " + by_raw[i]->name +
                            " overlap on disk");
    }
  }

  pe.overlay_start = bytes.size();
  if (!by_raw.empty()) {
    const SectionInfo* last = by_raw.back();
    pe.overlay_start = std::min<std::size_t>(
        bytes.size(), static_cast<std::size_t>(last->raw_offset) + last->raw_size);
  }

  parse_imports(bytes, pe);
  parse_exports(bytes, pe);
  return pe;
}

std::string region_kind_name(RegionKind kind) {
  switch (kind) {
    case RegionKind::DosHeader: return "DosHeader";
    case RegionKind::RichHeader: return "RichHeader";
    case RegionKind::PeHeaders: return "PeHeaders";
    case RegionKind::SectionTable: return "SectionTable";
    case RegionKind::SectionData: return "SectionData";
    case RegionKind::ImportNameTable: return "ImportNameTable";
    case RegionKind::ExportTable: return "ExportTable";
    case RegionKind::SecurityDirectory: return "SecurityDirectory";
    case RegionKind::InterSectionPadding: return "InterSectionPadding";
    case RegionKind::Overlay: return "Overlay";
    case RegionKind::Unknown: return "Unknown";
  }
  return "Unknown";
}

namespace {

// Paints intervals in priority order; later paints only fill what earlier
// ones left uncovered.
class IntervalPainter {
 public:
  explicit IntervalPainter(std::size_t file_size) : file_size_(file_size) {}

  void paint(std::size_t start, std::size_t end, RegionKind kind, std::string detail = {}) {
    start = std::min(start, file_size_);
    end = std::min(end, file_size_);
    if (start >= end) return;
    // Collect the uncovered sub-ranges of [start, end).
    std::vector<std::pair<std::size_t, std::size_t>> gaps;
    std::size_t cursor = start;
    for (const Region& r : regions_) {
      if (r.end <= start) continue;
      if (r.start >= end) break;
      if (r.start > cursor) gaps.emplace_back(cursor, std::min(r.start, end));
      cursor = std::max(cursor, r.end);
      if (cursor >= end) break;
    }
    if (cursor < end) gaps.emplace_back(cursor, end);
    for (auto [s, e] : gaps) insert({s, e, kind, detail});
  }

  std::vector<Region> take() && { return std::move(regions_); }

 private:
  void insert(Region r) {
    auto it = std::lower_bound(regions_.begin(), regions_.end(), r.start,
                               [](const Region& a, std::size_t s) { return a.start < s; });
    regions_.insert(it, std::move(r));
  }

  std::size_t file_size_;
  std::vector<Region> regions_;  // sorted, disjoint
};

}  // namespace

RegionMap RegionMap::build(const PeImage& pe) {
  IntervalPainter painter(pe.file_size);

  painter.paint(0, 64, RegionKind::DosHeader);
  painter.paint(pe.e_lfanew, pe.headers_end, RegionKind::PeHeaders);
  painter.paint(pe.headers_end, pe.section_table_end, RegionKind::SectionTable);
  if (pe.rich) painter.paint(pe.rich->start, pe.rich->end, RegionKind::RichHeader);

  const DataDirectory security = pe.directories[kDirSecurity];
  if (security.rva && security.size) {
    // The security directory's first field is a raw file offset.
    painter.paint(security.rva, static_cast<std::size_t>(security.rva) + security.size,
                  RegionKind::SecurityDirectory);
  }
  for (const auto& [s, e] : pe.import_spans) {
    painter.paint(s, e, RegionKind::ImportNameTable);
  }
  if (pe.export_end > pe.export_start) {
    painter.paint(pe.export_start, pe.export_end, RegionKind::ExportTable);
  }
  for (const SectionInfo& s : pe.sections) {
    if (s.raw_size) {
      painter.paint(s.raw_offset, static_cast<std::size_t>(s.raw_offset) + s.raw_size,
                    RegionKind::SectionData, s.name);
    }
  }
  painter.paint(pe.overlay_start, pe.file_size, RegionKind::Overlay);

  // Remaining gaps: alignment slack between headers and section data becomes
  // InterSectionPadding; anything inside the header area (e.g. the DOS stub)
  // stays Unknown.  The choice for unmapped slack is ours, so reports carry
  // the kind name verbatim and the split is documented in the README.
  const std::size_t padding_floor = pe.section_table_end;
  std::vector<Region> known = std::move(painter).take();
  std::vector<Region> full;
  std::size_t cursor = 0;
  auto fill_gap = [&](std::size_t s, std::size_t e) {
    if (s >= e) return;
    full.push_back({s, e, s >= padding_floor ? RegionKind::InterSectionPadding : RegionKind::Unknown,
                    {}});
  };
  for (Region& r : known) {
    fill_gap(cursor, r.start);
    cursor = r.end;
    full.push_back(std::move(r));
  }
  fill_gap(cursor, pe.file_size);

  RegionMap map;
  map.file_size_ = pe.file_size;
  map.regions_ = std::move(full);
  return map;
}

const Region& RegionMap::at(std::size_t offset) const {
  if (offset >= file_size_) {
    throw InputError("region_at: offset " + std::to_string(offset) + " beyond file size " +
                     std::to_string(file_size_));
  }
  auto it = std::upper_bound(regions_.begin(), regions_.end(), offset,
                             [](std::size_t o, const Region& r) { return o < r.start; });
  return *(it - 1);
}

}  // namespace byteprobe
