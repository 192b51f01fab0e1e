#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace byteprobe {

struct RichEntry {
  std::uint16_t product_id = 0;
  std::uint16_t build_id = 0;
  std::uint32_t use_count = 0;
};

struct RichHeader {
  std::uint32_t xor_key = 0;
  std::vector<RichEntry> entries;
  std::size_t start = 0;  // offset of the XORed "DanS" marker
  std::size_t end = 0;    // one past the key dword that follows "Rich"
};

struct SectionInfo {
  std::string name;
  std::uint32_t virtual_size = 0;
  std::uint32_t virtual_address = 0;
  std::uint32_t raw_size = 0;
  std::uint32_t raw_offset = 0;
  std::uint32_t characteristics = 0;
};

struct DataDirectory {
  std::uint32_t rva = 0;  // index 4 (security) stores a file offset instead
  std::uint32_t size = 0;
};

inline constexpr std::size_t kDirExport = 0;
inline constexpr std::size_t kDirImport = 1;
inline constexpr std::size_t kDirSecurity = 4;

struct ImportedFunction {
  std::string name;
  std::size_t name_offset = 0;  // file offset of the name's first byte
  std::size_t name_end = 0;     // one past the terminating NUL
};

struct ImportedDll {
  std::string dll_name;
  std::size_t name_offset = 0;
  std::size_t name_end = 0;
  std::vector<ImportedFunction> functions;
};

// Parsed view of a PE file.  Parsing is permissive: only a missing MZ/PE
// signature is fatal, every other malformed structure degrades to
// absent/empty and leaves a note in `warnings` (malware is routinely
// malformed and the pipeline must still score the sample).
struct PeImage {
  std::size_t file_size = 0;

  std::uint32_t e_lfanew = 0;
  std::optional<RichHeader> rich;

  std::uint16_t machine = 0;
  std::uint16_t section_count = 0;
  std::uint16_t coff_characteristics = 0;
  bool pe32_plus = false;

  std::uint32_t checksum_value = 0;
  std::size_t checksum_offset = 0;  // file offset of the CheckSum dword

  std::uint32_t size_of_headers = 0;
  std::uint32_t num_data_dirs = 0;
  std::array<DataDirectory, 16> directories{};

  std::size_t optional_header_offset = 0;
  std::size_t headers_end = 0;        // end of the COFF+optional header block
  std::size_t section_table_end = 0;  // end of the section table

  std::vector<SectionInfo> sections;
  std::vector<ImportedDll> imports;
  // File-offset spans of import machinery bytes: the descriptor table plus
  // every DLL-name and hint/name string.
  std::vector<std::pair<std::size_t, std::size_t>> import_spans;
  std::vector<std::string> export_names;
  std::size_t export_start = 0, export_end = 0;  // 0,0 when absent

  std::size_t overlay_start = 0;  // == file_size when there is no overlay

  std::vector<std::string> warnings;
};

// Throws NotAPeError when the MZ/PE signatures are missing or unreachable.
PeImage parse_pe(const std::vector<std::uint8_t>& bytes);

// Maps a virtual address to a file offset via the enclosing section; RVAs
// below the first section map onto the headers identically.
std::optional<std::size_t> rva_to_offset(const PeImage& pe, std::uint32_t rva);

// Standard PE checksum: 16-bit one's-complement folding sum over the file
// with the stored checksum dword masked to zero, plus the file length.
std::uint32_t compute_checksum(const std::vector<std::uint8_t>& bytes,
                               std::size_t checksum_field_offset);

// Locates "Rich"/"DanS" in the DOS stub and decodes the entry list.
// Returns nullopt when no recoverable header exists; `warnings`, when given,
// receives a note if a marker was present but undecodable.
std::optional<RichHeader> decode_rich_header(const std::vector<std::uint8_t>& bytes,
                                             std::vector<std::string>* warnings = nullptr);

enum class RegionKind {
  DosHeader,
  RichHeader,
  PeHeaders,
  SectionTable,
  SectionData,
  ImportNameTable,
  ExportTable,
  SecurityDirectory,
  InterSectionPadding,
  Overlay,
  Unknown,
};

std::string region_kind_name(RegionKind kind);

struct Region {
  std::size_t start = 0;
  std::size_t end = 0;
  RegionKind kind = RegionKind::Unknown;
  std::string detail;  // section name, import name, ...
};

// Sorted, disjoint intervals covering [0, file size) exactly once.
class RegionMap {
 public:
  static RegionMap build(const PeImage& pe);

  const Region& at(std::size_t offset) const;  // throws InputError past EOF
  const std::vector<Region>& regions() const { return regions_; }
  std::size_t file_size() const { return file_size_; }

 private:
  std::vector<Region> regions_;
  std::size_t file_size_ = 0;
};

}  // namespace byteprobe
