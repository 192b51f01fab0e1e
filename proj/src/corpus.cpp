#include "byteprobe/corpus.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>

#include <nlohmann/json.hpp>

#include "byteprobe/errors.hpp"
#include "byteprobe/pe.hpp"

namespace byteprobe {

namespace {
using nlohmann::json;
namespace fs = std::filesystem;

constexpr std::size_t kFileAlign = 0x200;
constexpr std::size_t kSectionAlign = 0x1000;
constexpr std::size_t kHeadersSize = 0x400;

std::size_t align_up(std::size_t v, std::size_t a) { return (v + a - 1) / a * a; }

void wr16(std::vector<std::uint8_t>& b, std::size_t off, std::uint16_t v) {
  b[off] = static_cast<std::uint8_t>(v);
  b[off + 1] = static_cast<std::uint8_t>(v >> 8);
}

void wr32(std::vector<std::uint8_t>& b, std::size_t off, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) b[off + i] = static_cast<std::uint8_t>(v >> (8 * i));
}

void wr64(std::vector<std::uint8_t>& b, std::size_t off, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) b[off + i] = static_cast<std::uint8_t>(v >> (8 * i));
}

void wr_str(std::vector<std::uint8_t>& b, std::size_t off, const std::string& s) {
  for (std::size_t i = 0; i < s.size(); ++i) b[off + i] = static_cast<std::uint8_t>(s[i]);
}

}  // namespace

std::vector<ImportPlant> CorpusSpec::default_imports() {
  return {
      {"kernel32.dll", "ExitProcess", 1.0, 1.0},
      {"kernel32.dll", "GetModuleHandleA", 0.9, 0.9},
      {"kernel32.dll", "WriteProcessMemory", 0.45, 0.05},
      {"kernel32.dll", "CreateRemoteThread", 0.4, 0.03},
      {"advapi32.dll", "CryptEncrypt", 0.55, 0.04},
      {"advapi32.dll", "CryptDecrypt", 0.5, 0.04},
      {"user32.dll", "MessageBoxA", 0.3, 0.65},
  };
}

void CorpusSpec::validate() const {
  if (count == 0) throw ConfigError("corpus: count must be positive");
  if (malware_ratio <= 0.0 || malware_ratio >= 1.0) {
    throw ConfigError("corpus: malware_ratio must be inside (0,1) so both classes appear");
  }
  auto prob = [](double p, const char* name) {
    if (p < 0.0 || p > 1.0) throw ConfigError(std::string("corpus: ") + name + " outside [0,1]");
  };
  prob(p_zero_checksum_malware, "p_zero_checksum_malware");
  prob(p_zero_checksum_goodware, "p_zero_checksum_goodware");
  prob(p_security_dir_malware, "p_security_dir_malware");
  prob(p_security_dir_goodware, "p_security_dir_goodware");
  prob(p_rich_malware, "p_rich_malware");
  prob(p_rich_goodware, "p_rich_goodware");
  prob(p_motif_malware, "p_motif_malware");
  prob(p_motif_goodware, "p_motif_goodware");
  prob(p_pe32_plus, "p_pe32_plus");
  prob(p_exports, "p_exports");
  prob(label_noise, "label_noise");
  for (const ImportPlant& ip : imports.empty() ? default_imports() : imports) {
    prob(ip.p_malware, "import p_malware");
    prob(ip.p_goodware, "import p_goodware");
    if (ip.dll.empty() || ip.function.empty()) {
      throw ConfigError("corpus: import plant with empty name");
    }
  }
  if (motif_min_reps == 0 || motif_min_reps > motif_max_reps) {
    throw ConfigError("corpus: bad motif repetition range");
  }
  if (min_size > max_size) throw ConfigError("corpus: min_size > max_size");
  if (min_size < 2048 || max_size < 4096) {
    throw ConfigError("corpus: size range cannot fit a minimal PE "
                      "(need min_size >= 2048 and max_size >= 4096)");
  }
}

namespace {

struct SectionPlan {
  std::string name;
  std::uint32_t va = 0;
  std::uint32_t vsize = 0;
  std::uint32_t raw_off = 0;
  std::uint32_t raw_size = 0;
  std::uint32_t characteristics = 0;
};

// Builds the import machinery blob for .rdata and reports, for every
// planted discriminative function, the span of its name bytes relative to
// the blob start.
struct ImportBlob {
  std::vector<std::uint8_t> bytes;
  std::vector<std::pair<std::string, std::pair<std::size_t, std::size_t>>> name_spans;
};

ImportBlob build_import_blob(const std::vector<std::pair<std::string, std::vector<std::string>>>& dlls,
                             std::uint32_t base_rva, bool pe32_plus) {
  const std::size_t thunk_size = pe32_plus ? 8 : 4;
  const std::size_t ndll = dlls.size();

  // Layout: descriptors | per-dll ILT | per-dll IAT | hint/name entries |
  // dll name strings.
  std::size_t cursor = (ndll + 1) * 20;
  std::vector<std::size_t> ilt_off(ndll), iat_off(ndll);
  for (std::size_t i = 0; i < ndll; ++i) {
    ilt_off[i] = cursor;
    cursor += (dlls[i].second.size() + 1) * thunk_size;
  }
  for (std::size_t i = 0; i < ndll; ++i) {
    iat_off[i] = cursor;
    cursor += (dlls[i].second.size() + 1) * thunk_size;
  }
  std::vector<std::vector<std::size_t>> hint_off(ndll);
  for (std::size_t i = 0; i < ndll; ++i) {
    for (const std::string& fn : dlls[i].second) {
      hint_off[i].push_back(cursor);
      cursor += 2 + fn.size() + 1;
      if (cursor & 1) ++cursor;  // hint/name entries are even-aligned
    }
  }
  std::vector<std::size_t> dllname_off(ndll);
  for (std::size_t i = 0; i < ndll; ++i) {
    dllname_off[i] = cursor;
    cursor += dlls[i].first.size() + 1;
  }

  ImportBlob blob;
  blob.bytes.assign(cursor, 0);
  for (std::size_t i = 0; i < ndll; ++i) {
    const std::size_t d = i * 20;
    wr32(blob.bytes, d + 0, base_rva + static_cast<std::uint32_t>(ilt_off[i]));
    wr32(blob.bytes, d + 12, base_rva + static_cast<std::uint32_t>(dllname_off[i]));
    wr32(blob.bytes, d + 16, base_rva + static_cast<std::uint32_t>(iat_off[i]));
    for (std::size_t f = 0; f < dlls[i].second.size(); ++f) {
      const std::uint32_t hn = base_rva + static_cast<std::uint32_t>(hint_off[i][f]);
      if (pe32_plus) {
        wr64(blob.bytes, ilt_off[i] + f * 8, hn);
        wr64(blob.bytes, iat_off[i] + f * 8, hn);
      } else {
        wr32(blob.bytes, ilt_off[i] + f * 4, hn);
        wr32(blob.bytes, iat_off[i] + f * 4, hn);
      }
      const std::string& fn = dlls[i].second[f];
      wr_str(blob.bytes, hint_off[i][f] + 2, fn);
      blob.name_spans.push_back({fn, {hint_off[i][f] + 2, hint_off[i][f] + 2 + fn.size() + 1}});
    }
    wr_str(blob.bytes, dllname_off[i], dlls[i].first);
  }
  return blob;
}

std::vector<std::uint8_t> build_export_blob(std::uint32_t base_rva,
                                            const std::vector<std::string>& names,
                                            Rng& rng) {
  const std::size_t n = names.size();
  std::size_t cursor = 40;
  const std::size_t funcs_off = cursor;
  cursor += 4 * n;
  const std::size_t names_off = cursor;
  cursor += 4 * n;
  const std::size_t ords_off = cursor;
  cursor += 2 * n;
  if (cursor & 3) cursor = (cursor + 3) & ~std::size_t{3};
  std::vector<std::size_t> str_off(n);
  for (std::size_t i = 0; i < n; ++i) {
    str_off[i] = cursor;
    cursor += names[i].size() + 1;
  }
  const std::size_t module_off = cursor;
  const std::string module_name = "module.dll";
  cursor += module_name.size() + 1;

  std::vector<std::uint8_t> b(cursor, 0);
  wr32(b, 4, 0x5b000000 + static_cast<std::uint32_t>(rng.below(1 << 24)));  // timestamp
  wr32(b, 12, base_rva + static_cast<std::uint32_t>(module_off));
  wr32(b, 16, 1);  // ordinal base
  wr32(b, 20, static_cast<std::uint32_t>(n));
  wr32(b, 24, static_cast<std::uint32_t>(n));
  wr32(b, 28, base_rva + static_cast<std::uint32_t>(funcs_off));
  wr32(b, 32, base_rva + static_cast<std::uint32_t>(names_off));
  wr32(b, 36, base_rva + static_cast<std::uint32_t>(ords_off));
  for (std::size_t i = 0; i < n; ++i) {
    wr32(b, funcs_off + 4 * i, 0x1000 + static_cast<std::uint32_t>(rng.below(0x400)));
    wr32(b, names_off + 4 * i, base_rva + static_cast<std::uint32_t>(str_off[i]));
    wr16(b, ords_off + 2 * i, static_cast<std::uint16_t>(i));
    wr_str(b, str_off[i], names[i]);
  }
  wr_str(b, module_off, module_name);
  return b;
}

const char* kExportNamePool[] = {"Initialize", "Configure", "Execute", "QueryInfo",
                                 "Shutdown", "GetStatus"};

struct BuiltFile {
  std::vector<std::uint8_t> bytes;
  std::vector<PlantedFeature> features;
  bool malware = false;
  int label = 0;
};

BuiltFile build_file(const CorpusSpec& spec, const std::vector<ImportPlant>& imports,
                     std::size_t index) {
  Rng rng = Rng(spec.seed).fork("file", index);
  BuiltFile out;

  // Class and plant decisions come first and in a fixed order so content
  // randomness never shifts them.
  out.malware = rng.bernoulli(spec.malware_ratio);
  const bool flip = rng.bernoulli(spec.label_noise);
  out.label = (out.malware != flip) ? 1 : 0;
  auto pick = [&](double p_mal, double p_good) {
    return rng.bernoulli(out.malware ? p_mal : p_good);
  };
  const bool pe32_plus = rng.bernoulli(spec.p_pe32_plus);
  const bool has_rich = pick(spec.p_rich_malware, spec.p_rich_goodware);
  const std::size_t rich_entries = has_rich ? 3 + rng.below(4) : 0;
  const bool zero_checksum = pick(spec.p_zero_checksum_malware, spec.p_zero_checksum_goodware);
  const bool has_security = pick(spec.p_security_dir_malware, spec.p_security_dir_goodware);
  const bool has_exports = rng.bernoulli(spec.p_exports);
  std::vector<std::size_t> chosen_imports;
  for (std::size_t i = 0; i < imports.size(); ++i) {
    if (pick(imports[i].p_malware, imports[i].p_goodware)) chosen_imports.push_back(i);
  }
  const bool has_motif = pick(spec.p_motif_malware, spec.p_motif_goodware);
  const std::size_t motif_reps =
      has_motif ? spec.motif_min_reps + rng.below(spec.motif_max_reps - spec.motif_min_reps + 1)
                : 0;
  const std::size_t target_size = spec.min_size + rng.below(spec.max_size - spec.min_size + 1);

  // ---- header geometry ----
  const std::size_t rich_size = has_rich ? 16 + 8 * rich_entries + 8 : 0;
  const std::size_t e_lfanew = 0x80 + (has_rich ? align_up(rich_size, 16) : 0);
  const std::size_t opt_size = pe32_plus ? 0xF0 : 0xE0;
  const std::size_t opt_off = e_lfanew + 24;
  const std::size_t dirs_off = opt_off + (pe32_plus ? 112 : 96);
  const std::size_t checksum_off = opt_off + 64;

  // ---- .text ----
  constexpr std::size_t kMotifLen = 11;  // push imm8 x3 + call rel32
  std::size_t text_content = 0x240 + rng.below(0x200);
  if (motif_reps * kMotifLen + 64 > text_content) {
    text_content = motif_reps * kMotifLen + 64 + rng.below(0x80);
  }
  // .text must stay inside its 0x1000 virtual extent.
  text_content = std::min<std::size_t>(text_content, 0xF00);
  const std::size_t text_raw = align_up(text_content, kFileAlign);

  // ---- .rdata: imports (+ exports) ----
  std::vector<std::pair<std::string, std::vector<std::string>>> dll_groups;
  for (std::size_t i : chosen_imports) {
    auto it = std::find_if(dll_groups.begin(), dll_groups.end(),
                           [&](const auto& g) { return g.first == imports[i].dll; });
    if (it == dll_groups.end()) {
      dll_groups.push_back({imports[i].dll, {imports[i].function}});
    } else {
      it->second.push_back(imports[i].function);
    }
  }
  const std::uint32_t rdata_va = 0x2000;
  ImportBlob import_blob = build_import_blob(dll_groups, rdata_va, pe32_plus);
  std::vector<std::uint8_t> export_blob;
  std::uint32_t export_rva = 0;
  if (has_exports) {
    std::vector<std::string> names;
    const std::size_t n_names = 1 + rng.below(3);
    for (std::size_t i = 0; i < n_names; ++i) {
      const std::string cand = kExportNamePool[rng.below(std::size(kExportNamePool))];
      if (std::find(names.begin(), names.end(), cand) == names.end()) names.push_back(cand);
    }
    export_rva = rdata_va + static_cast<std::uint32_t>(align_up(import_blob.bytes.size(), 8));
    export_blob = build_export_blob(export_rva, names, rng);
  }
  const std::size_t rdata_content =
      has_exports ? (export_rva - rdata_va) + export_blob.size() : import_blob.bytes.size();
  if (rdata_content > 0xF00) {
    throw ConfigError("corpus: import/export plants exceed the .rdata virtual extent");
  }
  const std::size_t rdata_raw = align_up(std::max<std::size_t>(rdata_content, 1), kFileAlign);

  // ---- .data and overall size ----
  const std::size_t text_off = kHeadersSize;
  const std::size_t rdata_off = text_off + text_raw;
  const std::size_t after_rdata = rdata_off + rdata_raw;
  const std::size_t cert_payload = has_security ? align_up(64 + rng.below(160), 8) : 0;
  const std::size_t cert_total = has_security ? 8 + cert_payload : 0;

  std::size_t data_raw = 0, data_vsize = 0;
  std::size_t budget = target_size > after_rdata + cert_total ? target_size - after_rdata - cert_total : 0;
  if (budget >= kFileAlign) {
    data_raw = budget / kFileAlign * kFileAlign;
    data_vsize = data_raw - rng.below(std::min<std::size_t>(0x80, data_raw / 2));
  }
  const std::size_t data_off = after_rdata;
  const std::size_t cert_off = data_off + data_raw;  // 0x200-aligned, so 8-aligned
  const std::size_t tail_len = target_size > cert_off + cert_total ? target_size - cert_off - cert_total : 0;
  const std::size_t file_size = cert_off + cert_total + tail_len;

  std::vector<SectionPlan> sections;
  sections.push_back({".text", 0x1000, static_cast<std::uint32_t>(text_content),
                      static_cast<std::uint32_t>(text_off), static_cast<std::uint32_t>(text_raw),
                      0x60000020});
  sections.push_back({".rdata", rdata_va, static_cast<std::uint32_t>(rdata_content),
                      static_cast<std::uint32_t>(rdata_off), static_cast<std::uint32_t>(rdata_raw),
                      0x40000040});
  if (data_raw) {
    sections.push_back({".data", 0x3000, static_cast<std::uint32_t>(data_vsize),
                        static_cast<std::uint32_t>(data_off), static_cast<std::uint32_t>(data_raw),
                        0xC0000040});
  }
  const SectionPlan& last = sections.back();
  const std::size_t size_of_image = last.va + align_up(std::max<std::uint32_t>(last.vsize, 1), kSectionAlign);

  // ---- assemble ----
  std::vector<std::uint8_t>& b = out.bytes;
  b.assign(file_size, 0);

  // DOS header + stub
  b[0] = 'M';
  b[1] = 'Z';
  wr16(b, 2, 0x90);
  wr16(b, 4, 3);
  wr16(b, 8, 4);
  wr16(b, 12, 0xFFFF);
  wr16(b, 16, 0xB8);
  wr16(b, 24, 0x40);
  wr32(b, 0x3c, static_cast<std::uint32_t>(e_lfanew));
  static const std::uint8_t stub_code[] = {0x0E, 0x1F, 0xBA, 0x0E, 0x00, 0xB4, 0x09,
                                           0xCD, 0x21, 0xB8, 0x01, 0x4C, 0xCD, 0x21};
  std::copy(std::begin(stub_code), std::end(stub_code), b.begin() + 0x40);
  wr_str(b, 0x4e, "This program cannot be run in DOS mode.\r\n$");

  if (has_rich) {
    const std::uint32_t key = rng.next_u32() | 1;
    const std::size_t rich_start = 0x80;
    wr32(b, rich_start, 0x536e6144 ^ key);  // "DanS"
    for (int i = 1; i < 4; ++i) wr32(b, rich_start + 4 * static_cast<std::size_t>(i), key);
    for (std::size_t e = 0; e < rich_entries; ++e) {
      const std::uint32_t prod = 0x80 + static_cast<std::uint32_t>(rng.below(0x80));
      const std::uint32_t build = 20000 + static_cast<std::uint32_t>(rng.below(12000));
      const std::uint32_t count = 1 + static_cast<std::uint32_t>(rng.below(60));
      wr32(b, rich_start + 16 + 8 * e, ((prod << 16) | build) ^ key);
      wr32(b, rich_start + 16 + 8 * e + 4, count ^ key);
    }
    const std::size_t marker = rich_start + 16 + 8 * rich_entries;
    wr32(b, marker, 0x68636952);  // "Rich"
    wr32(b, marker + 4, key);
    out.features.push_back({"rich-header", rich_start, marker + 8,
                            spec.p_rich_malware > spec.p_rich_goodware});
  }

  // PE signature + COFF
  wr32(b, e_lfanew, 0x00004550);
  const std::size_t coff = e_lfanew + 4;
  wr16(b, coff, pe32_plus ? 0x8664 : 0x14c);
  wr16(b, coff + 2, static_cast<std::uint16_t>(sections.size()));
  wr32(b, coff + 4, 0x5b000000 + static_cast<std::uint32_t>(rng.below(1 << 24)));
  wr16(b, coff + 16, static_cast<std::uint16_t>(opt_size));
  wr16(b, coff + 18, pe32_plus ? 0x0022 : 0x0102);

  // Optional header
  wr16(b, opt_off, pe32_plus ? 0x20b : 0x10b);
  b[opt_off + 2] = 14;  // linker major
  wr32(b, opt_off + 4, static_cast<std::uint32_t>(text_raw));
  wr32(b, opt_off + 8, static_cast<std::uint32_t>(rdata_raw + data_raw));
  wr32(b, opt_off + 16, 0x1000);  // entry point
  wr32(b, opt_off + 20, 0x1000);  // base of code
  if (pe32_plus) {
    wr64(b, opt_off + 24, 0x140000000ull);
  } else {
    wr32(b, opt_off + 24, 0x2000);  // base of data
    wr32(b, opt_off + 28, 0x400000);
  }
  wr32(b, opt_off + 32, kSectionAlign);
  wr32(b, opt_off + 36, kFileAlign);
  wr16(b, opt_off + 40, 6);  // OS version
  wr16(b, opt_off + 48, 6);  // subsystem version
  wr32(b, opt_off + 56, static_cast<std::uint32_t>(size_of_image));
  wr32(b, opt_off + 60, kHeadersSize);
  wr16(b, opt_off + 68, rng.bernoulli(0.5) ? 2 : 3);  // GUI or console
  wr16(b, opt_off + 70, 0x8140);
  if (pe32_plus) {
    wr64(b, opt_off + 72, 0x100000);
    wr64(b, opt_off + 80, 0x1000);
    wr64(b, opt_off + 88, 0x100000);
    wr64(b, opt_off + 96, 0x1000);
    wr32(b, opt_off + 108, 16);
  } else {
    wr32(b, opt_off + 72, 0x100000);
    wr32(b, opt_off + 76, 0x1000);
    wr32(b, opt_off + 80, 0x100000);
    wr32(b, opt_off + 84, 0x1000);
    wr32(b, opt_off + 92, 16);
  }

  // Data directories
  if (has_exports) {
    wr32(b, dirs_off + 0, export_rva);
    wr32(b, dirs_off + 4, static_cast<std::uint32_t>(export_blob.size()));
  }
  if (!dll_groups.empty()) {
    wr32(b, dirs_off + 8, rdata_va);
    wr32(b, dirs_off + 12, static_cast<std::uint32_t>((dll_groups.size() + 1) * 20));
  }
  const std::size_t sec_entry = dirs_off + 8 * kDirSecurity;
  if (has_security) {
    wr32(b, sec_entry, static_cast<std::uint32_t>(cert_off));
    wr32(b, sec_entry + 4, static_cast<std::uint32_t>(cert_total));
    out.features.push_back({"security-directory", sec_entry, sec_entry + 8,
                            spec.p_security_dir_malware > spec.p_security_dir_goodware});
  } else {
    out.features.push_back({"no-security-directory", sec_entry, sec_entry + 8,
                            spec.p_security_dir_malware < spec.p_security_dir_goodware});
  }

  // Section table
  std::size_t sec_off = opt_off + opt_size;
  for (const SectionPlan& s : sections) {
    wr_str(b, sec_off, s.name);
    wr32(b, sec_off + 8, s.vsize);
    wr32(b, sec_off + 12, s.va);
    wr32(b, sec_off + 16, s.raw_size);
    wr32(b, sec_off + 20, s.raw_off);
    wr32(b, sec_off + 36, s.characteristics);
    sec_off += 40;
  }

  // .text: entry prologue, random code bytes, then planted motifs.
  for (std::size_t i = 0; i < text_content; ++i) b[text_off + i] = rng.next_byte();
  static const std::uint8_t prologue[] = {0x55, 0x8B, 0xEC, 0x83, 0xEC, 0x40};
  std::copy(std::begin(prologue), std::end(prologue), b.begin() + static_cast<std::ptrdiff_t>(text_off));
  if (motif_reps > 0) {
    const std::size_t slots = (text_content - 16) / kMotifLen;
    std::vector<std::size_t> slot_ids(slots);
    for (std::size_t i = 0; i < slots; ++i) slot_ids[i] = i;
    rng.shuffle(slot_ids);
    const std::size_t reps = std::min(motif_reps, slots);
    for (std::size_t r = 0; r < reps; ++r) {
      const std::size_t off = text_off + 16 + slot_ids[r] * kMotifLen;
      for (std::size_t p = 0; p < 3; ++p) {
        b[off + 2 * p] = 0x6A;  // push imm8
        b[off + 2 * p + 1] = static_cast<std::uint8_t>(rng.below(8));
      }
      b[off + 6] = 0xE8;  // call rel32
      wr32(b, off + 7, static_cast<std::uint32_t>(rng.below(0x400)));
      out.features.push_back({"push-call-motif", off, off + kMotifLen,
                              spec.p_motif_malware > spec.p_motif_goodware});
    }
  }

  // .rdata
  std::copy(import_blob.bytes.begin(), import_blob.bytes.end(),
            b.begin() + static_cast<std::ptrdiff_t>(rdata_off));
  for (const auto& [fn_name, span] : import_blob.name_spans) {
    const ImportPlant* plant = nullptr;
    for (const ImportPlant& ip : imports) {
      if (ip.function == fn_name) plant = &ip;
    }
    const bool oriented = plant && plant->p_malware > plant->p_goodware;
    out.features.push_back({"import:" + fn_name, rdata_off + span.first,
                            rdata_off + span.second, oriented});
  }
  if (has_exports) {
    std::copy(export_blob.begin(), export_blob.end(),
              b.begin() + static_cast<std::ptrdiff_t>(rdata_off + (export_rva - rdata_va)));
  }

  // .data
  for (std::size_t i = 0; i < data_vsize; ++i) b[data_off + i] = rng.next_byte();

  // Certificate blob (overlay) + trailing junk
  if (has_security) {
    wr32(b, cert_off, static_cast<std::uint32_t>(cert_total));
    wr16(b, cert_off + 4, 0x0200);
    wr16(b, cert_off + 6, 0x0002);
    for (std::size_t i = 0; i < cert_payload; ++i) b[cert_off + 8 + i] = rng.next_byte();
  }
  for (std::size_t i = 0; i < tail_len; ++i) b[cert_off + cert_total + i] = rng.next_byte();

  // Checksum goes in last: correct unless the zero-checksum feature fires.
  if (zero_checksum) {
    wr32(b, checksum_off, 0);
    out.features.push_back({"zero-checksum", checksum_off, checksum_off + 4,
                            spec.p_zero_checksum_malware > spec.p_zero_checksum_goodware});
  } else {
    wr32(b, checksum_off, compute_checksum(b, checksum_off));
  }
  return out;
}

}  // namespace

GeneratedCorpus generate_corpus(const CorpusSpec& spec) {
  spec.validate();
  const std::vector<ImportPlant> imports =
      spec.imports.empty() ? CorpusSpec::default_imports() : spec.imports;

  GeneratedCorpus corpus;
  corpus.manifest.spec = spec;
  corpus.manifest.entries.resize(spec.count);
  corpus.samples.resize(spec.count);
  bool any_pos = false, any_neg = false;
  for (std::size_t i = 0; i < spec.count; ++i) {
    BuiltFile f = build_file(spec, imports, i);
    char idbuf[32];
    std::snprintf(idbuf, sizeof idbuf, "sample-%06zu", i);
    ManifestEntry& e = corpus.manifest.entries[i];
    e.id = idbuf;
    e.label = f.label;
    e.size = f.bytes.size();
    e.features = std::move(f.features);
    (f.label ? any_pos : any_neg) = true;
    corpus.samples[i] = {e.id, std::move(f.bytes), f.label};
  }
  if (!any_pos || !any_neg) {
    throw ConfigError("corpus: generated labels are single-class; adjust ratio/count");
  }
  return corpus;
}

namespace {

json spec_to_json(const CorpusSpec& s) {
  json j;
  j["count"] = s.count;
  j["malware_ratio"] = s.malware_ratio;
  j["p_zero_checksum_malware"] = s.p_zero_checksum_malware;
  j["p_zero_checksum_goodware"] = s.p_zero_checksum_goodware;
  j["p_security_dir_malware"] = s.p_security_dir_malware;
  j["p_security_dir_goodware"] = s.p_security_dir_goodware;
  j["p_rich_malware"] = s.p_rich_malware;
  j["p_rich_goodware"] = s.p_rich_goodware;
  json imports = json::array();
  for (const ImportPlant& ip : s.imports) {
    imports.push_back({{"dll", ip.dll},
                       {"function", ip.function},
                       {"p_malware", ip.p_malware},
                       {"p_goodware", ip.p_goodware}});
  }
  j["imports"] = imports;
  j["p_motif_malware"] = s.p_motif_malware;
  j["p_motif_goodware"] = s.p_motif_goodware;
  j["motif_min_reps"] = s.motif_min_reps;
  j["motif_max_reps"] = s.motif_max_reps;
  j["p_pe32_plus"] = s.p_pe32_plus;
  j["p_exports"] = s.p_exports;
  j["label_noise"] = s.label_noise;
  j["min_size"] = s.min_size;
  j["max_size"] = s.max_size;
  j["seed"] = s.seed;
  return j;
}

CorpusSpec spec_from_json(const json& j) {
  CorpusSpec s;
  try {
    s.count = j.value("count", s.count);
    s.malware_ratio = j.value("malware_ratio", s.malware_ratio);
    s.p_zero_checksum_malware = j.value("p_zero_checksum_malware", s.p_zero_checksum_malware);
    s.p_zero_checksum_goodware = j.value("p_zero_checksum_goodware", s.p_zero_checksum_goodware);
    s.p_security_dir_malware = j.value("p_security_dir_malware", s.p_security_dir_malware);
    s.p_security_dir_goodware = j.value("p_security_dir_goodware", s.p_security_dir_goodware);
    s.p_rich_malware = j.value("p_rich_malware", s.p_rich_malware);
    s.p_rich_goodware = j.value("p_rich_goodware", s.p_rich_goodware);
    if (j.contains("imports")) {
      for (const auto& ij : j.at("imports")) {
        s.imports.push_back({ij.at("dll").get<std::string>(),
                             ij.at("function").get<std::string>(),
                             ij.at("p_malware").get<double>(),
                             ij.at("p_goodware").get<double>()});
      }
    }
    s.p_motif_malware = j.value("p_motif_malware", s.p_motif_malware);
    s.p_motif_goodware = j.value("p_motif_goodware", s.p_motif_goodware);
    s.motif_min_reps = j.value("motif_min_reps", s.motif_min_reps);
    s.motif_max_reps = j.value("motif_max_reps", s.motif_max_reps);
    s.p_pe32_plus = j.value("p_pe32_plus", s.p_pe32_plus);
    s.p_exports = j.value("p_exports", s.p_exports);
    s.label_noise = j.value("label_noise", s.label_noise);
    s.min_size = j.value("min_size", s.min_size);
    s.max_size = j.value("max_size", s.max_size);
    s.seed = j.value("seed", s.seed);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("corpus spec: ") + e.what());
  }
  return s;
}

}  // namespace

CorpusSpec corpus_spec_from_json_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("corpus spec: invalid JSON: ") + e.what());
  }
  CorpusSpec spec = spec_from_json(j);
  spec.validate();
  return spec;
}

std::string corpus_spec_to_json_text(const CorpusSpec& spec) {
  return spec_to_json(spec).dump(2);
}

void write_corpus(const GeneratedCorpus& corpus, const std::string& dir) {
  fs::create_directories(dir);
  json manifest;
  manifest["spec"] = spec_to_json(corpus.manifest.spec);
  json entries = json::array();
  for (std::size_t i = 0; i < corpus.manifest.entries.size(); ++i) {
    const ManifestEntry& e = corpus.manifest.entries[i];
    json features = json::array();
    for (const PlantedFeature& f : e.features) {
      features.push_back({{"name", f.name},
                          {"start", f.start},
                          {"end", f.end},
                          {"malware_oriented", f.malware_oriented}});
    }
    entries.push_back({{"id", e.id}, {"label", e.label}, {"size", e.size}, {"features", features}});

    const fs::path path = fs::path(dir) / (e.id + ".exe");
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw InputError("write_corpus: cannot open " + path.string());
    const auto& bytes = corpus.samples[i].bytes;
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  }
  manifest["entries"] = entries;
  std::ofstream mf(fs::path(dir) / "manifest.json", std::ios::trunc);
  if (!mf) throw InputError("write_corpus: cannot write manifest.json");
  mf << manifest.dump(2) << "\n";
}

GeneratedCorpus load_corpus(const std::string& dir) {
  std::ifstream mf(fs::path(dir) / "manifest.json");
  if (!mf) throw InputError("load_corpus: no manifest.json in " + dir);
  json manifest;
  try {
    mf >> manifest;
  } catch (const json::exception& e) {
    throw FormatError(std::string("load_corpus: bad manifest: ") + e.what());
  }

  GeneratedCorpus corpus;
  try {
    corpus.manifest.spec = spec_from_json(manifest.at("spec"));
    for (const auto& ej : manifest.at("entries")) {
      ManifestEntry e;
      e.id = ej.at("id").get<std::string>();
      e.label = ej.at("label").get<int>();
      e.size = ej.at("size").get<std::size_t>();
      for (const auto& fj : ej.at("features")) {
        e.features.push_back({fj.at("name").get<std::string>(),
                              fj.at("start").get<std::size_t>(),
                              fj.at("end").get<std::size_t>(),
                              fj.at("malware_oriented").get<bool>()});
      }
      corpus.manifest.entries.push_back(std::move(e));
    }
  } catch (const json::exception& e) {
    throw FormatError(std::string("load_corpus: bad manifest: ") + e.what());
  }

  for (const ManifestEntry& e : corpus.manifest.entries) {
    const fs::path path = fs::path(dir) / (e.id + ".exe");
    std::ifstream f(path, std::ios::binary);
    if (!f) throw InputError("load_corpus: missing file " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                                    std::istreambuf_iterator<char>());
    corpus.samples.push_back({e.id, std::move(bytes), e.label});
  }
  return corpus;
}

SplitCorpus split_corpus(const std::vector<LabeledSample>& samples, double train_frac,
                         double val_frac) {
  if (train_frac <= 0.0 || val_frac < 0.0 || train_frac + val_frac >= 1.0) {
    throw ConfigError("split: need 0 < train_frac and train_frac + val_frac < 1");
  }
  SplitCorpus s;
  const std::size_t n = samples.size();
  const std::size_t n_train = static_cast<std::size_t>(static_cast<double>(n) * train_frac);
  const std::size_t n_val = static_cast<std::size_t>(static_cast<double>(n) * val_frac);
  s.train.assign(samples.begin(), samples.begin() + static_cast<std::ptrdiff_t>(n_train));
  s.validation.assign(samples.begin() + static_cast<std::ptrdiff_t>(n_train),
                      samples.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
  s.test.assign(samples.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), samples.end());
  return s;
}

std::vector<LabeledSample> balanced_subset(const std::vector<LabeledSample>& samples) {
  std::size_t n_pos = 0, n_neg = 0;
  for (const auto& s : samples) (s.label ? n_pos : n_neg)++;
  const std::size_t take = std::min(n_pos, n_neg);
  std::vector<LabeledSample> out;
  std::size_t got_pos = 0, got_neg = 0;
  for (const auto& s : samples) {
    std::size_t& got = s.label ? got_pos : got_neg;
    if (got < take) {
      out.push_back(s);
      ++got;
    }
  }
  return out;
}

RegimesConfig RegimesConfig::desk_default() {
  RegimesConfig c;
  c.model = ModelConfig::desk_default();

  TrainConfig base;
  base.epochs = 3;
  base.learning_rate = 0.02;
  base.momentum = 0.9;
  base.decay = {0.5, 2};
  base.batch_size = 8;

  RegimeConfig small{"small", base, false, true};
  small.train.seed = 101;
  small.train.epochs = 4;
  small.train.regime = "small";

  RegimeConfig baseline{"baseline", base, false, false};
  baseline.train.seed = 102;
  baseline.train.regime = "baseline";

  RegimeConfig dropout{"dropout", base, true, false};
  dropout.train.seed = 103;
  dropout.train.regime = "baseline+dropout";

  c.regimes = {small, baseline, dropout};
  return c;
}

std::vector<RegimeResult> run_regimes(const std::vector<LabeledSample>& corpus,
                                      const RegimesConfig& config) {
  const SplitCorpus split = split_corpus(corpus, config.train_frac, config.val_frac);
  std::vector<RegimeResult> results;
  for (const RegimeConfig& rc : config.regimes) {
    ModelConfig mc = config.model;
    mc.dropout_rates = rc.use_dropout
                           ? std::optional<std::vector<double>>(ModelConfig::standard_dropout_rates())
                           : std::nullopt;
    RegimeResult r;
    r.name = rc.name;
    r.model = build_model(mc, rc.train.seed);
    const std::vector<LabeledSample> train_set =
        rc.balanced_train ? balanced_subset(split.train) : split.train;
    r.history = train(r.model, train_set, split.validation, rc.train);
    r.test_metrics = evaluate(r.model, split.test);
    results.push_back(std::move(r));
  }
  return results;
}

double planted_feature_recall(const std::vector<SampleAttribution>& attributions,
                              const Manifest& manifest, std::size_t top_n) {
  std::map<std::string, const ManifestEntry*> by_id;
  for (const ManifestEntry& e : manifest.entries) by_id[e.id] = &e;

  std::size_t eligible = 0, hit = 0;
  for (const SampleAttribution& sa : attributions) {
    auto it = by_id.find(sa.id);
    if (it == by_id.end()) {
      throw InputError("recall: sample " + sa.id + " not present in manifest");
    }
    std::vector<const PlantedFeature*> spans;
    for (const PlantedFeature& f : it->second->features) {
      if (f.malware_oriented) spans.push_back(&f);
    }
    if (spans.empty()) continue;  // nothing plantable to recall
    ++eligible;
    if (top_n == 0) continue;

    std::vector<const Segment*> pos;
    for (const Segment& s : sa.segments) {
      if (s.sign > 0) pos.push_back(&s);
    }
    std::sort(pos.begin(), pos.end(), [](const Segment* a, const Segment* b) {
      if (a->value != b->value) return a->value > b->value;
      return a->start < b->start;
    });
    if (pos.size() > top_n) pos.resize(top_n);
    bool overlapped = false;
    for (const Segment* s : pos) {
      for (const PlantedFeature* f : spans) {
        if (s->start < f->end && f->start < s->end) {
          overlapped = true;
          break;
        }
      }
      if (overlapped) break;
    }
    hit += overlapped;
  }
  if (eligible == 0) return 0.0;
  return static_cast<double>(hit) / static_cast<double>(eligible);
}

}  // namespace byteprobe
