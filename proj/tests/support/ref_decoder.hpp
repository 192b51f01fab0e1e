#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace byteprobe::testing {

// Table-driven reference decoder for the supported 32-bit subset.  Built
// from precomputed length tables rather than inline branching so it shares
// no structure with the production decoder; only (mnemonic, length) are
// modeled.
struct RefInsn {
  std::string mnemonic;
  std::size_t length = 0;
};

namespace detail {

enum class Enc : std::uint8_t { None, Imm8, Imm32, Rel8, Rel32, ModRm };

struct OpSpec {
  const char* mnemonic = nullptr;
  Enc enc = Enc::None;
};

inline const std::array<OpSpec, 256>& op_table() {
  static const std::array<OpSpec, 256> table = [] {
    std::array<OpSpec, 256> t{};
    for (int r = 0; r < 8; ++r) t[0x50 + r] = {"push", Enc::None};
    t[0x6A] = {"push", Enc::Imm8};
    t[0x68] = {"push", Enc::Imm32};
    t[0xE8] = {"call", Enc::Rel32};
    t[0xE9] = {"jmp", Enc::Rel32};
    t[0xEB] = {"jmp", Enc::Rel8};
    static const char* jcc[16] = {"jo", "jno", "jb", "jae", "je", "jne", "jbe", "ja",
                                  "js", "jns", "jp", "jnp", "jl", "jge", "jle", "jg"};
    for (int i = 0; i < 16; ++i) t[0x70 + i] = {jcc[i], Enc::Rel8};
    for (int op = 0x88; op <= 0x8B; ++op) t[op] = {"mov", Enc::ModRm};
    for (int r = 0; r < 8; ++r) t[0xB8 + r] = {"mov", Enc::Imm32};
    t[0xE0] = {"loopne", Enc::Rel8};
    t[0xE2] = {"loop", Enc::Rel8};
    t[0xC3] = {"ret", Enc::None};
    t[0x90] = {"nop", Enc::None};
    return t;
  }();
  return table;
}

// Bytes that follow opcode+modrm for every possible ModRM value (32-bit
// addressing): computed once, by rule, into a flat table.
inline const std::array<std::uint8_t, 256>& modrm_extra() {
  static const std::array<std::uint8_t, 256> table = [] {
    std::array<std::uint8_t, 256> t{};
    for (int m = 0; m < 256; ++m) {
      const int mod = m >> 6, rm = m & 7;
      int extra = 0;
      if (mod != 3) {
        const bool sib = rm == 4;
        if (sib) extra += 1;
        if (mod == 1) extra += 1;
        if (mod == 2) extra += 4;
        if (mod == 0 && rm == 5) extra += 4;
        // mod==0 with SIB base 101 needs disp32; handled by the caller
        // because it depends on the SIB byte.
      }
      t[m] = static_cast<std::uint8_t>(extra);
    }
    return t;
  }();
  return table;
}

}  // namespace detail

inline bool ref_supported(std::uint8_t opcode) {
  return detail::op_table()[opcode].mnemonic != nullptr;
}

// Decodes one instruction; nullopt when the opcode is unsupported or the
// buffer truncates the encoding.
inline std::optional<RefInsn> ref_decode(const std::vector<std::uint8_t>& bytes,
                                         std::size_t offset) {
  using detail::Enc;
  if (offset >= bytes.size()) return std::nullopt;
  const detail::OpSpec& spec = detail::op_table()[bytes[offset]];
  if (!spec.mnemonic) return std::nullopt;
  std::size_t len = 1;
  switch (spec.enc) {
    case Enc::None: break;
    case Enc::Imm8:
    case Enc::Rel8: len += 1; break;
    case Enc::Imm32:
    case Enc::Rel32: len += 4; break;
    case Enc::ModRm: {
      if (offset + 1 >= bytes.size()) return std::nullopt;
      const std::uint8_t modrm = bytes[offset + 1];
      len += 1 + detail::modrm_extra()[modrm];
      const int mod = modrm >> 6, rm = modrm & 7;
      if (mod != 3 && rm == 4) {
        if (offset + 2 >= bytes.size()) return std::nullopt;
        const std::uint8_t sib = bytes[offset + 2];
        if (mod == 0 && (sib & 7) == 5) len += 4;
      }
      break;
    }
  }
  if (offset + len > bytes.size()) return std::nullopt;
  return RefInsn{spec.mnemonic, len};
}

}  // namespace byteprobe::testing
