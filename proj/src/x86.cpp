#include "byteprobe/x86.hpp"

#include <array>
#include <cctype>

#include "byteprobe/errors.hpp"

namespace byteprobe {

namespace {

constexpr std::array<const char*, 8> kReg32 = {"eax", "ecx", "edx", "ebx",
                                               "esp", "ebp", "esi", "edi"};
constexpr std::array<const char*, 8> kReg8 = {"al", "cl", "dl", "bl",
                                              "ah", "ch", "dh", "bh"};
constexpr std::array<const char*, 16> kJcc = {"jo", "jno", "jb",  "jae", "je", "jne",
                                              "jbe", "ja", "js",  "jns", "jp", "jnp",
                                              "jl",  "jge", "jle", "jg"};

std::string hex32(std::uint32_t v) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "0x%x", v);
  return buf;
}

std::string hex8(std::uint8_t v) {
  char buf[8];
  std::snprintf(buf, sizeof buf, "0x%02x", v);
  return buf;
}

struct Cursor {
  const std::vector<std::uint8_t>& bytes;
  std::size_t pos;
  std::size_t end;

  bool have(std::size_t n) const { return pos + n <= end; }
  std::uint8_t u8() { return bytes[pos++]; }
  std::uint32_t u32() {
    const std::uint32_t v = static_cast<std::uint32_t>(bytes[pos]) |
                            (static_cast<std::uint32_t>(bytes[pos + 1]) << 8) |
                            (static_cast<std::uint32_t>(bytes[pos + 2]) << 16) |
                            (static_cast<std::uint32_t>(bytes[pos + 3]) << 24);
    pos += 4;
    return v;
  }
};

// Memory or register operand from a ModRM byte (32-bit addressing).
// Returns false when the window truncates the encoding.
bool decode_modrm(Cursor& c, bool wide, std::string& reg_out, std::string& rm_out) {
  if (!c.have(1)) return false;
  const std::uint8_t modrm = c.u8();
  const unsigned mod = modrm >> 6;
  const unsigned reg = (modrm >> 3) & 7;
  const unsigned rm = modrm & 7;
  reg_out = wide ? kReg32[reg] : kReg8[reg];

  if (mod == 3) {
    rm_out = wide ? kReg32[rm] : kReg8[rm];
    return true;
  }

  std::string base;
  bool have_base = true;
  if (rm == 4) {  // SIB follows
    if (!c.have(1)) return false;
    const std::uint8_t sib = c.u8();
    const unsigned scale = sib >> 6;
    const unsigned index = (sib >> 3) & 7;
    const unsigned sib_base = sib & 7;
    if (sib_base == 5 && mod == 0) {
      have_base = false;
    } else {
      base = kReg32[sib_base];
    }
    if (index != 4) {
      std::string idx = std::string(kReg32[index]) + "*" + std::to_string(1u << scale);
      base = have_base && !base.empty() ? base + "+" + idx : idx;
      have_base = true;
    }
    if (sib_base == 5 && mod == 0) {
      if (!c.have(4)) return false;
      const std::uint32_t disp = c.u32();
      base = base.empty() ? hex32(disp) : base + "+" + hex32(disp);
      rm_out = std::string(wide ? "dword" : "byte") + " [" + base + "]";
      return true;
    }
  } else if (rm == 5 && mod == 0) {  // absolute disp32
    if (!c.have(4)) return false;
    rm_out = std::string(wide ? "dword" : "byte") + " [" + hex32(c.u32()) + "]";
    return true;
  } else {
    base = kReg32[rm];
  }

  if (mod == 1) {
    if (!c.have(1)) return false;
    const std::int8_t disp = static_cast<std::int8_t>(c.u8());
    if (disp >= 0) {
      base += "+" + hex32(static_cast<std::uint32_t>(disp));
    } else {
      base += "-" + hex32(static_cast<std::uint32_t>(-static_cast<std::int32_t>(disp)));
    }
  } else if (mod == 2) {
    if (!c.have(4)) return false;
    base += "+" + hex32(c.u32());
  }
  (void)have_base;
  rm_out = std::string(wide ? "dword" : "byte") + " [" + base + "]";
  return true;
}

// Relative branch targets are rendered in the sweep's own offset space with
// 32-bit wraparound, the way a disassembler pinned at the file offset would.
std::string rel_target(std::size_t insn_offset, std::size_t length, std::int32_t rel) {
  const std::uint32_t base = static_cast<std::uint32_t>(insn_offset + length);
  return hex32(base + static_cast<std::uint32_t>(rel));
}

// Decodes one instruction at c.pos; returns false when truncated.
bool decode_one(Cursor& c, Instruction& out) {
  const std::size_t start = c.pos;
  out.offset = start;
  if (!c.have(1)) return false;
  const std::uint8_t op = c.u8();

  auto finish = [&](std::string mnemonic, std::string operands) {
    out.mnemonic = std::move(mnemonic);
    out.operand_text = std::move(operands);
    out.length = c.pos - start;
    return true;
  };

  if (op >= 0x50 && op <= 0x57) return finish("push", kReg32[op - 0x50]);
  if (op == 0x6a) {
    if (!c.have(1)) return false;
    return finish("push", hex8(c.u8()));
  }
  if (op == 0x68) {
    if (!c.have(4)) return false;
    return finish("push", hex32(c.u32()));
  }
  if (op == 0xe8) {
    if (!c.have(4)) return false;
    const auto rel = static_cast<std::int32_t>(c.u32());
    return finish("call", rel_target(start, 5, rel));
  }
  if (op == 0xe9) {
    if (!c.have(4)) return false;
    const auto rel = static_cast<std::int32_t>(c.u32());
    return finish("jmp", rel_target(start, 5, rel));
  }
  if (op == 0xeb || op == 0xe0 || op == 0xe2 || (op >= 0x70 && op <= 0x7f)) {
    if (!c.have(1)) return false;
    const auto rel = static_cast<std::int8_t>(c.u8());
    const char* m = op == 0xeb ? "jmp" : op == 0xe0 ? "loopne" : op == 0xe2 ? "loop"
                                                                            : kJcc[op - 0x70];
    return finish(m, rel_target(start, 2, rel));
  }
  if (op >= 0x88 && op <= 0x8b) {
    const bool wide = op & 1;
    const bool reg_is_dest = op & 2;
    std::string reg, rm;
    if (!decode_modrm(c, wide, reg, rm)) return false;
    return finish("mov", reg_is_dest ? reg + ", " + rm : rm + ", " + reg);
  }
  if (op >= 0xb8 && op <= 0xbf) {
    if (!c.have(4)) return false;
    return finish("mov", std::string(kReg32[op - 0xb8]) + ", " + hex32(c.u32()));
  }
  if (op == 0xc3) return finish("ret", "");
  if (op == 0x90) return finish("nop", "");
  return finish("db", hex8(op));
}

}  // namespace

std::vector<Instruction> decode_window(const std::vector<std::uint8_t>& bytes,
                                       std::size_t offset, std::size_t window_end,
                                       std::size_t max_instructions) {
  if (offset >= bytes.size()) {
    throw InputError("decode: offset " + std::to_string(offset) + " beyond input of " +
                     std::to_string(bytes.size()) + " bytes");
  }
  Cursor c{bytes, offset, std::min(window_end, bytes.size())};
  std::vector<Instruction> out;
  while (out.size() < max_instructions && c.pos < c.end) {
    Instruction insn;
    Cursor attempt = c;
    if (!decode_one(attempt, insn)) break;  // truncated mid-instruction
    c.pos = attempt.pos;
    out.push_back(std::move(insn));
  }
  return out;
}

std::vector<Instruction> decode_at(const std::vector<std::uint8_t>& bytes, std::size_t offset,
                                   std::size_t max_instructions) {
  return decode_window(bytes, offset, bytes.size(), max_instructions);
}

AnnotatedWindow annotate_window(const std::vector<std::uint8_t>& bytes, std::size_t offset,
                                std::size_t window) {
  if (window == 0) throw InputError("annotate_window: window must be positive");
  if (offset >= bytes.size()) {
    throw InputError("annotate_window: offset beyond input");
  }
  AnnotatedWindow out;
  out.start = offset;
  out.end = std::min(bytes.size(), offset + window);

  out.string_view.assign(out.end - out.start, '.');
  std::size_t run_start = 0;
  std::size_t run_len = 0;
  auto flush = [&]() {
    if (run_len >= 4) {
      for (std::size_t i = 0; i < run_len; ++i) {
        out.string_view[run_start + i] = static_cast<char>(bytes[out.start + run_start + i]);
      }
    }
    run_len = 0;
  };
  for (std::size_t i = 0; i < out.end - out.start; ++i) {
    const std::uint8_t b = bytes[out.start + i];
    if (b >= 0x20 && b <= 0x7e) {
      if (run_len == 0) run_start = i;
      ++run_len;
    } else {
      flush();
    }
  }
  flush();

  out.instructions = decode_window(bytes, out.start, out.end, out.end - out.start);
  return out;
}

}  // namespace byteprobe
