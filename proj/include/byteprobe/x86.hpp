#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace byteprobe {

// One decoded instruction.  Unsupported opcodes decode as 1-byte "db" so a
// sweep can start anywhere, including mid-instruction.
struct Instruction {
  std::size_t offset = 0;
  std::size_t length = 1;
  std::string mnemonic;
  std::string operand_text;

  std::string text() const {
    return operand_text.empty() ? mnemonic : mnemonic + " " + operand_text;
  }
};

// 32-bit linear sweep from `offset` to the end of `bytes`, up to
// max_instructions.  Stops early (partial list) when the window truncates an
// instruction mid-encoding.
std::vector<Instruction> decode_at(const std::vector<std::uint8_t>& bytes, std::size_t offset,
                                   std::size_t max_instructions);

// Same sweep restricted to [offset, window_end).
std::vector<Instruction> decode_window(const std::vector<std::uint8_t>& bytes,
                                       std::size_t offset, std::size_t window_end,
                                       std::size_t max_instructions);

struct AnnotatedWindow {
  std::size_t start = 0;
  std::size_t end = 0;
  // Same length as the window: printable runs of >= 4 chars are kept, every
  // other byte renders as '.'.
  std::string string_view;
  std::vector<Instruction> instructions;
};

// Dual rendering of bytes[offset, offset+window): strings and instructions
// over identical byte coverage.
AnnotatedWindow annotate_window(const std::vector<std::uint8_t>& bytes, std::size_t offset,
                                std::size_t window);

}  // namespace byteprobe
