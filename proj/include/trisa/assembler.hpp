#pragma once

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "trisa/image.hpp"
#include "trisa/isa.hpp"

namespace trisa {

enum class AsmErrorKind {
  UnknownMnemonic,
  DuplicateLabel,
  UndefinedLabel,
  ImmediateOutOfRange,
  BadOperandCount,
  SyntaxError,
};

struct AsmError {
  AsmErrorKind kind = AsmErrorKind::SyntaxError;
  int line = 0;  // 1-based source line
  std::string message;
};

struct AsmOptions {
  // Mitigation hook: emit fence.spec immediately after every
  // conditional branch.
  bool speculation_barriers = false;
};

using AsmResult = std::variant<ProgramImage, AsmError>;

namespace asm_detail {

inline std::optional<unsigned> parse_gpr(const std::string& s) {
  static const std::map<std::string, unsigned> names = {
      {"zero", 0}, {"ra", 1},  {"sp", 2},  {"gp", 3},  {"tp", 4},
      {"t0", 5},   {"t1", 6},  {"t2", 7},  {"s0", 8},  {"fp", 8},
      {"s1", 9},   {"a0", 10}, {"a1", 11}, {"a2", 12}, {"a3", 13},
      {"a4", 14},  {"a5", 15}, {"a6", 16}, {"a7", 17}, {"s2", 18},
      {"s3", 19},  {"s4", 20}, {"s5", 21}, {"s6", 22}, {"s7", 23},
      {"s8", 24},  {"s9", 25}, {"s10", 26}, {"s11", 27}, {"t3", 28},
      {"t4", 29},  {"t5", 30}, {"t6", 31}};
  if (s.size() >= 2 && s[0] == 'x') {
    char* end = nullptr;
    long v = std::strtol(s.c_str() + 1, &end, 10);
    if (*end == '\0' && v >= 0 && v < 32) return static_cast<unsigned>(v);
    return std::nullopt;
  }
  auto it = names.find(s);
  if (it != names.end()) return it->second;
  return std::nullopt;
}

inline std::optional<unsigned> parse_capreg(const std::string& s) {
  if (s.size() == 2 && s[0] == 'c' && s[1] >= '0' && s[1] <= '7')
    return static_cast<unsigned>(s[1] - '0');
  return std::nullopt;
}

inline std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split_operands(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  bool in_quote = false;
  for (char c : s) {
    if (c == '"') in_quote = !in_quote;
    if (c == ',' && !in_quote) {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  cur = trim(cur);
  if (!cur.empty()) out.push_back(cur);
  return out;
}

// Immediate operand: integer literal, 'c' char literal, or
// label[+/-const].
struct ImmExpr {
  std::optional<std::int64_t> literal;
  std::string label;
  std::int64_t offset = 0;
};

inline std::optional<ImmExpr> parse_imm_expr(const std::string& s) {
  ImmExpr e;
  if (s.empty()) return std::nullopt;
  if (s.size() >= 3 && s.front() == '\'' && s.back() == '\'') {
    if (s.size() != 3) return std::nullopt;
    e.literal = static_cast<std::int64_t>(static_cast<unsigned char>(s[1]));
    return e;
  }
  const bool starts_num = std::isdigit(static_cast<unsigned char>(s[0])) ||
                          s[0] == '-' || s[0] == '+';
  if (starts_num) {
    char* end = nullptr;
    errno = 0;
    long long v = std::strtoll(s.c_str(), &end, 0);
    if (*end != '\0') return std::nullopt;
    // Large unsigned hex constants.
    if (errno == ERANGE && s.size() > 2 && s[0] == '0' &&
        (s[1] == 'x' || s[1] == 'X')) {
      errno = 0;
      unsigned long long u = std::strtoull(s.c_str(), &end, 0);
      if (*end != '\0' || errno == ERANGE) return std::nullopt;
      e.literal = static_cast<std::int64_t>(u);
      return e;
    }
    e.literal = v;
    return e;
  }
  // label with optional +/- constant
  std::size_t pos = s.find_first_of("+-", 1);
  e.label = trim(pos == std::string::npos ? s : s.substr(0, pos));
  if (pos != std::string::npos) {
    char* end = nullptr;
    long long v = std::strtoll(s.c_str() + pos, &end, 0);
    if (*end != '\0') return std::nullopt;
    e.offset = v;
  }
  if (e.label.empty()) return std::nullopt;
  return e;
}

// off(reg) or (reg); reg may be a gpr or capability register.
struct MemRef {
  std::string offset_expr;  // may be empty or a register name for cload
  std::string reg;
};

inline std::optional<MemRef> parse_memref(const std::string& s) {
  std::size_t open = s.find('(');
  if (open == std::string::npos || s.back() != ')') return std::nullopt;
  MemRef m;
  m.offset_expr = trim(s.substr(0, open));
  m.reg = trim(s.substr(open + 1, s.size() - open - 2));
  if (m.reg.empty()) return std::nullopt;
  return m;
}

}  // namespace asm_detail

// Two-pass assembler. Pass 1 assigns addresses and collects symbols;
// pass 2 encodes instructions and resolves label references.
class Assembler {
 public:
  explicit Assembler(AsmOptions options = {}) : opt_(options) {}

  AsmResult assemble(const std::string& source) {
    items_.clear();
    symbols_.clear();
    err_.reset();
    parse(source);
    if (err_) return *err_;
    ProgramImage image = emit();
    if (err_) return *err_;
    return image;
  }

 private:
  struct Item {
    int line = 0;
    Zone zone = Zone::Dmz;
    Word addr = 0;
    // exactly one of:
    std::string mnemonic;                  // instruction
    std::vector<std::string> operands;
    std::vector<std::uint8_t> data;        // directive payload
    bool is_data = false;
    unsigned size = 0;
  };

  void fail(AsmErrorKind kind, int line, const std::string& msg) {
    if (!err_) err_ = AsmError{kind, line, msg};
  }

  static std::optional<Zone> zone_by_name(const std::string& s) {
    if (s == "green") return Zone::Green;
    if (s == "dmz") return Zone::Dmz;
    if (s == "kernel") return Zone::Kernel;
    return std::nullopt;
  }

  // Pass 1: tokenize, place items, record symbols.
  void parse(const std::string& source) {
    using namespace asm_detail;
    std::istringstream in(source);
    std::string raw_line;
    int line_no = 0;
    std::optional<Zone> zone;
    Word loc = 0;
    bool loc_valid = false;

    while (std::getline(in, raw_line)) {
      ++line_no;
      if (err_) return;
      std::string line = raw_line;
      // strip comment (not inside a string literal)
      bool quote = false;
      for (std::size_t i = 0; i < line.size(); ++i) {
        if (line[i] == '"') quote = !quote;
        if (line[i] == '#' && !quote) {
          line = line.substr(0, i);
          break;
        }
      }
      line = trim(line);
      while (!line.empty()) {
        // label definitions, possibly several per line
        std::size_t colon = line.find(':');
        std::size_t space = line.find_first_of(" \t");
        if (colon != std::string::npos &&
            (space == std::string::npos || colon < space)) {
          std::string label = trim(line.substr(0, colon));
          if (label.empty() || !valid_label(label)) {
            fail(AsmErrorKind::SyntaxError, line_no, "bad label '" + label + "'");
            return;
          }
          if (!zone || !loc_valid) {
            fail(AsmErrorKind::SyntaxError, line_no,
                 "label before .zone/.org placement");
            return;
          }
          if (symbols_.count(label)) {
            fail(AsmErrorKind::DuplicateLabel, line_no,
                 "duplicate label '" + label + "'");
            return;
          }
          symbols_[label] = loc;
          line = trim(line.substr(colon + 1));
          continue;
        }
        break;
      }
      if (line.empty()) continue;

      std::string mnemonic;
      std::string rest;
      std::size_t sp = line.find_first_of(" \t");
      if (sp == std::string::npos) {
        mnemonic = line;
      } else {
        mnemonic = line.substr(0, sp);
        rest = trim(line.substr(sp + 1));
      }
      std::transform(mnemonic.begin(), mnemonic.end(), mnemonic.begin(),
                     [](unsigned char c) { return std::tolower(c); });

      if (mnemonic == ".zone") {
        auto z = zone_by_name(rest);
        if (!z) {
          fail(AsmErrorKind::SyntaxError, line_no, "unknown zone '" + rest + "'");
          return;
        }
        zone = z;
        loc_valid = false;
        continue;
      }
      if (mnemonic == ".org") {
        auto e = parse_imm_expr(rest);
        if (!e || !e->literal) {
          fail(AsmErrorKind::SyntaxError, line_no, ".org needs a constant");
          return;
        }
        loc = static_cast<Word>(*e->literal);
        loc_valid = true;
        continue;
      }
      if (!zone || !loc_valid) {
        fail(AsmErrorKind::SyntaxError, line_no,
             "code/data before .zone and .org");
        return;
      }

      Item item;
      item.line = line_no;
      item.zone = *zone;
      item.addr = loc;

      if (mnemonic == ".byte" || mnemonic == ".word" || mnemonic == ".dword") {
        const unsigned width = mnemonic == ".byte" ? 1
                               : mnemonic == ".word" ? 4
                                                     : 8;
        for (const std::string& op : split_operands(rest)) {
          auto e = parse_imm_expr(op);
          if (!e || !e->literal) {
            fail(AsmErrorKind::SyntaxError, line_no, "bad data value '" + op + "'");
            return;
          }
          const std::uint64_t v = static_cast<std::uint64_t>(*e->literal);
          for (unsigned b = 0; b < width; ++b)
            item.data.push_back(static_cast<std::uint8_t>(v >> (8 * b)));
        }
        item.is_data = true;
        item.size = static_cast<unsigned>(item.data.size());
      } else if (mnemonic == ".ascii") {
        if (rest.size() < 2 || rest.front() != '"' || rest.back() != '"') {
          fail(AsmErrorKind::SyntaxError, line_no, ".ascii needs a quoted string");
          return;
        }
        for (char c : rest.substr(1, rest.size() - 2))
          item.data.push_back(static_cast<std::uint8_t>(c));
        item.is_data = true;
        item.size = static_cast<unsigned>(item.data.size());
      } else if (mnemonic[0] == '.') {
        fail(AsmErrorKind::UnknownMnemonic, line_no,
             "unknown directive '" + mnemonic + "'");
        return;
      } else {
        item.mnemonic = mnemonic;
        item.operands = split_operands(rest);
        item.size = instruction_size(mnemonic);
        if (item.size == 0) {
          fail(AsmErrorKind::UnknownMnemonic, line_no,
               "unknown mnemonic '" + mnemonic + "'");
          return;
        }
        const bool is_branch = branch_f3(mnemonic).has_value();
        if (opt_.speculation_barriers && is_branch) {
          items_.push_back(item);
          loc += item.size;
          Item barrier;
          barrier.line = line_no;
          barrier.zone = *zone;
          barrier.addr = loc;
          barrier.mnemonic = "fence.spec";
          barrier.size = 4;
          items_.push_back(barrier);
          loc += 4;
          continue;
        }
      }
      items_.push_back(item);
      loc += item.size;
    }
  }

  static bool valid_label(const std::string& s) {
    if (!std::isalpha(static_cast<unsigned char>(s[0])) && s[0] != '_')
      return false;
    return std::all_of(s.begin(), s.end(), [](unsigned char c) {
      return std::isalnum(c) || c == '_' || c == '.';
    });
  }

  static std::optional<unsigned> branch_f3(const std::string& m) {
    if (m == "beq") return 0u;
    if (m == "bne") return 1u;
    if (m == "blt") return 4u;
    if (m == "bge") return 5u;
    if (m == "bltu") return 6u;
    if (m == "bgeu") return 7u;
    return std::nullopt;
  }

  static unsigned instruction_size(const std::string& m) {
    static const std::map<std::string, unsigned> sizes = {
        {"li", 8}, {"la", 8}};
    auto it = sizes.find(m);
    if (it != sizes.end()) return it->second;
    if (op_of(m) || m == "j" || m == "nop" || m == "mv" || m == "ret")
      return 4;
    return 0;
  }

  static std::optional<Op> op_of(const std::string& m) {
    static const std::map<std::string, Op> ops = {
        {"lui", Op::LUI},       {"auipc", Op::AUIPC},
        {"jal", Op::JAL},       {"jalr", Op::JALR},
        {"beq", Op::BEQ},       {"bne", Op::BNE},
        {"blt", Op::BLT},       {"bge", Op::BGE},
        {"bltu", Op::BLTU},     {"bgeu", Op::BGEU},
        {"lb", Op::LB},         {"lh", Op::LH},
        {"lw", Op::LW},         {"ld", Op::LD},
        {"lbu", Op::LBU},       {"lhu", Op::LHU},
        {"lwu", Op::LWU},       {"sb", Op::SB},
        {"sh", Op::SH},         {"sw", Op::SW},
        {"sd", Op::SD},         {"addi", Op::ADDI},
        {"slti", Op::SLTI},     {"sltiu", Op::SLTIU},
        {"xori", Op::XORI},     {"ori", Op::ORI},
        {"andi", Op::ANDI},     {"slli", Op::SLLI},
        {"srli", Op::SRLI},     {"srai", Op::SRAI},
        {"addiw", Op::ADDIW},   {"slliw", Op::SLLIW},
        {"srliw", Op::SRLIW},   {"sraiw", Op::SRAIW},
        {"add", Op::ADD},       {"sub", Op::SUB},
        {"sll", Op::SLL},       {"slt", Op::SLT},
        {"sltu", Op::SLTU},     {"xor", Op::XOR},
        {"srl", Op::SRL},       {"sra", Op::SRA},
        {"or", Op::OR},         {"and", Op::AND},
        {"addw", Op::ADDW},     {"subw", Op::SUBW},
        {"sllw", Op::SLLW},     {"srlw", Op::SRLW},
        {"sraw", Op::SRAW},     {"mul", Op::MUL},
        {"fence", Op::FENCE},   {"ecall", Op::ECALL},
        {"ebreak", Op::EBREAK}, {"rdcycle", Op::RDCYCLE},
        {"cflush", Op::CFLUSH}, {"fence.spec", Op::FENCE_SPEC},
        {"csetbounds", Op::CSETBOUNDS}, {"candperm", Op::CANDPERM},
        {"cseal", Op::CSEAL},   {"cunseal", Op::CUNSEAL},
        {"cload", Op::CLOAD},   {"cstore", Op::CSTORE},
        {"cmove", Op::CMOVE},   {"cgettag", Op::CGETTAG}};
    auto it = ops.find(m);
    if (it == ops.end()) return std::nullopt;
    return it->second;
  }

  std::optional<std::int64_t> resolve(const asm_detail::ImmExpr& e, int line) {
    if (e.literal) return *e.literal;
    auto it = symbols_.find(e.label);
    if (it == symbols_.end()) {
      fail(AsmErrorKind::UndefinedLabel, line,
           "undefined label '" + e.label + "'");
      return std::nullopt;
    }
    return static_cast<std::int64_t>(it->second) + e.offset;
  }

  std::optional<std::int64_t> imm_operand(const std::string& s, int line) {
    auto e = asm_detail::parse_imm_expr(s);
    if (!e) {
      fail(AsmErrorKind::SyntaxError, line, "bad immediate '" + s + "'");
      return std::nullopt;
    }
    return resolve(*e, line);
  }

  std::optional<unsigned> gpr_operand(const std::string& s, int line) {
    auto r = asm_detail::parse_gpr(s);
    if (!r) fail(AsmErrorKind::SyntaxError, line, "bad register '" + s + "'");
    return r;
  }

  std::optional<unsigned> cap_operand(const std::string& s, int line) {
    auto r = asm_detail::parse_capreg(s);
    if (!r)
      fail(AsmErrorKind::SyntaxError, line, "bad capability register '" + s + "'");
    return r;
  }

  bool check_range(std::int64_t v, std::int64_t lo, std::int64_t hi, int line,
                   const char* what) {
    if (v < lo || v > hi) {
      fail(AsmErrorKind::ImmediateOutOfRange, line,
           std::string(what) + " out of range: " + std::to_string(v));
      return false;
    }
    return true;
  }

  // Pass 2.
  ProgramImage emit() {
    using namespace asm_detail;
    ProgramImage image;
    image.symbols = symbols_;

    auto section_for = [&](Zone z, Word addr) -> Section& {
      if (!image.sections.empty()) {
        Section& last = image.sections.back();
        if (last.zone == z && last.start + last.bytes.size() == addr)
          return last;
      }
      image.sections.push_back({z, addr, {}});
      return image.sections.back();
    };

    for (const Item& item : items_) {
      if (err_) break;
      Section& sec = section_for(item.zone, item.addr);
      if (item.is_data) {
        sec.bytes.insert(sec.bytes.end(), item.data.begin(), item.data.end());
        continue;
      }
      std::vector<std::uint32_t> words = encode_item(item);
      if (err_) break;
      for (std::uint32_t w : words) {
        sec.bytes.push_back(static_cast<std::uint8_t>(w));
        sec.bytes.push_back(static_cast<std::uint8_t>(w >> 8));
        sec.bytes.push_back(static_cast<std::uint8_t>(w >> 16));
        sec.bytes.push_back(static_cast<std::uint8_t>(w >> 24));
      }
    }
    if (err_) return image;

    auto entry_it = symbols_.find("_start");
    if (entry_it != symbols_.end()) {
      image.entry = entry_it->second;
    } else {
      Word best = ~Word(0);
      for (const Section& s : image.sections)
        best = std::min(best, s.start);
      image.entry = image.sections.empty() ? 0 : best;
    }
    return image;
  }

  std::vector<std::uint32_t> encode_item(const Item& item) {
    using namespace asm_detail;
    const int line = item.line;
    const std::string& m = item.mnemonic;
    const std::vector<std::string>& ops = item.operands;
    Instruction in{};

    auto need = [&](std::size_t n) {
      if (ops.size() != n) {
        fail(AsmErrorKind::BadOperandCount, line,
             m + " expects " + std::to_string(n) + " operands, got " +
                 std::to_string(ops.size()));
        return false;
      }
      return true;
    };

    // pseudo-instructions
    if (m == "nop") {
      if (!need(0)) return {};
      in.op = Op::ADDI;
      return {encode(in)};
    }
    if (m == "mv") {
      if (!need(2)) return {};
      auto rd = gpr_operand(ops[0], line), rs = gpr_operand(ops[1], line);
      if (!rd || !rs) return {};
      in.op = Op::ADDI;
      in.rd = *rd;
      in.rs1 = *rs;
      return {encode(in)};
    }
    if (m == "ret") {
      if (!need(0)) return {};
      in.op = Op::JALR;
      in.rs1 = 1;
      return {encode(in)};
    }
    if (m == "j") {
      if (!need(1)) return {};
      auto target = imm_operand(ops[0], line);
      if (!target) return {};
      const std::int64_t off = *target - static_cast<std::int64_t>(item.addr);
      if (!check_range(off, -(1 << 20), (1 << 20) - 1, line, "jump offset"))
        return {};
      in.op = Op::JAL;
      in.imm = off;
      return {encode(in)};
    }
    if (m == "li" || m == "la") {
      if (!need(2)) return {};
      auto rd = gpr_operand(ops[0], line);
      auto value = imm_operand(ops[1], line);
      if (!rd || !value) return {};
      if (!check_range(*value, INT32_MIN, INT32_MAX, line, "li immediate"))
        return {};
      const std::int64_t hi = (*value + 0x800) >> 12;
      const std::int64_t lo = *value - (hi << 12);
      Instruction lui{};
      lui.op = Op::LUI;
      lui.rd = *rd;
      lui.imm = isa_detail::sext(static_cast<std::uint64_t>(hi & 0xFFFFF) << 12, 32);
      Instruction addi{};
      addi.op = Op::ADDI;
      addi.rd = *rd;
      addi.rs1 = *rd;
      addi.imm = lo;
      return {encode(lui), encode(addi)};
    }

    auto op = op_of(m);
    if (!op) {
      fail(AsmErrorKind::UnknownMnemonic, line, "unknown mnemonic '" + m + "'");
      return {};
    }
    in.op = *op;

    switch (*op) {
      case Op::LUI:
      case Op::AUIPC: {
        if (!need(2)) return {};
        auto rd = gpr_operand(ops[0], line);
        auto v = imm_operand(ops[1], line);
        if (!rd || !v) return {};
        if (!check_range(*v, 0, 0xFFFFF, line, "upper immediate")) return {};
        in.rd = *rd;
        in.imm = isa_detail::sext(static_cast<std::uint64_t>(*v) << 12, 32);
        return {encode(in)};
      }
      case Op::JAL: {
        if (!need(2)) return {};
        auto rd = gpr_operand(ops[0], line);
        auto target = imm_operand(ops[1], line);
        if (!rd || !target) return {};
        std::int64_t off = *target;
        // Label targets are absolute; numeric targets are pc-relative.
        if (asm_detail::parse_imm_expr(ops[1])->label.empty() == false)
          off -= static_cast<std::int64_t>(item.addr);
        if (!check_range(off, -(1 << 20), (1 << 20) - 1, line, "jump offset"))
          return {};
        in.rd = *rd;
        in.imm = off;
        return {encode(in)};
      }
      case Op::JALR: {
        if (!need(2)) return {};
        auto rd = gpr_operand(ops[0], line);
        auto mr = parse_memref(ops[1]);
        if (!rd || !mr) {
          if (!mr) fail(AsmErrorKind::SyntaxError, line, "jalr needs off(reg)");
          return {};
        }
        auto rs1 = gpr_operand(mr->reg, line);
        std::int64_t off = 0;
        if (!mr->offset_expr.empty()) {
          auto v = imm_operand(mr->offset_expr, line);
          if (!v) return {};
          off = *v;
        }
        if (!rs1 || !check_range(off, -2048, 2047, line, "offset")) return {};
        in.rd = *rd;
        in.rs1 = *rs1;
        in.imm = off;
        return {encode(in)};
      }
      case Op::BEQ:
      case Op::BNE:
      case Op::BLT:
      case Op::BGE:
      case Op::BLTU:
      case Op::BGEU: {
        if (!need(3)) return {};
        auto rs1 = gpr_operand(ops[0], line), rs2 = gpr_operand(ops[1], line);
        auto target = imm_operand(ops[2], line);
        if (!rs1 || !rs2 || !target) return {};
        std::int64_t off = *target;
        if (asm_detail::parse_imm_expr(ops[2])->label.empty() == false)
          off -= static_cast<std::int64_t>(item.addr);
        if (!check_range(off, -4096, 4095, line, "branch offset")) return {};
        in.rs1 = *rs1;
        in.rs2 = *rs2;
        in.imm = off;
        return {encode(in)};
      }
      case Op::LB:
      case Op::LH:
      case Op::LW:
      case Op::LD:
      case Op::LBU:
      case Op::LHU:
      case Op::LWU: {
        if (!need(2)) return {};
        auto rd = gpr_operand(ops[0], line);
        auto mr = parse_memref(ops[1]);
        if (!rd || !mr) {
          if (!mr) fail(AsmErrorKind::SyntaxError, line, "load needs off(reg)");
          return {};
        }
        auto rs1 = gpr_operand(mr->reg, line);
        std::int64_t off = 0;
        if (!mr->offset_expr.empty()) {
          auto v = imm_operand(mr->offset_expr, line);
          if (!v) return {};
          off = *v;
        }
        if (!rs1 || !check_range(off, -2048, 2047, line, "offset")) return {};
        in.rd = *rd;
        in.rs1 = *rs1;
        in.imm = off;
        return {encode(in)};
      }
      case Op::SB:
      case Op::SH:
      case Op::SW:
      case Op::SD: {
        if (!need(2)) return {};
        auto rs2 = gpr_operand(ops[0], line);
        auto mr = parse_memref(ops[1]);
        if (!rs2 || !mr) {
          if (!mr) fail(AsmErrorKind::SyntaxError, line, "store needs off(reg)");
          return {};
        }
        auto rs1 = gpr_operand(mr->reg, line);
        std::int64_t off = 0;
        if (!mr->offset_expr.empty()) {
          auto v = imm_operand(mr->offset_expr, line);
          if (!v) return {};
          off = *v;
        }
        if (!rs1 || !check_range(off, -2048, 2047, line, "offset")) return {};
        in.rs1 = *rs1;
        in.rs2 = *rs2;
        in.imm = off;
        return {encode(in)};
      }
      case Op::ADDI:
      case Op::SLTI:
      case Op::SLTIU:
      case Op::XORI:
      case Op::ORI:
      case Op::ANDI:
      case Op::ADDIW: {
        if (!need(3)) return {};
        auto rd = gpr_operand(ops[0], line), rs1 = gpr_operand(ops[1], line);
        auto v = imm_operand(ops[2], line);
        if (!rd || !rs1 || !v) return {};
        if (!check_range(*v, -2048, 2047, line, "immediate")) return {};
        in.rd = *rd;
        in.rs1 = *rs1;
        in.imm = *v;
        return {encode(in)};
      }
      case Op::SLLI:
      case Op::SRLI:
      case Op::SRAI: {
        if (!need(3)) return {};
        auto rd = gpr_operand(ops[0], line), rs1 = gpr_operand(ops[1], line);
        auto v = imm_operand(ops[2], line);
        if (!rd || !rs1 || !v) return {};
        if (!check_range(*v, 0, 63, line, "shift amount")) return {};
        in.rd = *rd;
        in.rs1 = *rs1;
        in.imm = *v;
        return {encode(in)};
      }
      case Op::SLLIW:
      case Op::SRLIW:
      case Op::SRAIW: {
        if (!need(3)) return {};
        auto rd = gpr_operand(ops[0], line), rs1 = gpr_operand(ops[1], line);
        auto v = imm_operand(ops[2], line);
        if (!rd || !rs1 || !v) return {};
        if (!check_range(*v, 0, 31, line, "shift amount")) return {};
        in.rd = *rd;
        in.rs1 = *rs1;
        in.imm = *v;
        return {encode(in)};
      }
      case Op::ADD:
      case Op::SUB:
      case Op::SLL:
      case Op::SLT:
      case Op::SLTU:
      case Op::XOR:
      case Op::SRL:
      case Op::SRA:
      case Op::OR:
      case Op::AND:
      case Op::ADDW:
      case Op::SUBW:
      case Op::SLLW:
      case Op::SRLW:
      case Op::SRAW:
      case Op::MUL: {
        if (!need(3)) return {};
        auto rd = gpr_operand(ops[0], line), rs1 = gpr_operand(ops[1], line),
             rs2 = gpr_operand(ops[2], line);
        if (!rd || !rs1 || !rs2) return {};
        in.rd = *rd;
        in.rs1 = *rs1;
        in.rs2 = *rs2;
        return {encode(in)};
      }
      case Op::FENCE:
      case Op::ECALL:
      case Op::EBREAK:
      case Op::FENCE_SPEC:
        if (!need(0)) return {};
        return {encode(in)};
      case Op::RDCYCLE: {
        if (!need(1)) return {};
        auto rd = gpr_operand(ops[0], line);
        if (!rd) return {};
        in.rd = *rd;
        return {encode(in)};
      }
      case Op::CFLUSH: {
        if (!need(1)) return {};
        auto rs1 = gpr_operand(ops[0], line);
        if (!rs1) return {};
        in.rs1 = *rs1;
        return {encode(in)};
      }
      case Op::CSETBOUNDS:
      case Op::CANDPERM: {
        if (!need(3)) return {};
        auto cd = cap_operand(ops[0], line), cs = cap_operand(ops[1], line);
        auto rs = gpr_operand(ops[2], line);
        if (!cd || !cs || !rs) return {};
        in.rd = *cd;
        in.rs1 = *cs;
        in.rs2 = *rs;
        return {encode(in)};
      }
      case Op::CSEAL:
      case Op::CUNSEAL: {
        if (!need(3)) return {};
        auto cd = cap_operand(ops[0], line), cs = cap_operand(ops[1], line),
             ct = cap_operand(ops[2], line);
        if (!cd || !cs || !ct) return {};
        in.rd = *cd;
        in.rs1 = *cs;
        in.rs2 = *ct;
        return {encode(in)};
      }
      case Op::CLOAD: {
        if (!need(2)) return {};
        auto rd = gpr_operand(ops[0], line);
        auto mr = asm_detail::parse_memref(ops[1]);
        if (!rd || !mr) {
          if (!mr)
            fail(AsmErrorKind::SyntaxError, line, "cload needs [idx](cs)");
          return {};
        }
        auto cs = cap_operand(mr->reg, line);
        unsigned idx = 0;
        if (!mr->offset_expr.empty()) {
          auto r = gpr_operand(mr->offset_expr, line);
          if (!r) return {};
          idx = *r;
        }
        if (!cs) return {};
        in.rd = *rd;
        in.rs1 = *cs;
        in.rs2 = idx;
        return {encode(in)};
      }
      case Op::CSTORE: {
        if (!need(2)) return {};
        auto rs = gpr_operand(ops[0], line);
        auto mr = asm_detail::parse_memref(ops[1]);
        if (!rs || !mr) {
          if (!mr)
            fail(AsmErrorKind::SyntaxError, line, "cstore needs [idx](cs)");
          return {};
        }
        auto cs = cap_operand(mr->reg, line);
        unsigned idx = 0;
        if (!mr->offset_expr.empty()) {
          auto r = gpr_operand(mr->offset_expr, line);
          if (!r) return {};
          idx = *r;
        }
        if (!cs) return {};
        in.rd = idx;  // index register rides in the rd field
        in.rs1 = *cs;
        in.rs2 = *rs;
        return {encode(in)};
      }
      case Op::CMOVE: {
        if (!need(2)) return {};
        auto cd = cap_operand(ops[0], line), cs = cap_operand(ops[1], line);
        if (!cd || !cs) return {};
        in.rd = *cd;
        in.rs1 = *cs;
        return {encode(in)};
      }
      case Op::CGETTAG: {
        if (!need(2)) return {};
        auto rd = gpr_operand(ops[0], line);
        auto cs = cap_operand(ops[1], line);
        if (!rd || !cs) return {};
        in.rd = *rd;
        in.rs1 = *cs;
        return {encode(in)};
      }
      default:
        fail(AsmErrorKind::UnknownMnemonic, line, "unsupported '" + m + "'");
        return {};
    }
  }

  AsmOptions opt_;
  std::vector<Item> items_;
  std::map<std::string, Word> symbols_;
  std::optional<AsmError> err_;
};

inline AsmResult assemble(const std::string& source, AsmOptions opt = {}) {
  Assembler a(opt);
  return a.assemble(source);
}

inline std::string format_instruction(const Instruction& in);

// Listing that reassembles to byte-identical sections. Data that does
// not decode is emitted as .word / .byte.
inline std::string disassemble(const ProgramImage& image) {
  std::ostringstream out;
  char buf[64];
  for (const Section& sec : image.sections) {
    out << ".zone " << zone_name(sec.zone) << "\n";
    std::snprintf(buf, sizeof buf, ".org 0x%llx\n",
                  static_cast<unsigned long long>(sec.start));
    out << buf;
    std::size_t i = 0;
    const auto& b = sec.bytes;
    for (; i + 4 <= b.size(); i += 4) {
      const std::uint32_t raw = std::uint32_t(b[i]) |
                                (std::uint32_t(b[i + 1]) << 8) |
                                (std::uint32_t(b[i + 2]) << 16) |
                                (std::uint32_t(b[i + 3]) << 24);
      auto in = decode(raw);
      if (!in) {
        std::snprintf(buf, sizeof buf, "    .word 0x%08x\n", raw);
        out << buf;
        continue;
      }
      out << "    " << format_instruction(*in) << "\n";
    }
    for (; i < b.size(); ++i) {
      std::snprintf(buf, sizeof buf, "    .byte 0x%02x\n", b[i]);
      out << buf;
    }
  }
  return out.str();
}

inline std::string format_instruction(const Instruction& in) {
  std::ostringstream s;
  auto x = [](unsigned r) { return "x" + std::to_string(r); };
  auto c = [](unsigned r) { return "c" + std::to_string(r); };
  const std::string m{op_mnemonic(in.op)};
  switch (in.op) {
    case Op::LUI:
    case Op::AUIPC: {
      char buf[32];
      std::snprintf(buf, sizeof buf, "0x%llx",
                    static_cast<unsigned long long>(
                        (static_cast<std::uint64_t>(in.imm) >> 12) & 0xFFFFF));
      s << m << " " << x(in.rd) << ", " << buf;
      break;
    }
    case Op::JAL:
      s << m << " " << x(in.rd) << ", " << in.imm;
      break;
    case Op::JALR:
      s << m << " " << x(in.rd) << ", " << in.imm << "(" << x(in.rs1) << ")";
      break;
    case Op::BEQ:
    case Op::BNE:
    case Op::BLT:
    case Op::BGE:
    case Op::BLTU:
    case Op::BGEU:
      s << m << " " << x(in.rs1) << ", " << x(in.rs2) << ", " << in.imm;
      break;
    case Op::LB:
    case Op::LH:
    case Op::LW:
    case Op::LD:
    case Op::LBU:
    case Op::LHU:
    case Op::LWU:
      s << m << " " << x(in.rd) << ", " << in.imm << "(" << x(in.rs1) << ")";
      break;
    case Op::SB:
    case Op::SH:
    case Op::SW:
    case Op::SD:
      s << m << " " << x(in.rs2) << ", " << in.imm << "(" << x(in.rs1) << ")";
      break;
    case Op::ADDI:
    case Op::SLTI:
    case Op::SLTIU:
    case Op::XORI:
    case Op::ORI:
    case Op::ANDI:
    case Op::SLLI:
    case Op::SRLI:
    case Op::SRAI:
    case Op::ADDIW:
    case Op::SLLIW:
    case Op::SRLIW:
    case Op::SRAIW:
      s << m << " " << x(in.rd) << ", " << x(in.rs1) << ", " << in.imm;
      break;
    case Op::ADD:
    case Op::SUB:
    case Op::SLL:
    case Op::SLT:
    case Op::SLTU:
    case Op::XOR:
    case Op::SRL:
    case Op::SRA:
    case Op::OR:
    case Op::AND:
    case Op::ADDW:
    case Op::SUBW:
    case Op::SLLW:
    case Op::SRLW:
    case Op::SRAW:
    case Op::MUL:
      s << m << " " << x(in.rd) << ", " << x(in.rs1) << ", " << x(in.rs2);
      break;
    case Op::FENCE:
    case Op::ECALL:
    case Op::EBREAK:
    case Op::FENCE_SPEC:
      s << m;
      break;
    case Op::RDCYCLE:
      s << m << " " << x(in.rd);
      break;
    case Op::CFLUSH:
      s << m << " " << x(in.rs1);
      break;
    case Op::CSETBOUNDS:
    case Op::CANDPERM:
      s << m << " " << c(in.rd) << ", " << c(in.rs1) << ", " << x(in.rs2);
      break;
    case Op::CSEAL:
    case Op::CUNSEAL:
      s << m << " " << c(in.rd) << ", " << c(in.rs1) << ", " << c(in.rs2);
      break;
    case Op::CLOAD:
      s << m << " " << x(in.rd) << ", " << x(in.rs2) << "(" << c(in.rs1) << ")";
      break;
    case Op::CSTORE:
      s << m << " " << x(in.rs2) << ", " << x(in.rd) << "(" << c(in.rs1) << ")";
      break;
    case Op::CMOVE:
      s << m << " " << c(in.rd) << ", " << c(in.rs1);
      break;
    case Op::CGETTAG:
      s << m << " " << x(in.rd) << ", " << c(in.rs1);
      break;
  }
  return s.str();
}

}  // namespace trisa
