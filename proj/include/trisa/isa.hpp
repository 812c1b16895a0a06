#pragma once

#include <cstdint>
#include <optional>
#include <string_view>

#include "trisa/common.hpp"

namespace trisa {

// RV64I base + MUL + RDCYCLE + the custom instructions in the custom-0
// opcode space (0x0B): cflush, fence.spec and the capability set.
enum class Op {
  LUI, AUIPC, JAL, JALR,
  BEQ, BNE, BLT, BGE, BLTU, BGEU,
  LB, LH, LW, LD, LBU, LHU, LWU,
  SB, SH, SW, SD,
  ADDI, SLTI, SLTIU, XORI, ORI, ANDI, SLLI, SRLI, SRAI,
  ADDIW, SLLIW, SRLIW, SRAIW,
  ADD, SUB, SLL, SLT, SLTU, XOR, SRL, SRA, OR, AND,
  ADDW, SUBW, SLLW, SRLW, SRAW,
  MUL,
  FENCE, ECALL, EBREAK, RDCYCLE,
  CFLUSH, FENCE_SPEC,
  CSETBOUNDS, CANDPERM, CSEAL, CUNSEAL, CLOAD, CSTORE, CMOVE, CGETTAG,
};

struct Instruction {
  Op op;
  std::uint8_t rd = 0;
  std::uint8_t rs1 = 0;
  std::uint8_t rs2 = 0;
  std::int64_t imm = 0;
  std::uint32_t raw = 0;

  bool operator==(const Instruction& o) const {
    return op == o.op && rd == o.rd && rs1 == o.rs1 && rs2 == o.rs2 &&
           imm == o.imm && raw == o.raw;
  }
};

namespace isa_detail {

constexpr std::uint32_t kOpcodeMask = 0x7F;
constexpr std::uint32_t kCustom0 = 0x0B;

inline std::uint32_t bits(std::uint32_t v, unsigned hi, unsigned lo) {
  return (v >> lo) & ((1u << (hi - lo + 1)) - 1);
}

inline std::int64_t sext(std::uint64_t v, unsigned width) {
  const std::uint64_t m = 1ull << (width - 1);
  return static_cast<std::int64_t>((v ^ m) - m);
}

inline std::int64_t imm_i(std::uint32_t r) { return sext(bits(r, 31, 20), 12); }
inline std::int64_t imm_s(std::uint32_t r) {
  return sext((bits(r, 31, 25) << 5) | bits(r, 11, 7), 12);
}
inline std::int64_t imm_b(std::uint32_t r) {
  return sext((bits(r, 31, 31) << 12) | (bits(r, 7, 7) << 11) |
                  (bits(r, 30, 25) << 5) | (bits(r, 11, 8) << 1),
              13);
}
inline std::int64_t imm_u(std::uint32_t r) {
  return sext(bits(r, 31, 12) << 12, 32);
}
inline std::int64_t imm_j(std::uint32_t r) {
  return sext((bits(r, 31, 31) << 20) | (bits(r, 19, 12) << 12) |
                  (bits(r, 20, 20) << 11) | (bits(r, 30, 21) << 1),
              21);
}

}  // namespace isa_detail

// Decodes one 32-bit word. Returns nullopt for any unsupported or
// non-canonical encoding; the caller raises IllegalInstruction.
// Every accepted word satisfies encode(decode(w)) == w.
inline std::optional<Instruction> decode(std::uint32_t raw) {
  using namespace isa_detail;
  Instruction in;
  in.raw = raw;
  in.rd = static_cast<std::uint8_t>(bits(raw, 11, 7));
  in.rs1 = static_cast<std::uint8_t>(bits(raw, 19, 15));
  in.rs2 = static_cast<std::uint8_t>(bits(raw, 24, 20));
  const std::uint32_t opcode = raw & kOpcodeMask;
  const std::uint32_t f3 = bits(raw, 14, 12);
  const std::uint32_t f7 = bits(raw, 31, 25);

  auto ok = [&](Op op) {
    in.op = op;
    return std::optional<Instruction>(in);
  };

  switch (opcode) {
    case 0x37:
      in.imm = imm_u(raw);
      in.rs1 = in.rs2 = 0;
      return ok(Op::LUI);
    case 0x17:
      in.imm = imm_u(raw);
      in.rs1 = in.rs2 = 0;
      return ok(Op::AUIPC);
    case 0x6F:
      in.imm = imm_j(raw);
      in.rs1 = in.rs2 = 0;
      return ok(Op::JAL);
    case 0x67:
      if (f3 != 0) return std::nullopt;
      in.imm = imm_i(raw);
      in.rs2 = 0;
      return ok(Op::JALR);
    case 0x63: {
      in.imm = imm_b(raw);
      in.rd = 0;
      // rd field carries imm bits; recompute canonical rd = raw bits.
      switch (f3) {
        case 0: return ok(Op::BEQ);
        case 1: return ok(Op::BNE);
        case 4: return ok(Op::BLT);
        case 5: return ok(Op::BGE);
        case 6: return ok(Op::BLTU);
        case 7: return ok(Op::BGEU);
        default: return std::nullopt;
      }
    }
    case 0x03: {
      in.imm = imm_i(raw);
      in.rs2 = 0;
      switch (f3) {
        case 0: return ok(Op::LB);
        case 1: return ok(Op::LH);
        case 2: return ok(Op::LW);
        case 3: return ok(Op::LD);
        case 4: return ok(Op::LBU);
        case 5: return ok(Op::LHU);
        case 6: return ok(Op::LWU);
        default: return std::nullopt;
      }
    }
    case 0x23: {
      in.imm = imm_s(raw);
      in.rd = 0;
      switch (f3) {
        case 0: return ok(Op::SB);
        case 1: return ok(Op::SH);
        case 2: return ok(Op::SW);
        case 3: return ok(Op::SD);
        default: return std::nullopt;
      }
    }
    case 0x13: {
      in.imm = imm_i(raw);
      in.rs2 = 0;
      switch (f3) {
        case 0: return ok(Op::ADDI);
        case 2: return ok(Op::SLTI);
        case 3: return ok(Op::SLTIU);
        case 4: return ok(Op::XORI);
        case 6: return ok(Op::ORI);
        case 7: return ok(Op::ANDI);
        case 1:
          if (bits(raw, 31, 26) != 0) return std::nullopt;
          in.imm = bits(raw, 25, 20);
          return ok(Op::SLLI);
        case 5:
          in.imm = bits(raw, 25, 20);
          if (bits(raw, 31, 26) == 0x00) return ok(Op::SRLI);
          if (bits(raw, 31, 26) == 0x10) return ok(Op::SRAI);
          return std::nullopt;
        default: return std::nullopt;
      }
    }
    case 0x1B: {
      in.imm = imm_i(raw);
      in.rs2 = 0;
      switch (f3) {
        case 0: return ok(Op::ADDIW);
        case 1:
          if (f7 != 0) return std::nullopt;
          in.imm = bits(raw, 24, 20);
          return ok(Op::SLLIW);
        case 5:
          in.imm = bits(raw, 24, 20);
          if (f7 == 0x00) return ok(Op::SRLIW);
          if (f7 == 0x20) return ok(Op::SRAIW);
          return std::nullopt;
        default: return std::nullopt;
      }
    }
    case 0x33: {
      in.imm = 0;
      if (f7 == 0x01) {
        if (f3 == 0) return ok(Op::MUL);
        return std::nullopt;
      }
      switch (f3) {
        case 0:
          if (f7 == 0x00) return ok(Op::ADD);
          if (f7 == 0x20) return ok(Op::SUB);
          return std::nullopt;
        case 1: return f7 == 0 ? ok(Op::SLL) : std::nullopt;
        case 2: return f7 == 0 ? ok(Op::SLT) : std::nullopt;
        case 3: return f7 == 0 ? ok(Op::SLTU) : std::nullopt;
        case 4: return f7 == 0 ? ok(Op::XOR) : std::nullopt;
        case 5:
          if (f7 == 0x00) return ok(Op::SRL);
          if (f7 == 0x20) return ok(Op::SRA);
          return std::nullopt;
        case 6: return f7 == 0 ? ok(Op::OR) : std::nullopt;
        case 7: return f7 == 0 ? ok(Op::AND) : std::nullopt;
        default: return std::nullopt;
      }
    }
    case 0x3B: {
      in.imm = 0;
      switch (f3) {
        case 0:
          if (f7 == 0x00) return ok(Op::ADDW);
          if (f7 == 0x20) return ok(Op::SUBW);
          return std::nullopt;
        case 1: return f7 == 0 ? ok(Op::SLLW) : std::nullopt;
        case 5:
          if (f7 == 0x00) return ok(Op::SRLW);
          if (f7 == 0x20) return ok(Op::SRAW);
          return std::nullopt;
        default: return std::nullopt;
      }
    }
    case 0x0F:
      // Canonical "fence iorw, iorw" only.
      if (raw == 0x0FF0000F) {
        in.rd = in.rs1 = in.rs2 = 0;
        in.imm = 0;
        return ok(Op::FENCE);
      }
      return std::nullopt;
    case 0x73:
      if (raw == 0x00000073) return ok(Op::ECALL);
      if (raw == 0x00100073) return ok(Op::EBREAK);
      // csrrs rd, cycle, x0
      if ((raw & 0xFFFFF07F) == 0xC0002073) {
        in.rs1 = in.rs2 = 0;
        in.imm = 0;
        return ok(Op::RDCYCLE);
      }
      return std::nullopt;
    case kCustom0: {
      in.imm = 0;
      auto cap_idx_ok = [](std::uint8_t r) { return r < 8; };
      switch (f3) {
        case 0:  // cflush rs1
          if (f7 != 0 || in.rd != 0 || in.rs2 != 0) return std::nullopt;
          return ok(Op::CFLUSH);
        case 1:  // fence.spec
          if (raw != ((1u << 12) | kCustom0)) return std::nullopt;
          return ok(Op::FENCE_SPEC);
        case 2:  // csetbounds cd, cs, rs
          if (f7 != 0 || !cap_idx_ok(in.rd) || !cap_idx_ok(in.rs1))
            return std::nullopt;
          return ok(Op::CSETBOUNDS);
        case 3:  // candperm cd, cs, rs
          if (f7 != 0 || !cap_idx_ok(in.rd) || !cap_idx_ok(in.rs1))
            return std::nullopt;
          return ok(Op::CANDPERM);
        case 4:  // cseal / cunseal cd, cs, ct
          if (!cap_idx_ok(in.rd) || !cap_idx_ok(in.rs1) || !cap_idx_ok(in.rs2))
            return std::nullopt;
          if (f7 == 0) return ok(Op::CSEAL);
          if (f7 == 1) return ok(Op::CUNSEAL);
          return std::nullopt;
        case 5:  // cload rd, rs2(cs)
          if (f7 != 0 || !cap_idx_ok(in.rs1)) return std::nullopt;
          return ok(Op::CLOAD);
        case 6:  // cstore rs2, rd(cs)   (rd field = index register, read-only)
          if (f7 != 0 || !cap_idx_ok(in.rs1)) return std::nullopt;
          return ok(Op::CSTORE);
        case 7:  // cmove cd, cs / cgettag rd, cs
          if (in.rs2 != 0 || !cap_idx_ok(in.rs1)) return std::nullopt;
          if (f7 == 0) {
            if (!cap_idx_ok(in.rd)) return std::nullopt;
            return ok(Op::CMOVE);
          }
          if (f7 == 1) return ok(Op::CGETTAG);
          return std::nullopt;
        default: return std::nullopt;
      }
    }
    default:
      return std::nullopt;
  }
}

inline std::uint32_t encode(const Instruction& in) {
  using namespace isa_detail;
  const std::uint32_t rd = in.rd, rs1 = in.rs1, rs2 = in.rs2;
  const std::uint64_t imm = static_cast<std::uint64_t>(in.imm);

  auto r_type = [&](std::uint32_t opcode, std::uint32_t f3, std::uint32_t f7) {
    return (f7 << 25) | (rs2 << 20) | (rs1 << 15) | (f3 << 12) | (rd << 7) |
           opcode;
  };
  auto i_type = [&](std::uint32_t opcode, std::uint32_t f3) {
    return (static_cast<std::uint32_t>(imm & 0xFFF) << 20) | (rs1 << 15) |
           (f3 << 12) | (rd << 7) | opcode;
  };
  auto s_type = [&](std::uint32_t f3) {
    return (static_cast<std::uint32_t>((imm >> 5) & 0x7F) << 25) |
           (rs2 << 20) | (rs1 << 15) | (f3 << 12) |
           (static_cast<std::uint32_t>(imm & 0x1F) << 7) | 0x23u;
  };
  auto b_type = [&](std::uint32_t f3) {
    return (static_cast<std::uint32_t>((imm >> 12) & 1) << 31) |
           (static_cast<std::uint32_t>((imm >> 5) & 0x3F) << 25) |
           (rs2 << 20) | (rs1 << 15) | (f3 << 12) |
           (static_cast<std::uint32_t>((imm >> 1) & 0xF) << 8) |
           (static_cast<std::uint32_t>((imm >> 11) & 1) << 7) | 0x63u;
  };
  auto u_type = [&](std::uint32_t opcode) {
    return (static_cast<std::uint32_t>(imm) & 0xFFFFF000u) | (rd << 7) |
           opcode;
  };
  auto j_type = [&]() {
    return (static_cast<std::uint32_t>((imm >> 20) & 1) << 31) |
           (static_cast<std::uint32_t>((imm >> 1) & 0x3FF) << 21) |
           (static_cast<std::uint32_t>((imm >> 11) & 1) << 20) |
           (static_cast<std::uint32_t>((imm >> 12) & 0xFF) << 12) | (rd << 7) |
           0x6Fu;
  };
  auto shift64 = [&](std::uint32_t f3, std::uint32_t hi6) {
    return (hi6 << 26) | (static_cast<std::uint32_t>(imm & 0x3F) << 20) |
           (rs1 << 15) | (f3 << 12) | (rd << 7) | 0x13u;
  };
  auto shift32 = [&](std::uint32_t f3, std::uint32_t f7) {
    return (f7 << 25) | (static_cast<std::uint32_t>(imm & 0x1F) << 20) |
           (rs1 << 15) | (f3 << 12) | (rd << 7) | 0x1Bu;
  };

  switch (in.op) {
    case Op::LUI: return u_type(0x37);
    case Op::AUIPC: return u_type(0x17);
    case Op::JAL: return j_type();
    case Op::JALR: return i_type(0x67, 0);
    case Op::BEQ: return b_type(0);
    case Op::BNE: return b_type(1);
    case Op::BLT: return b_type(4);
    case Op::BGE: return b_type(5);
    case Op::BLTU: return b_type(6);
    case Op::BGEU: return b_type(7);
    case Op::LB: return i_type(0x03, 0);
    case Op::LH: return i_type(0x03, 1);
    case Op::LW: return i_type(0x03, 2);
    case Op::LD: return i_type(0x03, 3);
    case Op::LBU: return i_type(0x03, 4);
    case Op::LHU: return i_type(0x03, 5);
    case Op::LWU: return i_type(0x03, 6);
    case Op::SB: return s_type(0);
    case Op::SH: return s_type(1);
    case Op::SW: return s_type(2);
    case Op::SD: return s_type(3);
    case Op::ADDI: return i_type(0x13, 0);
    case Op::SLTI: return i_type(0x13, 2);
    case Op::SLTIU: return i_type(0x13, 3);
    case Op::XORI: return i_type(0x13, 4);
    case Op::ORI: return i_type(0x13, 6);
    case Op::ANDI: return i_type(0x13, 7);
    case Op::SLLI: return shift64(1, 0x00);
    case Op::SRLI: return shift64(5, 0x00);
    case Op::SRAI: return shift64(5, 0x10);
    case Op::ADDIW: return i_type(0x1B, 0);
    case Op::SLLIW: return shift32(1, 0x00);
    case Op::SRLIW: return shift32(5, 0x00);
    case Op::SRAIW: return shift32(5, 0x20);
    case Op::ADD: return r_type(0x33, 0, 0x00);
    case Op::SUB: return r_type(0x33, 0, 0x20);
    case Op::SLL: return r_type(0x33, 1, 0x00);
    case Op::SLT: return r_type(0x33, 2, 0x00);
    case Op::SLTU: return r_type(0x33, 3, 0x00);
    case Op::XOR: return r_type(0x33, 4, 0x00);
    case Op::SRL: return r_type(0x33, 5, 0x00);
    case Op::SRA: return r_type(0x33, 5, 0x20);
    case Op::OR: return r_type(0x33, 6, 0x00);
    case Op::AND: return r_type(0x33, 7, 0x00);
    case Op::ADDW: return r_type(0x3B, 0, 0x00);
    case Op::SUBW: return r_type(0x3B, 0, 0x20);
    case Op::SLLW: return r_type(0x3B, 1, 0x00);
    case Op::SRLW: return r_type(0x3B, 5, 0x00);
    case Op::SRAW: return r_type(0x3B, 5, 0x20);
    case Op::MUL: return r_type(0x33, 0, 0x01);
    case Op::FENCE: return 0x0FF0000F;
    case Op::ECALL: return 0x00000073;
    case Op::EBREAK: return 0x00100073;
    case Op::RDCYCLE: return 0xC0002073u | (rd << 7);
    case Op::CFLUSH: return r_type(isa_detail::kCustom0, 0, 0);
    case Op::FENCE_SPEC: return (1u << 12) | isa_detail::kCustom0;
    case Op::CSETBOUNDS: return r_type(isa_detail::kCustom0, 2, 0);
    case Op::CANDPERM: return r_type(isa_detail::kCustom0, 3, 0);
    case Op::CSEAL: return r_type(isa_detail::kCustom0, 4, 0);
    case Op::CUNSEAL: return r_type(isa_detail::kCustom0, 4, 1);
    case Op::CLOAD: return r_type(isa_detail::kCustom0, 5, 0);
    case Op::CSTORE: return r_type(isa_detail::kCustom0, 6, 0);
    case Op::CMOVE: return r_type(isa_detail::kCustom0, 7, 0);
    case Op::CGETTAG: return r_type(isa_detail::kCustom0, 7, 1);
  }
  return 0;
}

inline std::string_view op_mnemonic(Op op) {
  switch (op) {
    case Op::LUI: return "lui";
    case Op::AUIPC: return "auipc";
    case Op::JAL: return "jal";
    case Op::JALR: return "jalr";
    case Op::BEQ: return "beq";
    case Op::BNE: return "bne";
    case Op::BLT: return "blt";
    case Op::BGE: return "bge";
    case Op::BLTU: return "bltu";
    case Op::BGEU: return "bgeu";
    case Op::LB: return "lb";
    case Op::LH: return "lh";
    case Op::LW: return "lw";
    case Op::LD: return "ld";
    case Op::LBU: return "lbu";
    case Op::LHU: return "lhu";
    case Op::LWU: return "lwu";
    case Op::SB: return "sb";
    case Op::SH: return "sh";
    case Op::SW: return "sw";
    case Op::SD: return "sd";
    case Op::ADDI: return "addi";
    case Op::SLTI: return "slti";
    case Op::SLTIU: return "sltiu";
    case Op::XORI: return "xori";
    case Op::ORI: return "ori";
    case Op::ANDI: return "andi";
    case Op::SLLI: return "slli";
    case Op::SRLI: return "srli";
    case Op::SRAI: return "srai";
    case Op::ADDIW: return "addiw";
    case Op::SLLIW: return "slliw";
    case Op::SRLIW: return "srliw";
    case Op::SRAIW: return "sraiw";
    case Op::ADD: return "add";
    case Op::SUB: return "sub";
    case Op::SLL: return "sll";
    case Op::SLT: return "slt";
    case Op::SLTU: return "sltu";
    case Op::XOR: return "xor";
    case Op::SRL: return "srl";
    case Op::SRA: return "sra";
    case Op::OR: return "or";
    case Op::AND: return "and";
    case Op::ADDW: return "addw";
    case Op::SUBW: return "subw";
    case Op::SLLW: return "sllw";
    case Op::SRLW: return "srlw";
    case Op::SRAW: return "sraw";
    case Op::MUL: return "mul";
    case Op::FENCE: return "fence";
    case Op::ECALL: return "ecall";
    case Op::EBREAK: return "ebreak";
    case Op::RDCYCLE: return "rdcycle";
    case Op::CFLUSH: return "cflush";
    case Op::FENCE_SPEC: return "fence.spec";
    case Op::CSETBOUNDS: return "csetbounds";
    case Op::CANDPERM: return "candperm";
    case Op::CSEAL: return "cseal";
    case Op::CUNSEAL: return "cunseal";
    case Op::CLOAD: return "cload";
    case Op::CSTORE: return "cstore";
    case Op::CMOVE: return "cmove";
    case Op::CGETTAG: return "cgettag";
  }
  return "?";
}

}  // namespace trisa
