#pragma once

#include <cstdint>
#include <optional>
#include <string>

namespace trisa {

using Word = std::uint64_t;

// Half-open byte range [start, end).
struct AddrRange {
  Word start = 0;
  Word end = 0;

  bool contains(Word addr) const { return addr >= start && addr < end; }
  bool contains(Word addr, Word size) const {
    return addr >= start && size <= end - addr;
  }
  Word size() const { return end - start; }
};

enum class Zone { Kernel, Green, Dmz, TpmMmio, ExternalIo };

inline const char* zone_name(Zone z) {
  switch (z) {
    case Zone::Kernel: return "kernel";
    case Zone::Green: return "green";
    case Zone::Dmz: return "dmz";
    case Zone::TpmMmio: return "tpm_mmio";
    case Zone::ExternalIo: return "external_io";
  }
  return "?";
}

enum class PrivilegeMode { User, Kernel };

enum class TrapCause {
  IllegalInstruction,
  LoadAccessFault,
  StoreAccessFault,
  CapabilityFault,
  BusFault,
  IntegrityViolation,
  Breakpoint,
  EnvCall,
};

inline const char* trap_cause_name(TrapCause c) {
  switch (c) {
    case TrapCause::IllegalInstruction: return "IllegalInstruction";
    case TrapCause::LoadAccessFault: return "LoadAccessFault";
    case TrapCause::StoreAccessFault: return "StoreAccessFault";
    case TrapCause::CapabilityFault: return "CapabilityFault";
    case TrapCause::BusFault: return "BusFault";
    case TrapCause::IntegrityViolation: return "IntegrityViolation";
    case TrapCause::Breakpoint: return "Breakpoint";
    case TrapCause::EnvCall: return "EnvCall";
  }
  return "?";
}

struct Trap {
  TrapCause cause;
  std::optional<Word> faulting_address;
  Word faulting_pc = 0;
};

}  // namespace trisa
