#pragma once

#include <array>
#include <cstdint>

#include "trisa/capability.hpp"
#include "trisa/common.hpp"

namespace trisa {

// Architectural CPU state. Microarchitectural state (caches, predictor,
// speculation window) lives in the simulator, not here.
struct MachineState {
  Word pc = 0;
  std::array<Word, 32> regs{};
  CapRegisterFile caps;
  PrivilegeMode mode = PrivilegeMode::User;
  std::uint64_t cycle = 0;
  Word trap_vector = 0;  // 0 = no handler registered
  bool halted = false;

  Word reg(unsigned i) const { return i == 0 ? 0 : regs[i]; }
  void set_reg(unsigned i, Word v) {
    if (i != 0) regs[i] = v;
  }
};

}  // namespace trisa
