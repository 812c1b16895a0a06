#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "trisa/cache.hpp"
#include "trisa/capability.hpp"
#include "trisa/config.hpp"
#include "trisa/isa.hpp"
#include "trisa/machine.hpp"
#include "trisa/platform.hpp"
#include "trisa/predictor.hpp"
#include "trisa/tpm.hpp"

namespace trisa {

enum class StepKind { Continue, Trapped, Halted };

struct StepResult {
  StepKind kind = StepKind::Continue;
  std::optional<Trap> trap;
};

struct RunReport {
  std::uint64_t cycles = 0;
  std::uint64_t instructions = 0;
  bool limit_exceeded = false;
  StepKind final_state = StepKind::Continue;
  std::optional<Trap> trap;
  std::vector<Trap> trap_log;
};

enum class SpecTrigger { PredictedBranch, FaultingLoad };
enum class SpecOutcome { Committed, Squashed };

struct Checkpoint {
  std::array<Word, 32> regs{};
  CapRegisterFile caps;
  Word pc = 0;
  PrivilegeMode mode = PrivilegeMode::User;
};

struct PendingStore {
  Word addr = 0;
  unsigned size = 0;
  std::uint64_t value = 0;
};

// Single transient-execution window. Transient instructions execute on
// the live register file with a checkpoint held for squash; speculative
// stores sit in the store buffer and never reach memory or the cache
// unless the window commits.
struct SpeculationEngine {
  bool active = false;
  bool stalled = false;
  SpecTrigger trigger = SpecTrigger::PredictedBranch;
  Checkpoint checkpoint;
  std::uint32_t window_remaining = 0;
  std::uint64_t resolve_at_cycle = 0;
  std::vector<PendingStore> store_buffer;
  std::optional<Trap> pending_trap;
};

struct SimStats {
  std::uint64_t instructions = 0;
  std::uint64_t windows_opened = 0;
  std::uint64_t windows_squashed = 0;
  std::uint64_t windows_committed = 0;
  std::uint64_t transient_cap_faults = 0;
};

class Simulator {
 public:
  explicit Simulator(const SimConfig& cfg = SimConfig{})
      : cfg_(cfg),
        mem_(cfg.zones.top()),
        cache_(cfg.cache),
        bp_(cfg.predictor),
        tpm_(EntropySource::deterministic(cfg.seed)) {
    cache_.record_trace = cfg.record_trace;
    reset_capabilities();
  }

  const SimConfig& config() const { return cfg_; }
  MachineState& state() { return st_; }
  const MachineState& state() const { return st_; }
  Memory& mem() { return mem_; }
  const Memory& mem() const { return mem_; }
  CacheHierarchy& cache() { return cache_; }
  BranchPredictor& predictor() { return bp_; }
  TpmDevice& tpm() { return tpm_; }
  SpeculationEngine& speculation() { return spec_; }
  const SimStats& stats() const { return stats_; }
  const std::vector<IntegrityRecord>& integrity_records() const {
    return integrity_;
  }
  const std::vector<Trap>& trap_log() const { return trap_log_; }

  // At reset DDC and PCC span the whole mapped space with maximal
  // non-sealing permissions (hybrid-mode convention; zone and privilege
  // checks still gate kernel and device ranges).
  void reset_capabilities() {
    st_.caps.ddc = Capability::root(0, cfg_.zones.top(), kNonSealingPerms);
    st_.caps.pcc = Capability::root(0, cfg_.zones.top(), kNonSealingPerms);
  }

  bool load(const ProgramImage& image, std::string* error = nullptr) {
    LoadResult r = load_image(cfg_.zones, image, mem_);
    if (!r.ok()) {
      if (error) *error = r.error->detail;
      return false;
    }
    integrity_ = std::move(r.integrity);
    st_.pc = r.entry;
    return true;
  }

  StepResult step() {
    if (st_.halted) return {StepKind::Halted, std::nullopt};
    if (spec_.active) return transient_step();
    return arch_step();
  }

  RunReport run(std::uint64_t max_steps) {
    RunReport rep;
    const std::uint64_t start_instret = stats_.instructions;
    const std::size_t trap_log_start = trap_log_.size();
    while (true) {
      if (stats_.instructions - start_instret >= max_steps) {
        rep.limit_exceeded = true;
        rep.final_state = StepKind::Continue;
        break;
      }
      StepResult r = step();
      if (r.kind != StepKind::Continue) {
        rep.final_state = r.kind;
        rep.trap = r.trap;
        break;
      }
    }
    rep.cycles = st_.cycle;
    rep.instructions = stats_.instructions - start_instret;
    rep.trap_log.assign(trap_log_.begin() + trap_log_start, trap_log_.end());
    return rep;
  }

  // ---- speculation engine operations (also used directly by tests) ----

  void speculate_begin(SpecTrigger trigger, Word checkpoint_pc) {
    spec_.active = true;
    spec_.stalled = false;
    spec_.trigger = trigger;
    spec_.checkpoint.regs = st_.regs;
    spec_.checkpoint.caps = st_.caps;
    spec_.checkpoint.pc = checkpoint_pc;
    spec_.checkpoint.mode = st_.mode;
    spec_.window_remaining = cfg_.speculation.window;
    spec_.resolve_at_cycle = st_.cycle + cfg_.speculation.resolve_delay;
    spec_.store_buffer.clear();
    spec_.pending_trap.reset();
    ++stats_.windows_opened;
  }

  SpecOutcome speculate_resolve(bool prediction_was_correct) {
    spec_.active = false;
    spec_.stalled = false;
    st_.cycle = std::max(st_.cycle, spec_.resolve_at_cycle);
    if (prediction_was_correct) {
      // Commit: drain the store buffer to memory.
      for (const PendingStore& s : spec_.store_buffer)
        raw_store(s.addr, s.size, s.value);
      spec_.store_buffer.clear();
      ++stats_.windows_committed;
      return SpecOutcome::Committed;
    }
    st_.regs = spec_.checkpoint.regs;
    st_.caps = spec_.checkpoint.caps;
    st_.pc = spec_.checkpoint.pc;
    st_.mode = spec_.checkpoint.mode;
    spec_.store_buffer.clear();
    ++stats_.windows_squashed;
    return SpecOutcome::Squashed;
  }

 private:
  struct AccessOutcome {
    std::optional<Trap> trap;
    std::uint64_t value = 0;
    std::uint32_t latency = 0;
    bool deferred_window = false;  // meltdown-style faulting load window
    bool blocked = false;          // transient access suppressed
  };

  std::optional<Zone> initiator_zone() const {
    return cfg_.zones.zone_of(st_.pc);
  }

  // ---- fetch ----

  struct FetchOutcome {
    std::optional<Trap> trap;
    std::uint32_t raw = 0;
    std::uint32_t latency = 0;
  };

  FetchOutcome fetch(Word pc, bool transient) {
    FetchOutcome out;
    if (pc % 4 != 0 || pc + 4 > mem_.size()) {
      out.trap = Trap{TrapCause::LoadAccessFault, pc, pc};
      return out;
    }
    const bool enforce_caps = !transient || cfg_.mitigations.cap_enforce_transient;
    if (enforce_caps) {
      if (auto f = checked_access(st_.caps.pcc, pc, 4, AccessKind::Fetch)) {
        if (transient) ++stats_.transient_cap_faults;
        out.trap = Trap{TrapCause::CapabilityFault, pc, pc};
        return out;
      }
    }
    auto target = cfg_.zones.zone_of(pc);
    if (!target) {
      out.trap = Trap{TrapCause::BusFault, pc, pc};
      return out;
    }
    if (*target == Zone::Kernel && st_.mode != PrivilegeMode::Kernel) {
      out.trap = Trap{TrapCause::LoadAccessFault, pc, pc};
      return out;
    }
    if (*target == Zone::TpmMmio || *target == Zone::ExternalIo) {
      out.trap = Trap{TrapCause::BusFault, pc, pc};
      return out;
    }
    if (cfg_.flat_timing) {
      out.latency = 0;
    } else {
      out.latency =
          cache_.access(pc, MemKind::Fetch, transient, st_.cycle).latency;
    }
    out.raw = static_cast<std::uint32_t>(mem_.load(pc, 4));
    return out;
  }

  // ---- data access ----

  AccessOutcome data_access(const Capability& cap, Word addr, unsigned size,
                            bool is_store, std::uint64_t store_value,
                            bool transient) {
    AccessOutcome out;
    const Word pc = st_.pc;

    if (addr % size != 0) {
      if (transient) {
        out.blocked = true;
        return out;
      }
      out.trap = Trap{is_store ? TrapCause::StoreAccessFault
                               : TrapCause::LoadAccessFault,
                      addr, pc};
      return out;
    }

    const bool enforce_caps =
        !transient || cfg_.mitigations.cap_enforce_transient;
    if (enforce_caps) {
      auto f = checked_access(cap, addr, size,
                              is_store ? AccessKind::Store : AccessKind::Load);
      if (f) {
        if (transient) {
          ++stats_.transient_cap_faults;
          out.blocked = true;
          return out;
        }
        out.trap = Trap{TrapCause::CapabilityFault, addr, pc};
        return out;
      }
    }

    auto init = initiator_zone();
    if (!init) {
      out.trap = Trap{TrapCause::BusFault, addr, pc};
      if (transient) {
        out.trap.reset();
        out.blocked = true;
      }
      return out;
    }
    RouteResult rr = route(cfg_.zones, *init, addr);
    if (std::holds_alternative<BusFaultKind>(rr)) {
      if (transient) {
        out.blocked = true;
        return out;
      }
      out.trap = Trap{TrapCause::BusFault, addr, pc};
      return out;
    }
    const RouteTarget target = std::get<RouteTarget>(rr);

    // Kernel-zone privilege check. A user-mode load under the deferred
    // check model opens the transient-fault window instead of trapping.
    if (cfg_.zones.zone_of(addr) == Zone::Kernel &&
        st_.mode != PrivilegeMode::Kernel) {
      if (transient) {
        out.blocked = true;
        return out;
      }
      if (is_store) {
        out.trap = Trap{TrapCause::StoreAccessFault, addr, pc};
        return out;
      }
      if (cfg_.mitigations.immediate_check || cfg_.flat_timing ||
          cfg_.speculation.window == 0) {
        out.trap = Trap{TrapCause::LoadAccessFault, addr, pc};
        return out;
      }
      out.deferred_window = true;
      out.value = cfg_.mitigations.kpti ? 0 : mem_.load(addr, size);
      return out;
    }

    if (target == RouteTarget::Tpm) {
      if (transient) {
        // Devices are not speculated against.
        out.blocked = true;
        return out;
      }
      const Word off = addr - cfg_.zones.tpm_mmio.start;
      if (is_store) {
        out.latency = 1 + static_cast<std::uint32_t>(
                              tpm_.mmio_write(off, store_value));
      } else {
        out.value = tpm_.mmio_read(off);
        out.latency = 1;
      }
      return out;
    }

    if (target == RouteTarget::ExternalIo) {
      // Uncached staging RAM behind Bus B.
      if (transient && is_store) {
        spec_.store_buffer.push_back({addr, size, store_value});
        out.latency = 1;
        return out;
      }
      if (is_store)
        raw_store(addr, size, store_value);
      else
        out.value = transient ? transient_load(addr, size)
                              : mem_.load(addr, size);
      out.latency = 1;
      return out;
    }

    // Plain memory through the cache hierarchy.
    if (transient && is_store) {
      spec_.store_buffer.push_back({addr, size, store_value});
      out.latency = 0;
      return out;
    }
    if (cfg_.flat_timing) {
      out.latency = 1;
    } else {
      out.latency = cache_
                        .access(addr, is_store ? MemKind::Write : MemKind::Read,
                                transient, st_.cycle)
                        .latency;
    }
    if (is_store)
      raw_store(addr, size, store_value);
    else
      out.value = transient ? transient_load(addr, size) : mem_.load(addr, size);
    return out;
  }

  void raw_store(Word addr, unsigned size, std::uint64_t value) {
    mem_.store(addr, size, value);
  }

  // Transient loads see the newest overlapping store-buffer bytes.
  std::uint64_t transient_load(Word addr, unsigned size) const {
    std::uint64_t v = mem_.load(addr, size);
    for (const PendingStore& s : spec_.store_buffer) {
      for (unsigned i = 0; i < size; ++i) {
        const Word b = addr + i;
        if (b >= s.addr && b < s.addr + s.size) {
          const std::uint8_t byte =
              static_cast<std::uint8_t>(s.value >> (8 * (b - s.addr)));
          v = (v & ~(0xFFull << (8 * i))) |
              (static_cast<std::uint64_t>(byte) << (8 * i));
        }
      }
    }
    return v;
  }

  // ---- trap delivery ----

  StepResult deliver_trap(const Trap& t) {
    trap_log_.push_back(t);
    if (st_.trap_vector != 0) {
      st_.pc = st_.trap_vector;
      st_.mode = PrivilegeMode::Kernel;
      return {StepKind::Continue, t};
    }
    return {StepKind::Trapped, t};
  }

  // ---- architectural step ----

  StepResult arch_step() {
    const Word pc = st_.pc;
    FetchOutcome f = fetch(pc, false);
    if (f.trap) {
      st_.cycle += 1;
      return deliver_trap(*f.trap);
    }
    auto in = decode(f.raw);
    if (!in) {
      st_.cycle += f.latency + 1;
      return deliver_trap(Trap{TrapCause::IllegalInstruction, f.raw, pc});
    }

    std::uint64_t lat = f.latency + 1;
    Word next_pc = pc + 4;
    std::optional<Trap> trap;
    bool halted = false;

    // Deferred window request produced by a faulting load.
    bool open_fault_window = false;
    // Misprediction window request produced by a branch.
    bool open_branch_window = false;
    Word wrong_path = 0;

    const Instruction& i = *in;
    auto reg = [&](unsigned r) { return st_.reg(r); };

    switch (i.op) {
      case Op::LUI: st_.set_reg(i.rd, static_cast<Word>(i.imm)); break;
      case Op::AUIPC: st_.set_reg(i.rd, pc + static_cast<Word>(i.imm)); break;
      case Op::JAL:
        st_.set_reg(i.rd, pc + 4);
        next_pc = pc + static_cast<Word>(i.imm);
        break;
      case Op::JALR: {
        const Word t = (reg(i.rs1) + static_cast<Word>(i.imm)) & ~Word(1);
        st_.set_reg(i.rd, pc + 4);
        next_pc = t;
        break;
      }
      case Op::BEQ:
      case Op::BNE:
      case Op::BLT:
      case Op::BGE:
      case Op::BLTU:
      case Op::BGEU: {
        const bool actual = branch_taken(i, reg(i.rs1), reg(i.rs2));
        const Word target = pc + static_cast<Word>(i.imm);
        const Prediction pred = bp_.predict(pc);
        bp_.train(pc, actual, target);
        if (actual) next_pc = target;
        if (!cfg_.flat_timing && cfg_.speculation.window > 0) {
          if (pred.taken && pred.target) {
            if (!actual || *pred.target != target) {
              open_branch_window = true;
              wrong_path = *pred.target;
            }
          } else if (!pred.taken && actual) {
            open_branch_window = true;
            wrong_path = pc + 4;
          }
        }
        break;
      }
      case Op::LB:
      case Op::LH:
      case Op::LW:
      case Op::LD:
      case Op::LBU:
      case Op::LHU:
      case Op::LWU: {
        const Word addr = reg(i.rs1) + static_cast<Word>(i.imm);
        const unsigned size = load_size(i.op);
        pre_exec_regs_ = st_.regs;
        pre_exec_caps_ = st_.caps;
        AccessOutcome a =
            data_access(st_.caps.ddc, addr, size, false, 0, false);
        lat += a.latency;
        if (a.trap) {
          trap = a.trap;
          break;
        }
        if (a.deferred_window) {
          open_fault_window = true;
          spec_pending_trap_ = Trap{TrapCause::LoadAccessFault, addr, pc};
        }
        st_.set_reg(i.rd, extend_load(i.op, a.value));
        break;
      }
      case Op::SB:
      case Op::SH:
      case Op::SW:
      case Op::SD: {
        const Word addr = reg(i.rs1) + static_cast<Word>(i.imm);
        const unsigned size = store_size(i.op);
        AccessOutcome a = data_access(st_.caps.ddc, addr, size, true,
                                      reg(i.rs2), false);
        lat += a.latency;
        if (a.trap) trap = a.trap;
        break;
      }
      case Op::ADDI: st_.set_reg(i.rd, reg(i.rs1) + static_cast<Word>(i.imm)); break;
      case Op::SLTI:
        st_.set_reg(i.rd, static_cast<std::int64_t>(reg(i.rs1)) < i.imm);
        break;
      case Op::SLTIU:
        st_.set_reg(i.rd, reg(i.rs1) < static_cast<Word>(i.imm));
        break;
      case Op::XORI: st_.set_reg(i.rd, reg(i.rs1) ^ static_cast<Word>(i.imm)); break;
      case Op::ORI: st_.set_reg(i.rd, reg(i.rs1) | static_cast<Word>(i.imm)); break;
      case Op::ANDI: st_.set_reg(i.rd, reg(i.rs1) & static_cast<Word>(i.imm)); break;
      case Op::SLLI: st_.set_reg(i.rd, reg(i.rs1) << (i.imm & 63)); break;
      case Op::SRLI: st_.set_reg(i.rd, reg(i.rs1) >> (i.imm & 63)); break;
      case Op::SRAI:
        st_.set_reg(i.rd, static_cast<Word>(
                              static_cast<std::int64_t>(reg(i.rs1)) >>
                              (i.imm & 63)));
        break;
      case Op::ADDIW:
        st_.set_reg(i.rd, sext32(static_cast<std::uint32_t>(
                              reg(i.rs1) + static_cast<Word>(i.imm))));
        break;
      case Op::SLLIW:
        st_.set_reg(i.rd, sext32(static_cast<std::uint32_t>(reg(i.rs1))
                                 << (i.imm & 31)));
        break;
      case Op::SRLIW:
        st_.set_reg(i.rd, sext32(static_cast<std::uint32_t>(reg(i.rs1)) >>
                                 (i.imm & 31)));
        break;
      case Op::SRAIW:
        st_.set_reg(i.rd,
                    sext32(static_cast<std::uint32_t>(
                        static_cast<std::int32_t>(
                            static_cast<std::uint32_t>(reg(i.rs1))) >>
                        (i.imm & 31))));
        break;
      case Op::ADD: st_.set_reg(i.rd, reg(i.rs1) + reg(i.rs2)); break;
      case Op::SUB: st_.set_reg(i.rd, reg(i.rs1) - reg(i.rs2)); break;
      case Op::SLL: st_.set_reg(i.rd, reg(i.rs1) << (reg(i.rs2) & 63)); break;
      case Op::SLT:
        st_.set_reg(i.rd, static_cast<std::int64_t>(reg(i.rs1)) <
                              static_cast<std::int64_t>(reg(i.rs2)));
        break;
      case Op::SLTU: st_.set_reg(i.rd, reg(i.rs1) < reg(i.rs2)); break;
      case Op::XOR: st_.set_reg(i.rd, reg(i.rs1) ^ reg(i.rs2)); break;
      case Op::SRL: st_.set_reg(i.rd, reg(i.rs1) >> (reg(i.rs2) & 63)); break;
      case Op::SRA:
        st_.set_reg(i.rd, static_cast<Word>(
                              static_cast<std::int64_t>(reg(i.rs1)) >>
                              (reg(i.rs2) & 63)));
        break;
      case Op::OR: st_.set_reg(i.rd, reg(i.rs1) | reg(i.rs2)); break;
      case Op::AND: st_.set_reg(i.rd, reg(i.rs1) & reg(i.rs2)); break;
      case Op::ADDW:
        st_.set_reg(i.rd, sext32(static_cast<std::uint32_t>(reg(i.rs1) +
                                                            reg(i.rs2))));
        break;
      case Op::SUBW:
        st_.set_reg(i.rd, sext32(static_cast<std::uint32_t>(reg(i.rs1) -
                                                            reg(i.rs2))));
        break;
      case Op::SLLW:
        st_.set_reg(i.rd, sext32(static_cast<std::uint32_t>(reg(i.rs1))
                                 << (reg(i.rs2) & 31)));
        break;
      case Op::SRLW:
        st_.set_reg(i.rd, sext32(static_cast<std::uint32_t>(reg(i.rs1)) >>
                                 (reg(i.rs2) & 31)));
        break;
      case Op::SRAW:
        st_.set_reg(i.rd,
                    sext32(static_cast<std::uint32_t>(
                        static_cast<std::int32_t>(
                            static_cast<std::uint32_t>(reg(i.rs1))) >>
                        (reg(i.rs2) & 31))));
        break;
      case Op::MUL: st_.set_reg(i.rd, reg(i.rs1) * reg(i.rs2)); break;
      case Op::FENCE: break;
      case Op::FENCE_SPEC: break;  // architectural no-op
      case Op::ECALL: trap = Trap{TrapCause::EnvCall, std::nullopt, pc}; break;
      case Op::EBREAK: halted = true; break;
      case Op::RDCYCLE: st_.set_reg(i.rd, st_.cycle); break;
      case Op::CFLUSH:
        if (!cfg_.mitigations.flush_disabled && !cfg_.flat_timing)
          cache_.flush_line(reg(i.rs1));
        break;
      case Op::CSETBOUNDS: {
        const Capability& cs = st_.caps.c[i.rs1];
        CapResult r = set_bounds(cs, cs.cursor, reg(i.rs2));
        if (!cap_ok(r)) {
          trap = Trap{TrapCause::CapabilityFault, std::nullopt, pc};
          break;
        }
        st_.caps.c[i.rd] = cap_value(r);
        break;
      }
      case Op::CANDPERM: {
        CapResult r = and_perms(st_.caps.c[i.rs1],
                                static_cast<std::uint32_t>(reg(i.rs2)));
        if (!cap_ok(r)) {
          trap = Trap{TrapCause::CapabilityFault, std::nullopt, pc};
          break;
        }
        st_.caps.c[i.rd] = cap_value(r);
        break;
      }
      case Op::CSEAL: {
        CapResult r = seal(st_.caps.c[i.rs1], st_.caps.c[i.rs2]);
        if (!cap_ok(r)) {
          trap = Trap{TrapCause::CapabilityFault, std::nullopt, pc};
          break;
        }
        st_.caps.c[i.rd] = cap_value(r);
        break;
      }
      case Op::CUNSEAL: {
        CapResult r = unseal(st_.caps.c[i.rs1], st_.caps.c[i.rs2]);
        if (!cap_ok(r)) {
          trap = Trap{TrapCause::CapabilityFault, std::nullopt, pc};
          break;
        }
        st_.caps.c[i.rd] = cap_value(r);
        break;
      }
      case Op::CLOAD: {
        const Capability& cs = st_.caps.c[i.rs1];
        const Word addr = cs.cursor + reg(i.rs2);
        pre_exec_regs_ = st_.regs;
        pre_exec_caps_ = st_.caps;
        AccessOutcome a = data_access(cs, addr, 1, false, 0, false);
        lat += a.latency;
        if (a.trap) {
          trap = a.trap;
          break;
        }
        if (a.deferred_window) {
          open_fault_window = true;
          spec_pending_trap_ = Trap{TrapCause::LoadAccessFault, addr, pc};
        }
        st_.set_reg(i.rd, a.value & 0xFF);
        break;
      }
      case Op::CSTORE: {
        const Capability& cs = st_.caps.c[i.rs1];
        const Word addr = cs.cursor + reg(i.rd);
        AccessOutcome a =
            data_access(cs, addr, 1, true, reg(i.rs2) & 0xFF, false);
        lat += a.latency;
        if (a.trap) trap = a.trap;
        break;
      }
      case Op::CMOVE: st_.caps.c[i.rd] = st_.caps.c[i.rs1]; break;
      case Op::CGETTAG: st_.set_reg(i.rd, st_.caps.c[i.rs1].tag ? 1 : 0); break;
    }

    st_.cycle += lat;
    ++stats_.instructions;

    if (trap) {
      return deliver_trap(*trap);
    }
    if (halted) {
      st_.halted = true;
      return {StepKind::Halted, std::nullopt};
    }

    if (open_fault_window) {
      // Checkpoint at the faulting instruction; the architectural fault
      // is delivered when the window resolves.
      const Word rd_written_pc = pc;
      speculate_begin(SpecTrigger::FaultingLoad, rd_written_pc);
      // The checkpoint captured the post-load register state; undo by
      // re-capturing from the pre-load snapshot is unnecessary because
      // squash restores the checkpoint taken *before* the transient
      // value escaped: rebuild it from the saved copy below.
      spec_.checkpoint.regs = pre_exec_regs_;
      spec_.checkpoint.caps = pre_exec_caps_;
      spec_.pending_trap = spec_pending_trap_;
      st_.pc = next_pc;  // dependents run transiently
      return {StepKind::Continue, std::nullopt};
    }

    st_.pc = next_pc;

    if (open_branch_window) {
      speculate_begin(SpecTrigger::PredictedBranch, next_pc);
      st_.pc = wrong_path;
    }
    return {StepKind::Continue, std::nullopt};
  }

  // ---- transient step ----

  StepResult transient_step() {
    if (spec_.stalled || spec_.window_remaining == 0) return resolve_window();

    FetchOutcome f = fetch(st_.pc, true);
    if (f.trap) {
      spec_.stalled = true;
      return {StepKind::Continue, std::nullopt};
    }
    auto in = decode(f.raw);
    if (!in) {
      spec_.stalled = true;
      return {StepKind::Continue, std::nullopt};
    }
    const Instruction& i = *in;
    --spec_.window_remaining;

    const Word pc = st_.pc;
    Word next_pc = pc + 4;
    auto reg = [&](unsigned r) { return st_.reg(r); };

    switch (i.op) {
      case Op::EBREAK:
      case Op::ECALL:
      case Op::FENCE_SPEC:
        // Barrier and environment boundaries end transient execution.
        spec_.stalled = true;
        return {StepKind::Continue, std::nullopt};
      case Op::BEQ:
      case Op::BNE:
      case Op::BLT:
      case Op::BGE:
      case Op::BLTU:
      case Op::BGEU:
        // Single-level speculation: a branch in the shadow stalls.
        spec_.stalled = true;
        return {StepKind::Continue, std::nullopt};
      case Op::JAL:
        st_.set_reg(i.rd, pc + 4);
        next_pc = pc + static_cast<Word>(i.imm);
        break;
      case Op::JALR: {
        const Word t = (reg(i.rs1) + static_cast<Word>(i.imm)) & ~Word(1);
        st_.set_reg(i.rd, pc + 4);
        next_pc = t;
        break;
      }
      case Op::LB:
      case Op::LH:
      case Op::LW:
      case Op::LD:
      case Op::LBU:
      case Op::LHU:
      case Op::LWU: {
        const Word addr = reg(i.rs1) + static_cast<Word>(i.imm);
        AccessOutcome a =
            data_access(st_.caps.ddc, addr, load_size(i.op), false, 0, true);
        if (a.blocked || a.trap) {
          spec_.stalled = true;
          return {StepKind::Continue, std::nullopt};
        }
        st_.set_reg(i.rd, extend_load(i.op, a.value));
        break;
      }
      case Op::SB:
      case Op::SH:
      case Op::SW:
      case Op::SD: {
        const Word addr = reg(i.rs1) + static_cast<Word>(i.imm);
        AccessOutcome a = data_access(st_.caps.ddc, addr, store_size(i.op),
                                      true, reg(i.rs2), true);
        if (a.blocked || a.trap) {
          spec_.stalled = true;
          return {StepKind::Continue, std::nullopt};
        }
        break;
      }
      case Op::CLOAD: {
        const Capability& cs = st_.caps.c[i.rs1];
        const Word addr = cs.cursor + reg(i.rs2);
        AccessOutcome a = data_access(cs, addr, 1, false, 0, true);
        if (a.blocked || a.trap) {
          spec_.stalled = true;
          return {StepKind::Continue, std::nullopt};
        }
        st_.set_reg(i.rd, a.value & 0xFF);
        break;
      }
      case Op::CSTORE: {
        const Capability& cs = st_.caps.c[i.rs1];
        const Word addr = cs.cursor + reg(i.rd);
        AccessOutcome a = data_access(cs, addr, 1, true, reg(i.rs2) & 0xFF, true);
        if (a.blocked || a.trap) {
          spec_.stalled = true;
          return {StepKind::Continue, std::nullopt};
        }
        break;
      }
      case Op::CFLUSH:
        if (!cfg_.mitigations.flush_disabled) cache_.flush_line(reg(i.rs1));
        break;
      default: {
        // ALU, capability register ops, rdcycle: same semantics as the
        // architectural path, registers are protected by the checkpoint.
        exec_simple(i, pc);
        break;
      }
    }
    st_.pc = next_pc;
    return {StepKind::Continue, std::nullopt};
  }

  // Non-memory, non-control instructions shared by both paths.
  void exec_simple(const Instruction& i, Word pc) {
    auto reg = [&](unsigned r) { return st_.reg(r); };
    switch (i.op) {
      case Op::LUI: st_.set_reg(i.rd, static_cast<Word>(i.imm)); break;
      case Op::AUIPC: st_.set_reg(i.rd, pc + static_cast<Word>(i.imm)); break;
      case Op::ADDI: st_.set_reg(i.rd, reg(i.rs1) + static_cast<Word>(i.imm)); break;
      case Op::SLTI:
        st_.set_reg(i.rd, static_cast<std::int64_t>(reg(i.rs1)) < i.imm);
        break;
      case Op::SLTIU:
        st_.set_reg(i.rd, reg(i.rs1) < static_cast<Word>(i.imm));
        break;
      case Op::XORI: st_.set_reg(i.rd, reg(i.rs1) ^ static_cast<Word>(i.imm)); break;
      case Op::ORI: st_.set_reg(i.rd, reg(i.rs1) | static_cast<Word>(i.imm)); break;
      case Op::ANDI: st_.set_reg(i.rd, reg(i.rs1) & static_cast<Word>(i.imm)); break;
      case Op::SLLI: st_.set_reg(i.rd, reg(i.rs1) << (i.imm & 63)); break;
      case Op::SRLI: st_.set_reg(i.rd, reg(i.rs1) >> (i.imm & 63)); break;
      case Op::SRAI:
        st_.set_reg(i.rd, static_cast<Word>(
                              static_cast<std::int64_t>(reg(i.rs1)) >>
                              (i.imm & 63)));
        break;
      case Op::ADDIW:
        st_.set_reg(i.rd, sext32(static_cast<std::uint32_t>(
                              reg(i.rs1) + static_cast<Word>(i.imm))));
        break;
      case Op::SLLIW:
        st_.set_reg(i.rd, sext32(static_cast<std::uint32_t>(reg(i.rs1))
                                 << (i.imm & 31)));
        break;
      case Op::SRLIW:
        st_.set_reg(i.rd, sext32(static_cast<std::uint32_t>(reg(i.rs1)) >>
                                 (i.imm & 31)));
        break;
      case Op::SRAIW:
        st_.set_reg(i.rd,
                    sext32(static_cast<std::uint32_t>(
                        static_cast<std::int32_t>(
                            static_cast<std::uint32_t>(reg(i.rs1))) >>
                        (i.imm & 31))));
        break;
      case Op::ADD: st_.set_reg(i.rd, reg(i.rs1) + reg(i.rs2)); break;
      case Op::SUB: st_.set_reg(i.rd, reg(i.rs1) - reg(i.rs2)); break;
      case Op::SLL: st_.set_reg(i.rd, reg(i.rs1) << (reg(i.rs2) & 63)); break;
      case Op::SLT:
        st_.set_reg(i.rd, static_cast<std::int64_t>(reg(i.rs1)) <
                              static_cast<std::int64_t>(reg(i.rs2)));
        break;
      case Op::SLTU: st_.set_reg(i.rd, reg(i.rs1) < reg(i.rs2)); break;
      case Op::XOR: st_.set_reg(i.rd, reg(i.rs1) ^ reg(i.rs2)); break;
      case Op::SRL: st_.set_reg(i.rd, reg(i.rs1) >> (reg(i.rs2) & 63)); break;
      case Op::SRA:
        st_.set_reg(i.rd, static_cast<Word>(
                              static_cast<std::int64_t>(reg(i.rs1)) >>
                              (reg(i.rs2) & 63)));
        break;
      case Op::OR: st_.set_reg(i.rd, reg(i.rs1) | reg(i.rs2)); break;
      case Op::AND: st_.set_reg(i.rd, reg(i.rs1) & reg(i.rs2)); break;
      case Op::ADDW:
        st_.set_reg(i.rd, sext32(static_cast<std::uint32_t>(reg(i.rs1) +
                                                            reg(i.rs2))));
        break;
      case Op::SUBW:
        st_.set_reg(i.rd, sext32(static_cast<std::uint32_t>(reg(i.rs1) -
                                                            reg(i.rs2))));
        break;
      case Op::SLLW:
        st_.set_reg(i.rd, sext32(static_cast<std::uint32_t>(reg(i.rs1))
                                 << (reg(i.rs2) & 31)));
        break;
      case Op::SRLW:
        st_.set_reg(i.rd, sext32(static_cast<std::uint32_t>(reg(i.rs1)) >>
                                 (reg(i.rs2) & 31)));
        break;
      case Op::SRAW:
        st_.set_reg(i.rd,
                    sext32(static_cast<std::uint32_t>(
                        static_cast<std::int32_t>(
                            static_cast<std::uint32_t>(reg(i.rs1))) >>
                        (reg(i.rs2) & 31))));
        break;
      case Op::MUL: st_.set_reg(i.rd, reg(i.rs1) * reg(i.rs2)); break;
      case Op::RDCYCLE: st_.set_reg(i.rd, st_.cycle); break;
      case Op::FENCE: break;
      case Op::CSETBOUNDS: {
        const Capability& cs = st_.caps.c[i.rs1];
        CapResult r = set_bounds(cs, cs.cursor, reg(i.rs2));
        if (cap_ok(r)) st_.caps.c[i.rd] = cap_value(r);
        break;
      }
      case Op::CANDPERM: {
        CapResult r = and_perms(st_.caps.c[i.rs1],
                                static_cast<std::uint32_t>(reg(i.rs2)));
        if (cap_ok(r)) st_.caps.c[i.rd] = cap_value(r);
        break;
      }
      case Op::CSEAL: {
        CapResult r = seal(st_.caps.c[i.rs1], st_.caps.c[i.rs2]);
        if (cap_ok(r)) st_.caps.c[i.rd] = cap_value(r);
        break;
      }
      case Op::CUNSEAL: {
        CapResult r = unseal(st_.caps.c[i.rs1], st_.caps.c[i.rs2]);
        if (cap_ok(r)) st_.caps.c[i.rd] = cap_value(r);
        break;
      }
      case Op::CMOVE: st_.caps.c[i.rd] = st_.caps.c[i.rs1]; break;
      case Op::CGETTAG: st_.set_reg(i.rd, st_.caps.c[i.rs1].tag ? 1 : 0); break;
      default: break;
    }
  }

  StepResult resolve_window() {
    std::optional<Trap> pending = spec_.pending_trap;
    speculate_resolve(false);
    if (pending) return deliver_trap(*pending);
    return {StepKind::Continue, std::nullopt};
  }

  static bool branch_taken(const Instruction& i, Word a, Word b) {
    switch (i.op) {
      case Op::BEQ: return a == b;
      case Op::BNE: return a != b;
      case Op::BLT:
        return static_cast<std::int64_t>(a) < static_cast<std::int64_t>(b);
      case Op::BGE:
        return static_cast<std::int64_t>(a) >= static_cast<std::int64_t>(b);
      case Op::BLTU: return a < b;
      case Op::BGEU: return a >= b;
      default: return false;
    }
  }

  static unsigned load_size(Op op) {
    switch (op) {
      case Op::LB:
      case Op::LBU: return 1;
      case Op::LH:
      case Op::LHU: return 2;
      case Op::LW:
      case Op::LWU: return 4;
      default: return 8;
    }
  }

  static unsigned store_size(Op op) {
    switch (op) {
      case Op::SB: return 1;
      case Op::SH: return 2;
      case Op::SW: return 4;
      default: return 8;
    }
  }

  static Word extend_load(Op op, std::uint64_t v) {
    switch (op) {
      case Op::LB: return static_cast<Word>(static_cast<std::int64_t>(
          static_cast<std::int8_t>(v)));
      case Op::LH: return static_cast<Word>(static_cast<std::int64_t>(
          static_cast<std::int16_t>(v)));
      case Op::LW: return static_cast<Word>(static_cast<std::int64_t>(
          static_cast<std::int32_t>(v)));
      default: return v;
    }
  }

  static Word sext32(std::uint32_t v) {
    return static_cast<Word>(static_cast<std::int64_t>(
        static_cast<std::int32_t>(v)));
  }

  SimConfig cfg_;
  MachineState st_;
  Memory mem_;
  CacheHierarchy cache_;
  BranchPredictor bp_;
  TpmDevice tpm_;
  SpeculationEngine spec_;
  SimStats stats_;
  std::vector<IntegrityRecord> integrity_;
  std::vector<Trap> trap_log_;

  // Snapshot support for the deferred-fault window (see arch_step).
  std::array<Word, 32> pre_exec_regs_{};
  CapRegisterFile pre_exec_caps_;
  std::optional<Trap> spec_pending_trap_;
};

}  // namespace trisa
