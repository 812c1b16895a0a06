#pragma once

#include <bit>
#include <cstdint>
#include <map>
#include <memory>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "trisa/assembler.hpp"
#include "trisa/config.hpp"
#include "trisa/simulator.hpp"

namespace trisa {

class HarnessError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct AttackConfig {
  std::string secret;
  Zone secret_zone = Zone::Green;  // meltdown places it in Zone::Kernel
  unsigned trials = 1;
  std::uint64_t seed = 1;
  Mitigations mitigations;
  Word probe_stride = 4096;
  // Meltdown only: target a kernel staging buffer that a kernel-mode
  // driver filled while composing a TPM command, instead of a plain
  // kernel variable.
  bool tpm_staging = false;
  SimConfig base_config;
};

enum class Verdict { Leaked, Blocked };

inline const char* verdict_name(Verdict v) {
  return v == Verdict::Leaked ? "Leaked" : "Blocked";
}

// Leaked requires clearing chance level (1/256 per byte) by a margin.
constexpr double kChanceLevel = 1.0 / 256.0;
constexpr double kLeakMargin = 0.25;

inline Verdict verdict_for(double accuracy) {
  return accuracy > kChanceLevel + kLeakMargin ? Verdict::Leaked
                                               : Verdict::Blocked;
}

struct AttackReport {
  std::string attack_name;
  std::vector<std::uint8_t> recovered;
  double accuracy = 0.0;
  std::uint64_t total_cycles = 0;
  std::map<std::uint32_t, std::uint64_t> latency_histogram;
  Mitigations mitigations;
  Verdict verdict = Verdict::Blocked;
  std::string note;
  std::uint64_t transient_fills = 0;
  std::uint64_t transient_cap_faults = 0;
  std::uint64_t windows_opened = 0;
  // One 256-entry latency row per secret byte (first trial).
  std::vector<std::vector<std::uint32_t>> probe_latencies;
};

inline nlohmann::json report_to_json(const AttackReport& r) {
  nlohmann::json j;
  j["attack"] = r.attack_name;
  std::ostringstream hex;
  std::string text;
  for (std::uint8_t b : r.recovered) {
    char buf[4];
    std::snprintf(buf, sizeof buf, "%02x", b);
    hex << buf;
    text += (b >= 0x20 && b < 0x7F) ? static_cast<char>(b) : '.';
  }
  j["recovered_hex"] = hex.str();
  j["recovered_text"] = text;
  j["accuracy"] = r.accuracy;
  j["total_cycles"] = r.total_cycles;
  j["verdict"] = verdict_name(r.verdict);
  j["mitigations"] = mitigations_to_json(r.mitigations);
  nlohmann::json hist = nlohmann::json::object();
  for (const auto& [lat, count] : r.latency_histogram)
    hist[std::to_string(lat)] = count;
  j["latency_histogram"] = hist;
  j["transient_fills"] = r.transient_fills;
  j["transient_cap_faults"] = r.transient_cap_faults;
  j["windows_opened"] = r.windows_opened;
  if (!r.note.empty()) j["note"] = r.note;
  return j;
}

inline std::string probe_latencies_csv(const AttackReport& r) {
  std::ostringstream out;
  out << "byte_index,probe_index,latency\n";
  for (std::size_t k = 0; k < r.probe_latencies.size(); ++k)
    for (std::size_t i = 0; i < r.probe_latencies[k].size(); ++i)
      out << k << "," << i << "," << r.probe_latencies[k][i] << "\n";
  return out.str();
}

namespace attacks_detail {

// Emits "addi reg, reg, step" chunks summing to `total` (imm12 limit).
inline void emit_add(std::ostringstream& s, const char* reg, Word total) {
  while (total > 0) {
    const Word step = std::min<Word>(total, 2047);
    s << "    addi " << reg << ", " << reg << ", " << step << "\n";
    total -= step;
  }
}

// Shared attacker/receiver/victim program. All phases live in one
// image; the harness acts as the scheduler, pointing pc at a phase
// label and presetting registers before each run: two contexts
// sharing one hart and one cache hierarchy.
class Harness {
 public:
  Harness(const AttackConfig& cfg, bool with_spectre_gadget)
      : cfg_(cfg), scfg_(cfg.base_config) {
    scfg_.mitigations = cfg.mitigations;
    scfg_.seed = cfg.seed;
    if (cfg_.probe_stride < 2 * scfg_.cache.l1.line_bytes)
      throw HarnessError("probe_stride below 2 cache lines");

    const ZoneMap& z = scfg_.zones;
    probe_base_ = z.dmz.start + 0x100000;
    if (probe_base_ + 256 * cfg_.probe_stride > z.dmz.end)
      throw HarnessError("probe array does not fit in the dmz");
    results_base_ = z.dmz.start + 0x80000;
    array1_base_ = z.dmz.start + 0x7F000;
    green_secret_ = z.green.start + 0x8000;
    kernel_secret_ = z.kernel.start + 0x800;
    staging_base_ = z.kernel.start + 0xA00;

    build_image(with_spectre_gadget);
    sim_ = std::make_unique<Simulator>(scfg_);
    std::string err;
    if (!sim_->load(image_, &err)) throw HarnessError("load failed: " + err);
    threshold_ = scfg_.threshold();
  }

  Simulator& sim() { return *sim_; }
  const ProgramImage& image() const { return image_; }
  Word probe_base() const { return probe_base_; }
  Word array1_base() const { return array1_base_; }
  Word green_secret() const { return green_secret_; }
  Word kernel_secret() const { return kernel_secret_; }
  Word staging_base() const { return staging_base_; }
  Word sym(const std::string& name) const { return image_.symbols.at(name); }

  RunReport run_phase(const std::string& label,
                      bool allow_trap = false) {
    MachineState& st = sim_->state();
    st.halted = false;
    st.pc = sym(label);
    // Probe base rides in t2 for every phase.
    st.set_reg(7, probe_base_);
    RunReport rep = sim_->run(4'000'000);
    if (rep.limit_exceeded) throw HarnessError("phase did not terminate");
    if (rep.final_state == StepKind::Trapped && !allow_trap)
      throw HarnessError(std::string("unexpected trap in phase ") + label);
    return rep;
  }

  void run_warm() { run_measure(); }

  void run_flush() {
    sim_->state().set_reg(29, probe_base_);  // t4
    run_phase("flushp");
  }

  // Times a reload of all 256 probe lines; returns the latencies.
  std::vector<std::uint32_t> run_measure() {
    MachineState& st = sim_->state();
    st.set_reg(29, probe_base_);    // t4 probe cursor
    st.set_reg(12, results_base_);  // a2 results cursor
    run_phase("measure");
    std::vector<std::uint32_t> lat(256);
    for (unsigned i = 0; i < 256; ++i)
      lat[i] = static_cast<std::uint32_t>(
          sim_->mem().load(results_base_ + 8 * i, 8));
    return lat;
  }

  // Sole sub-threshold probe index decodes the byte; anything else
  // (no hit, or an ambiguous all-hot sweep) decodes to 0.
  std::uint8_t decode(const std::vector<std::uint32_t>& lat) const {
    int hit = -1;
    int hits = 0;
    for (int i = 0; i < 256; ++i) {
      if (lat[i] < threshold_) {
        hit = i;
        ++hits;
      }
    }
    return hits == 1 ? static_cast<std::uint8_t>(hit) : 0;
  }

  std::uint32_t threshold() const { return threshold_; }

 private:
  void build_image(bool with_spectre_gadget) {
    std::ostringstream s;
    const ZoneMap& z = scfg_.zones;
    s << ".zone dmz\n.org 0x" << std::hex << z.dmz.start << std::dec << "\n";

    // Receiver: timed reload of probe[i] for i in 0..255, branch-free.
    // t4 = probe cursor, a2 = results cursor (both preset).
    s << "measure:\n";
    for (int i = 0; i < 256; ++i) {
      s << "    rdcycle t0\n"
           "    ld t3, 0(t4)\n"
           "    rdcycle t1\n"
           "    sub t1, t1, t0\n"
           "    sd t1, 0(a2)\n"
           "    addi a2, a2, 8\n";
      emit_add(s, "t4", cfg_.probe_stride);
    }
    s << "    ebreak\n";

    // Receiver: flush all probe lines. t4 preset to the probe base.
    s << "flushp:\n";
    for (int i = 0; i < 256; ++i) {
      s << "    cflush t4\n";
      emit_add(s, "t4", cfg_.probe_stride);
    }
    s << "    ebreak\n";

    if (with_spectre_gadget) {
      // Victim bounds-check gadget: if (a0 < a5) y = probe[array1[a0]
      // << 12]. c1 carries the array1 bounds.
      s << "gadget:\n"
           "    bgeu a0, a5, gskip\n"
           "    cload t5, a0(c1)\n"
           "    slli t5, t5, 12\n"
           "    add t5, t5, t2\n"
           "    ld t6, 0(t5)\n"
           "gskip:\n"
           "    ebreak\n";
      // Branchless masked variant: out-of-bounds indices collapse to 0
      // without a conditional branch, so no window ever opens.
      s << "gadget_nb:\n"
           "    sltu t5, a0, a5\n"
           "    sub t5, zero, t5\n"
           "    and t5, a0, t5\n"
           "    cload t5, t5(c1)\n"
           "    slli t5, t5, 12\n"
           "    add t5, t5, t2\n"
           "    ld t6, 0(t5)\n"
           "    ebreak\n";
    }

    // Meltdown gadget: user-mode load of a kernel byte (a0), dependent
    // probe touch. The architectural fault arrives when the deferred
    // window resolves.
    s << "leak:\n"
         "    lbu t5, 0(a0)\n"
         "    slli t5, t5, 12\n"
         "    add t5, t5, t2\n"
         "    ld t6, 0(t5)\n"
         "    ebreak\n";

    // DMZ program that patches trusted green-zone code (integrity
    // scenario). a0 = target address.
    s << "patch:\n"
         "    li t5, 0x6f\n"
         "    sb t5, 0(a0)\n"
         "    ebreak\n";

    // Victim/sender context in the green zone: touches
    // probe[secret_byte << 12]. a0 = secret byte address.
    s << ".zone green\n.org 0x" << std::hex << (z.green.start + 0x1000)
      << std::dec << "\n";
    s << "sender:\n"
         "    lbu t5, 0(a0)\n"
         "    slli t5, t5, 12\n"
         "    add t5, t5, t2\n"
         "    ld t6, 0(t5)\n"
         "    ebreak\n";

    // Kernel-mode TPM driver stub: copies a buffer (a0, length a4)
    // into the command FIFO at a3 while keeping a staging copy at a1.
    s << ".zone kernel\n.org 0x" << std::hex << (z.kernel.start + 0x100)
      << std::dec << "\n";
    s << "kstage:\n"
         "    lbu t5, 0(a0)\n"
         "    sb t5, 0(a1)\n"
         "    sw t5, 0(a3)\n"
         "    addi a0, a0, 1\n"
         "    addi a1, a1, 1\n"
         "    addi a4, a4, -1\n"
         "    bne a4, zero, kstage\n"
         "    ebreak\n";

    AsmOptions opt;
    opt.speculation_barriers = scfg_.mitigations.speculation_barriers;
    AsmResult r = assemble(s.str(), opt);
    if (std::holds_alternative<AsmError>(r))
      throw HarnessError("harness assembly failed: " +
                         std::get<AsmError>(r).message);
    image_ = std::get<ProgramImage>(r);
  }

  AttackConfig cfg_;
  SimConfig scfg_;
  std::unique_ptr<Simulator> sim_;
  ProgramImage image_;
  Word probe_base_ = 0;
  Word results_base_ = 0;
  Word array1_base_ = 0;
  Word green_secret_ = 0;
  Word kernel_secret_ = 0;
  Word staging_base_ = 0;
  std::uint32_t threshold_ = 0;
};

inline void finish_report(AttackReport& rep, Harness& h,
                          const std::string& secret) {
  std::size_t correct = 0;
  for (std::size_t i = 0; i < secret.size(); ++i)
    if (i < rep.recovered.size() &&
        rep.recovered[i] == static_cast<std::uint8_t>(secret[i]))
      ++correct;
  rep.accuracy = secret.empty()
                     ? 1.0
                     : static_cast<double>(correct) / secret.size();
  rep.total_cycles = h.sim().state().cycle;
  const SimStats& st = h.sim().stats();
  rep.windows_opened = st.windows_opened;
  rep.transient_cap_faults = st.transient_cap_faults;
  for (const TraceEntry& t : h.sim().cache().trace)
    if (t.transient && t.filled) ++rep.transient_fills;
  if (secret.empty()) {
    rep.verdict = Verdict::Blocked;
    rep.note = "empty secret: nothing to leak";
  } else {
    rep.verdict = verdict_for(rep.accuracy);
  }
}

inline void record_latencies(AttackReport& rep, unsigned trial,
                             const std::vector<std::uint32_t>& lat) {
  for (std::uint32_t l : lat) ++rep.latency_histogram[l];
  if (trial == 0) rep.probe_latencies.push_back(lat);
}

}  // namespace attacks_detail

// Flush+Reload: the green-zone sender touches probe[byte << 12]; the
// DMZ receiver flushes, yields, and times reloads over the shared
// hierarchy.
inline AttackReport run_flush_reload(const AttackConfig& cfg) {
  using attacks_detail::Harness;
  Harness h(cfg, /*with_spectre_gadget=*/false);
  AttackReport rep;
  rep.attack_name = "flush_reload";
  rep.mitigations = cfg.mitigations;

  const Word secret_addr = h.green_secret();
  h.sim().mem().write_block(
      secret_addr,
      {reinterpret_cast<const std::uint8_t*>(cfg.secret.data()),
       cfg.secret.size()});

  rep.recovered.assign(cfg.secret.size(), 0);
  for (std::size_t k = 0; k < cfg.secret.size(); ++k) {
    for (unsigned trial = 0; trial < cfg.trials; ++trial) {
      h.run_warm();
      h.run_flush();
      h.sim().state().set_reg(10, secret_addr + k);  // a0
      h.run_phase("sender");
      std::vector<std::uint32_t> lat = h.run_measure();
      attacks_detail::record_latencies(rep, trial, lat);
      rep.recovered[k] = h.decode(lat);
    }
  }
  attacks_detail::finish_report(rep, h, cfg.secret);
  return rep;
}

// Spectre v1: train the bounds-check branch with in-bounds indices,
// then supply an out-of-bounds index addressing the green-zone secret;
// the mispredicted shadow performs the dependent probe load.
inline AttackReport run_spectre_v1(const AttackConfig& cfg) {
  using attacks_detail::Harness;
  Harness h(cfg, /*with_spectre_gadget=*/true);
  AttackReport rep;
  rep.attack_name = "spectre_v1";
  rep.mitigations = cfg.mitigations;

  Simulator& sim = h.sim();
  const Word secret_addr = h.green_secret();
  sim.mem().write_block(
      secret_addr,
      {reinterpret_cast<const std::uint8_t*>(cfg.secret.data()),
       cfg.secret.size()});
  // array1: 16 in-bounds bytes with values 0..15.
  for (Word i = 0; i < 16; ++i)
    sim.mem().poke(h.array1_base() + i, static_cast<std::uint8_t>(i));
  // The victim's authority over array1, nothing more.
  sim.state().caps.c[1] =
      Capability::root(h.array1_base(), 16, PERM_LOAD);

  const std::string gadget =
      cfg.mitigations.branch_avoidance ? "gadget_nb" : "gadget";
  std::mt19937_64 rng(cfg.seed);

  rep.recovered.assign(cfg.secret.size(), 0);
  for (std::size_t k = 0; k < cfg.secret.size(); ++k) {
    for (unsigned trial = 0; trial < cfg.trials; ++trial) {
      // Train with in-bounds indices (their architectural probe
      // touches are flushed away below).
      for (int t = 0; t < 4; ++t) {
        sim.state().set_reg(10, rng() % 16);  // a0
        sim.state().set_reg(15, 16);          // a5 = array1 length
        h.run_phase(gadget);
      }
      h.run_warm();
      h.run_flush();
      // Out-of-bounds index: array1_base + a0 lands on the secret.
      sim.state().set_reg(10, secret_addr + k - h.array1_base());
      sim.state().set_reg(15, 16);
      h.run_phase(gadget);
      std::vector<std::uint32_t> lat = h.run_measure();
      attacks_detail::record_latencies(rep, trial, lat);
      rep.recovered[k] = h.decode(lat);
    }
  }
  attacks_detail::finish_report(rep, h, cfg.secret);
  return rep;
}

// Meltdown: a user-mode DMZ program loads a kernel byte under the
// deferred privilege check and forwards it into the probe array before
// the architectural fault lands.
inline AttackReport run_meltdown(const AttackConfig& cfg) {
  using attacks_detail::Harness;
  Harness h(cfg, /*with_spectre_gadget=*/false);
  AttackReport rep;
  rep.attack_name = "meltdown";
  rep.mitigations = cfg.mitigations;

  Simulator& sim = h.sim();
  Word secret_addr = h.kernel_secret();
  const std::span<const std::uint8_t> secret_bytes{
      reinterpret_cast<const std::uint8_t*>(cfg.secret.data()),
      cfg.secret.size()};

  if (cfg.tpm_staging && !cfg.secret.empty()) {
    // A kernel driver composes a TPM command holding the secret; the
    // staging copy in kernel RAM is the meltdown target.
    const Word src = sim.config().zones.green.start + 0xC000;
    sim.mem().write_block(src, secret_bytes);
    MachineState& st = sim.state();
    st.mode = PrivilegeMode::Kernel;
    st.set_reg(10, src);                 // a0 source
    st.set_reg(11, h.staging_base());    // a1 staging buffer
    st.set_reg(13, sim.config().zones.tpm_mmio.start +
                       TpmDevice::kRegData);  // a3 FIFO
    st.set_reg(14, cfg.secret.size());   // a4 length
    h.run_phase("kstage");
    st.mode = PrivilegeMode::User;
    secret_addr = h.staging_base();
    rep.note = "target: kernel TPM command staging buffer";
  } else {
    sim.mem().write_block(secret_addr, secret_bytes);
  }

  rep.recovered.assign(cfg.secret.size(), 0);
  for (std::size_t k = 0; k < cfg.secret.size(); ++k) {
    for (unsigned trial = 0; trial < cfg.trials; ++trial) {
      h.run_warm();
      h.run_flush();
      sim.state().set_reg(10, secret_addr + k);  // a0
      RunReport r = h.run_phase("leak", /*allow_trap=*/true);
      if (r.final_state != StepKind::Trapped)
        throw HarnessError("meltdown gadget did not fault");
      std::vector<std::uint32_t> lat = h.run_measure();
      attacks_detail::record_latencies(rep, trial, lat);
      rep.recovered[k] = h.decode(lat);
    }
  }
  attacks_detail::finish_report(rep, h, cfg.secret);
  return rep;
}

struct CovertChannelReport {
  std::uint64_t bits_sent = 0;
  std::uint64_t bits_correct = 0;
  std::uint64_t cycles = 0;
  double bandwidth_bits_per_kcycle = 0.0;
};

inline nlohmann::json covert_report_to_json(const CovertChannelReport& r) {
  return {{"bits_sent", r.bits_sent},
          {"bits_correct", r.bits_correct},
          {"cycles", r.cycles},
          {"bandwidth_bits_per_kcycle", r.bandwidth_bits_per_kcycle}};
}

// Streams a seeded pseudo-random message through the Flush+Reload
// channel, green zone to DMZ, and measures throughput and error rate.
inline CovertChannelReport covert_channel_bench(const AttackConfig& cfg,
                                                std::size_t message_bytes) {
  using attacks_detail::Harness;
  Harness h(cfg, /*with_spectre_gadget=*/false);
  Simulator& sim = h.sim();

  std::mt19937_64 rng(cfg.seed);
  std::vector<std::uint8_t> message(message_bytes);
  for (auto& b : message) b = static_cast<std::uint8_t>(rng());

  const Word buf = h.green_secret();
  sim.mem().write_block(buf, message);

  CovertChannelReport rep;
  for (std::size_t k = 0; k < message.size(); ++k) {
    h.run_warm();
    h.run_flush();
    sim.state().set_reg(10, buf + k);  // a0
    h.run_phase("sender");
    const std::uint8_t got = h.decode(h.run_measure());
    const std::uint8_t diff = got ^ message[k];
    rep.bits_sent += 8;
    rep.bits_correct += 8 - std::popcount(static_cast<unsigned>(diff));
  }
  rep.cycles = sim.state().cycle;
  if (rep.cycles > 0)
    rep.bandwidth_bits_per_kcycle =
        1000.0 * static_cast<double>(rep.bits_sent) /
        static_cast<double>(rep.cycles);
  return rep;
}

struct IntegrityScenarioReport {
  bool violation_detected = false;
  Word region_start = 0;
};

// Fourth mini-scenario: a DMZ program patches green-zone victim code;
// load-time digests expose the modification after the run.
inline IntegrityScenarioReport run_integrity_patch(const AttackConfig& cfg) {
  using attacks_detail::Harness;
  Harness h(cfg, /*with_spectre_gadget=*/false);
  Simulator& sim = h.sim();
  sim.state().set_reg(10, h.sym("sender"));  // a0: green code target
  h.run_phase("patch");
  IntegrityScenarioReport rep;
  if (auto v = verify_integrity(sim.integrity_records(), sim.mem())) {
    rep.violation_detected = true;
    rep.region_start = v->region.start;
  }
  return rep;
}

struct MatrixRow {
  std::string name;
  Mitigations mitigations;
  Verdict flush_reload = Verdict::Blocked;
  Verdict spectre = Verdict::Blocked;
  Verdict meltdown = Verdict::Blocked;
};

// Runs all three attacks under baseline, each single mitigation, and
// the full mitigation set.
inline std::vector<MatrixRow> mitigation_matrix(unsigned trials,
                                                std::uint64_t seed) {
  static const char* kSingle[] = {
      "flush_disabled", "speculation_barriers", "branch_avoidance",
      "cap_enforce_transient", "kpti", "immediate_check", "integrity_check"};
  std::vector<MatrixRow> rows;
  rows.push_back({"baseline", Mitigations{}});
  for (const char* name : kSingle) {
    Mitigations m;
    set_mitigation(m, name, true);
    rows.push_back({name, m});
  }
  rows.push_back({"all", all_mitigations()});

  for (MatrixRow& row : rows) {
    AttackConfig cfg;
    cfg.secret = "KEY";
    cfg.trials = trials;
    cfg.seed = seed;
    cfg.mitigations = row.mitigations;
    row.flush_reload = run_flush_reload(cfg).verdict;
    row.spectre = run_spectre_v1(cfg).verdict;
    AttackConfig mc = cfg;
    mc.secret_zone = Zone::Kernel;
    row.meltdown = run_meltdown(mc).verdict;
  }
  return rows;
}

inline nlohmann::json matrix_to_json(const std::vector<MatrixRow>& rows) {
  nlohmann::json j = nlohmann::json::array();
  for (const MatrixRow& r : rows) {
    j.push_back({{"mitigation_set", r.name},
                 {"flush_reload", verdict_name(r.flush_reload)},
                 {"spectre_v1", verdict_name(r.spectre)},
                 {"meltdown", verdict_name(r.meltdown)}});
  }
  return j;
}

inline std::string matrix_to_text(const std::vector<MatrixRow>& rows) {
  std::ostringstream out;
  char buf[128];
  std::snprintf(buf, sizeof buf, "%-22s  %-12s  %-12s  %-12s\n",
                "mitigation set", "flush+reload", "spectre-v1", "meltdown");
  out << buf;
  for (const MatrixRow& r : rows) {
    std::snprintf(buf, sizeof buf, "%-22s  %-12s  %-12s  %-12s\n",
                  r.name.c_str(), verdict_name(r.flush_reload),
                  verdict_name(r.spectre), verdict_name(r.meltdown));
    out << buf;
  }
  return out.str();
}

}  // namespace trisa
