// End-to-end acceptance gate. Each test covers one release criterion
// and prints a single [PASS]/[FAIL] summary line.

#include <gtest/gtest.h>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include <json.hpp>

#include "helpers/fuzz_programs.hpp"
#include "helpers/ref_cache.hpp"
#include "trisa/attacks.hpp"

using namespace trisa;
namespace fs = std::filesystem;

namespace {

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(
               std::chrono::steady_clock::now() - start_)
        .count();
  }

 private:
  std::chrono::steady_clock::time_point start_ =
      std::chrono::steady_clock::now();
};

void report(int n, const std::string& what, bool ok) {
  std::printf("[%s] criterion %d: %s\n", ok ? "PASS" : "FAIL", n,
              what.c_str());
  std::fflush(stdout);
  EXPECT_TRUE(ok) << "criterion " << n << ": " << what;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::string matrix_json_text() {
  return matrix_to_json(mitigation_matrix(1, 1)).dump(2);
}

std::string spectre16_json_text() {
  AttackConfig cfg;
  cfg.secret = "0123456789ABCDEF";  // 16 bytes
  cfg.trials = 1;
  cfg.seed = 1;
  return report_to_json(run_spectre_v1(cfg)).dump(2);
}

}  // namespace

// 1. The mitigation matrix reproduces the expected verdict for every
//    attack x mitigation combination within the time budget.
TEST(Acceptance, Criterion1MitigationMatrix) {
  Stopwatch sw;
  const std::vector<MatrixRow> rows = mitigation_matrix(1, 1);
  // name, flush+reload, spectre-v1, meltdown (L = Leaked, B = Blocked)
  const struct {
    const char* name;
    char fr, sp, me;
  } expected[] = {
      {"baseline", 'L', 'L', 'L'},
      {"flush_disabled", 'B', 'B', 'B'},
      {"speculation_barriers", 'L', 'B', 'L'},
      {"branch_avoidance", 'L', 'B', 'L'},
      {"cap_enforce_transient", 'L', 'B', 'L'},
      {"kpti", 'L', 'L', 'B'},
      {"immediate_check", 'L', 'L', 'B'},
      {"integrity_check", 'L', 'L', 'L'},
      {"all", 'B', 'B', 'B'},
  };
  bool ok = rows.size() == std::size(expected);
  auto v = [](char c) { return c == 'L' ? Verdict::Leaked : Verdict::Blocked; };
  for (std::size_t i = 0; ok && i < rows.size(); ++i) {
    ok = rows[i].name == expected[i].name &&
         rows[i].flush_reload == v(expected[i].fr) &&
         rows[i].spectre == v(expected[i].sp) &&
         rows[i].meltdown == v(expected[i].me);
    if (!ok)
      ADD_FAILURE() << "row " << rows[i].name << ": "
                    << verdict_name(rows[i].flush_reload) << "/"
                    << verdict_name(rows[i].spectre) << "/"
                    << verdict_name(rows[i].meltdown);
  }
  const double t = sw.seconds();
  ok = ok && t < 60.0;
  report(1, "mitigation matrix verdicts exact (" +
                std::to_string(t).substr(0, 5) + "s)",
         ok);
}

// 2. Spectre v1 recovers a 16-byte secret with accuracy 1.0 in under
//    five seconds.
TEST(Acceptance, Criterion2SpectreSixteenBytes) {
  Stopwatch sw;
  AttackConfig cfg;
  cfg.secret = "0123456789ABCDEF";
  cfg.trials = 1;
  cfg.seed = 1;
  AttackReport rep = run_spectre_v1(cfg);
  const double t = sw.seconds();
  const bool ok = rep.accuracy == 1.0 && rep.verdict == Verdict::Leaked &&
                  std::string(rep.recovered.begin(), rep.recovered.end()) ==
                      cfg.secret &&
                  t < 5.0;
  report(2, "spectre v1 recovers 16-byte secret at accuracy 1.0 (" +
                std::to_string(t).substr(0, 5) + "s)",
         ok);
}

// 3. The production cache hierarchy agrees exactly with a brute-force
//    recency-list reference over 1e5 random accesses and flushes.
TEST(Acceptance, Criterion3CacheOracle) {
  Stopwatch sw;
  CacheParams p;
  p.l1 = {4 * 1024, 64, 2, 4, false};
  p.l2 = {8 * 1024, 64, 4, 12, false};
  p.l3 = {16 * 1024, 64, 4, 40, true};
  CacheHierarchy prod(p);
  prod.record_trace = false;
  trisa_test::RefCache ref(p);

  std::mt19937_64 rng(0xACCE55);
  const Word span = 64 * 1024;
  bool ok = true;
  for (int i = 0; ok && i < 100000; ++i) {
    const Word addr = rng() % span;
    if (rng() % 16 == 0) {
      prod.flush_line(addr);
      ref.flush(addr);
      continue;
    }
    const HitLevel got = prod.access(addr, MemKind::Read, false, i).level;
    const HitLevel want = ref.access(addr);
    if (got != want) {
      ADD_FAILURE() << "access " << i << " addr 0x" << std::hex << addr
                    << ": got " << hit_level_name(got) << " want "
                    << hit_level_name(want);
      ok = false;
    }
    if (i % 5000 == 0) {
      ok = ok && ref.inclusive();
      for (int lvl = 0; lvl < 3 && ok; ++lvl) {
        const auto hl = static_cast<HitLevel>(lvl);
        for (Word line : prod.lines_at(hl))
          if (!ref.resident(line * p.l1.line_bytes, hl)) ok = false;
      }
    }
  }
  const double t = sw.seconds();
  ok = ok && t < 10.0;
  report(3, "cache model matches brute-force reference over 1e5 accesses (" +
                std::to_string(t).substr(0, 5) + "s)",
         ok);
}

// 4. Squashed speculation is architecturally invisible across at least
//    one hundred fuzzed programs.
TEST(Acceptance, Criterion4SquashSoundness) {
  std::mt19937_64 rng(0xBADC0DE);
  std::uint64_t windows = 0;
  bool ok = true;
  for (int prog = 0; ok && prog < 100; ++prog) {
    const std::string src = trisa_test::fuzz_program(rng);
    AsmResult r = assemble(src);
    if (!std::holds_alternative<ProgramImage>(r)) {
      ok = false;
      break;
    }
    const ProgramImage& img = std::get<ProgramImage>(r);
    auto run_with_window = [&img](std::uint32_t window, std::uint64_t* opened) {
      SimConfig cfg;
      cfg.speculation.window = window;
      cfg.record_trace = false;
      Simulator sim(cfg);
      std::string err;
      if (!sim.load(img, &err)) throw HarnessError(err);
      sim.state().regs[28] = 0x160000;
      sim.run(20000);
      if (opened) *opened += sim.stats().windows_opened;
      auto view = sim.mem().view(0x160000, 256);
      return std::pair{sim.state().regs,
                       std::vector<std::uint8_t>(view.begin(), view.end())};
    };
    auto spec = run_with_window(SimConfig{}.speculation.window, &windows);
    auto base = run_with_window(0, nullptr);
    if (spec != base) {
      ADD_FAILURE() << "divergence in program " << prog;
      ok = false;
    }
  }
  ok = ok && windows > 0;
  report(4, "squashed windows invisible across 100 fuzzed programs (" +
                std::to_string(windows) + " windows)",
         ok);
}

// 5. Capability derivation is monotone and memory tags cannot survive
//    plain-data overwrites, each over 1e4 randomized cases.
TEST(Acceptance, Criterion5CapabilityInvariants) {
  std::mt19937_64 rng(0x5EED);
  bool ok = true;

  for (int iter = 0; ok && iter < 10000; ++iter) {
    const Word base = rng() % 0x10000;
    const Word len = 1 + rng() % 0x10000;
    Capability cur = Capability::root(base, len, kNonSealingPerms);
    for (int step = 0; ok && step < 6; ++step) {
      if (rng() % 2) {
        const Word nb = cur.base + rng() % (cur.length + 1);
        const Word nl = rng() % (cur.base + cur.length - nb + 1);
        CapResult r = set_bounds(cur, nb, nl);
        if (!cap_ok(r) || cap_value(r).base < cur.base ||
            cap_value(r).base + cap_value(r).length > cur.base + cur.length)
          ok = false;
        else
          cur = cap_value(r);
        // Any widening attempt must fault.
        if (cur.base > 0 && cap_ok(set_bounds(cur, cur.base - 1, cur.length)))
          ok = false;
        if (cap_ok(set_bounds(cur, cur.base, cur.length + 1))) ok = false;
      } else {
        const auto mask = static_cast<std::uint32_t>(rng());
        CapResult r = and_perms(cur, mask);
        if (!cap_ok(r) || (cap_value(r).perms & ~cur.perms) != 0)
          ok = false;
        else
          cur = cap_value(r);
      }
    }
  }
  if (!ok) ADD_FAILURE() << "capability monotonicity violated";

  Memory mem(0x40000);
  bool tags_ok = true;
  for (int iter = 0; tags_ok && iter < 10000; ++iter) {
    const Word addr = (rng() % 0x3000) * Memory::kGranule;
    Capability cap = Capability::root(rng() % 0x1000, 64, PERM_LOAD);
    mem.store_capability(addr, cap);
    if (!mem.tag_at(addr) || !(mem.load_capability(addr) == cap)) {
      tags_ok = false;
      break;
    }
    const Word hit = addr + rng() % Memory::kGranule;
    mem.store(hit, 1, rng() & 0xFF);
    if (mem.tag_at(addr) || mem.load_capability(addr).tag) tags_ok = false;
  }
  if (!tags_ok) ADD_FAILURE() << "tag integrity violated";

  ok = ok && tags_ok;
  report(5, "capability monotonicity and tag integrity over 1e4 cases each",
         ok);
}

// 6. TPM key material never appears in the simulated address space, and
//    1e3 seal/unseal round trips detect every single-byte corruption.
TEST(Acceptance, Criterion6TpmIsolation) {
  bool ok = true;

  // Create a key through the MMIO path, as platform software would.
  Simulator sim;
  TpmDevice& tpm = sim.tpm();
  tpm.mmio_write(TpmDevice::kRegData, TpmDevice::kCreateKey);
  tpm.mmio_write(TpmDevice::kRegData, 0);
  tpm.mmio_write(TpmDevice::kRegCmd, 1);
  if (tpm.mmio_read(TpmDevice::kRegData) != 0) ok = false;  // status Ok
  const auto key = tpm.key_material(0);
  if (!key || !ok) ok = false;

  // Exercise the device so any leak would have had a chance to land,
  // then sweep every mapped byte for key-material substrings.
  if (ok) {
    std::vector<std::uint8_t> payload{1, 2, 3, 4, 5, 6, 7, 8};
    auto blob = tpm.seal(0, payload);
    ok = blob.status == TpmStatus::Ok;
    sim.mem().write_block(0x140000, blob.payload);  // blob may be stored
    const auto view = sim.mem().view(0, sim.mem().size());
    for (std::size_t w = 0; ok && w + 8 <= key->size(); ++w) {
      auto first = key->begin() + w;
      if (std::search(view.begin(), view.end(), first, first + 8) !=
          view.end()) {
        ADD_FAILURE() << "key bytes found in simulated memory";
        ok = false;
      }
    }
  }

  // Seal/unseal corpus with per-blob corruption detection.
  std::mt19937_64 rng(99);
  TpmDevice dev(EntropySource::deterministic(7));
  dev.create_key(1);
  for (int iter = 0; ok && iter < 1000; ++iter) {
    std::vector<std::uint8_t> data(rng() % 64);
    for (auto& b : data) b = static_cast<std::uint8_t>(rng());
    auto sealed = dev.seal(1, data);
    auto back = dev.unseal(1, sealed.payload);
    if (sealed.status != TpmStatus::Ok || back.status != TpmStatus::Ok ||
        back.payload != data) {
      ok = false;
      break;
    }
    auto corrupt = sealed.payload;
    corrupt[rng() % corrupt.size()] ^=
        static_cast<std::uint8_t>(1 + rng() % 255);
    if (dev.unseal(1, corrupt).status != TpmStatus::UnsealFailed) {
      ADD_FAILURE() << "corrupted blob unsealed at iteration " << iter;
      ok = false;
    }
  }
  report(6, "TPM key isolation sweep and 1e3 tamper-evident seal round trips",
         ok);
}

// 7. The CPU matches the independent source-level reference executor on
//    the whole conformance corpus.
TEST(Acceptance, Criterion7IsaConformance) {
  const fs::path corpus = fs::path(TRISA_SOURCE_DIR) / "tests" / "corpus";
  nlohmann::json expected =
      nlohmann::json::parse(slurp(corpus / "expected.json"));
  std::size_t checked = 0;
  bool ok = true;
  for (const auto& entry : fs::directory_iterator(corpus)) {
    if (entry.path().extension() != ".trs") continue;
    const std::string name = entry.path().filename().string();
    AsmResult r = assemble(slurp(entry.path()));
    if (!std::holds_alternative<ProgramImage>(r) || !expected.contains(name)) {
      ok = false;
      break;
    }
    SimConfig cfg;
    cfg.record_trace = false;
    Simulator sim(cfg);
    std::string err;
    if (!sim.load(std::get<ProgramImage>(r), &err) ||
        sim.run(1'000'000).final_state != StepKind::Halted) {
      ok = false;
      break;
    }
    const auto& regs = expected.at(name).at("regs");
    for (unsigned i = 1; ok && i < 32; ++i) {
      char buf[32];
      std::snprintf(buf, sizeof buf, "0x%llx",
                    static_cast<unsigned long long>(sim.state().reg(i)));
      if (regs[i - 1].get<std::string>() != buf) {
        ADD_FAILURE() << name << " x" << i;
        ok = false;
      }
    }
    if (!ok) break;
    ++checked;
  }
  ok = ok && checked >= 40;
  report(7, "ISA conformance against the independent reference (" +
                std::to_string(checked) + " programs)",
         ok);
}

// 8. The headline artifacts are bit-for-bit reproducible.
TEST(Acceptance, Criterion8Determinism) {
  const std::string m1 = matrix_json_text();
  const std::string m2 = matrix_json_text();
  const std::string s1 = spectre16_json_text();
  const std::string s2 = spectre16_json_text();
  const bool ok = m1 == m2 && s1 == s2 && !m1.empty() && !s1.empty();
  if (m1 != m2) ADD_FAILURE() << "matrix JSON differs between reruns";
  if (s1 != s2) ADD_FAILURE() << "spectre report JSON differs between reruns";
  report(8, "matrix and spectre report JSON byte-identical across reruns",
         ok);
}
