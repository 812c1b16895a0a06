#include <gtest/gtest.h>

#include <random>

#include "trisa/attacks.hpp"

using namespace trisa;

namespace {

AttackConfig basic(const std::string& secret) {
  AttackConfig cfg;
  cfg.secret = secret;
  cfg.trials = 1;
  cfg.seed = 1;
  return cfg;
}

std::string recovered_text(const AttackReport& r) {
  return std::string(r.recovered.begin(), r.recovered.end());
}

}  // namespace

TEST(FlushReload, RecoversSingleByte) {
  AttackReport rep = run_flush_reload(basic("A"));
  ASSERT_EQ(rep.recovered.size(), 1u);
  EXPECT_EQ(rep.recovered[0], 'A');
  EXPECT_DOUBLE_EQ(rep.accuracy, 1.0);
  EXPECT_EQ(rep.verdict, Verdict::Leaked);
  EXPECT_EQ(rep.windows_opened, 0u);  // purely architectural channel
  // Histogram is bimodal: sub- and super-threshold populations exist.
  bool fast = false, slow = false;
  for (const auto& [lat, n] : rep.latency_histogram) {
    if (lat < 120) fast = true;
    if (lat >= 120) slow = true;
  }
  EXPECT_TRUE(fast);
  EXPECT_TRUE(slow);
}

TEST(FlushReload, FlushDisabledBlocks) {
  AttackConfig cfg = basic("A");
  cfg.mitigations.flush_disabled = true;
  AttackReport rep = run_flush_reload(cfg);
  EXPECT_EQ(rep.verdict, Verdict::Blocked);
  EXPECT_EQ(rep.recovered[0], 0);  // ambiguous all-hot sweep
}

TEST(FlushReload, EmptySecretIsVacuouslyBlocked) {
  AttackReport rep = run_flush_reload(basic(""));
  EXPECT_DOUBLE_EQ(rep.accuracy, 1.0);
  EXPECT_EQ(rep.verdict, Verdict::Blocked);
  EXPECT_FALSE(rep.note.empty());
}

TEST(FlushReload, LongerSecretRoundTrips) {
  AttackReport rep = run_flush_reload(basic("green-zone secret"));
  EXPECT_EQ(recovered_text(rep), "green-zone secret");
  EXPECT_DOUBLE_EQ(rep.accuracy, 1.0);
}

TEST(Spectre, RecoversTrisaString) {
  AttackReport rep = run_spectre_v1(basic("TRISA"));
  EXPECT_EQ(recovered_text(rep), "TRISA");
  EXPECT_DOUBLE_EQ(rep.accuracy, 1.0);
  EXPECT_EQ(rep.verdict, Verdict::Leaked);
  EXPECT_GT(rep.windows_opened, 0u);
  EXPECT_GT(rep.transient_fills, 0u);  // the leak rode a transient fill
}

TEST(Spectre, SpeculationBarriersBlock) {
  AttackConfig cfg = basic("TRISA");
  cfg.mitigations.speculation_barriers = true;
  AttackReport rep = run_spectre_v1(cfg);
  EXPECT_EQ(rep.verdict, Verdict::Blocked);
  EXPECT_EQ(rep.transient_fills, 0u);  // fence ends the window first
}

TEST(Spectre, TransientCapabilityChecksBlock) {
  AttackConfig cfg = basic("TRISA");
  cfg.mitigations.cap_enforce_transient = true;
  AttackReport rep = run_spectre_v1(cfg);
  EXPECT_EQ(rep.verdict, Verdict::Blocked);
  EXPECT_GT(rep.transient_cap_faults, 0u);
  EXPECT_EQ(rep.transient_fills, 0u);
}

TEST(Spectre, BranchAvoidanceNeverOpensAWindow) {
  AttackConfig cfg = basic("TRISA");
  cfg.mitigations.branch_avoidance = true;
  AttackReport rep = run_spectre_v1(cfg);
  EXPECT_EQ(rep.verdict, Verdict::Blocked);
  EXPECT_EQ(rep.windows_opened, 0u);
}

TEST(Spectre, IrrelevantMitigationStillLeaks) {
  AttackConfig cfg = basic("TRISA");
  cfg.mitigations.kpti = true;  // addresses meltdown, not spectre
  AttackReport rep = run_spectre_v1(cfg);
  EXPECT_EQ(rep.verdict, Verdict::Leaked);
  EXPECT_EQ(recovered_text(rep), "TRISA");
}

TEST(Meltdown, RecoversKernelByte) {
  AttackConfig cfg = basic(std::string(1, '\x2A'));
  cfg.secret_zone = Zone::Kernel;
  AttackReport rep = run_meltdown(cfg);
  ASSERT_EQ(rep.recovered.size(), 1u);
  EXPECT_EQ(rep.recovered[0], 0x2A);
  EXPECT_EQ(rep.verdict, Verdict::Leaked);
  // Exactly one sub-threshold probe, at the secret's index.
  ASSERT_EQ(rep.probe_latencies.size(), 1u);
  const auto& lat = rep.probe_latencies[0];
  ASSERT_EQ(lat.size(), 256u);
  int hits = 0;
  for (int i = 0; i < 256; ++i)
    if (lat[i] < 120) {
      ++hits;
      EXPECT_EQ(i, 0x2A);
    }
  EXPECT_EQ(hits, 1);
}

TEST(Meltdown, KptiLeavesOnlyTheZeroLine) {
  AttackConfig cfg = basic(std::string(1, '\x2A'));
  cfg.secret_zone = Zone::Kernel;
  cfg.mitigations.kpti = true;
  AttackReport rep = run_meltdown(cfg);
  EXPECT_EQ(rep.verdict, Verdict::Blocked);
  const auto& lat = rep.probe_latencies.at(0);
  EXPECT_LT(lat[0], 120u);
  for (int i = 1; i < 256; ++i) EXPECT_GE(lat[i], 120u) << i;
}

TEST(Meltdown, ImmediateCheckPreventsTransientAccess) {
  AttackConfig cfg = basic(std::string(1, '\x2A'));
  cfg.secret_zone = Zone::Kernel;
  cfg.mitigations.immediate_check = true;
  AttackReport rep = run_meltdown(cfg);
  EXPECT_EQ(rep.verdict, Verdict::Blocked);
  EXPECT_EQ(rep.windows_opened, 0u);
  EXPECT_EQ(rep.transient_fills, 0u);
}

TEST(Meltdown, TpmStagingBufferIsEquallyExposed) {
  AttackConfig cfg = basic("Q");
  cfg.secret_zone = Zone::Kernel;
  cfg.tpm_staging = true;
  AttackReport rep = run_meltdown(cfg);
  EXPECT_EQ(rep.recovered.at(0), 'Q');
  EXPECT_EQ(rep.verdict, Verdict::Leaked);
  EXPECT_NE(rep.note.find("staging"), std::string::npos);

  cfg.mitigations.kpti = true;
  EXPECT_EQ(run_meltdown(cfg).verdict, Verdict::Blocked);
}

TEST(Attacks, ReportsAreDeterministic) {
  AttackConfig cfg = basic("KEY");
  cfg.seed = 42;
  const std::string a = report_to_json(run_spectre_v1(cfg)).dump(2);
  const std::string b = report_to_json(run_spectre_v1(cfg)).dump(2);
  EXPECT_EQ(a, b);
  const std::string c = report_to_json(run_flush_reload(cfg)).dump(2);
  const std::string d = report_to_json(run_flush_reload(cfg)).dump(2);
  EXPECT_EQ(c, d);
}

// Adding an attack's designated mitigation to any mitigation set yields
// a Blocked verdict: mitigation composition never reopens a channel.
TEST(Attacks, DesignatedMitigationDominates) {
  static const char* kNames[] = {
      "flush_disabled", "speculation_barriers", "branch_avoidance",
      "cap_enforce_transient", "kpti", "immediate_check", "integrity_check"};
  std::mt19937_64 rng(3);
  for (int iter = 0; iter < 6; ++iter) {
    Mitigations base;
    for (const char* n : kNames)
      if (rng() % 2) set_mitigation(base, n, true);

    AttackConfig cfg = basic("Z");
    cfg.mitigations = base;
    set_mitigation(cfg.mitigations, "speculation_barriers", true);
    EXPECT_EQ(run_spectre_v1(cfg).verdict, Verdict::Blocked);

    cfg.mitigations = base;
    set_mitigation(cfg.mitigations, "kpti", true);
    cfg.secret_zone = Zone::Kernel;
    EXPECT_EQ(run_meltdown(cfg).verdict, Verdict::Blocked);

    cfg.mitigations = base;
    cfg.secret_zone = Zone::Green;
    set_mitigation(cfg.mitigations, "flush_disabled", true);
    EXPECT_EQ(run_flush_reload(cfg).verdict, Verdict::Blocked);
  }
}

TEST(Attacks, VerdictRuleMatchesAccuracy) {
  EXPECT_EQ(verdict_for(1.0), Verdict::Leaked);
  EXPECT_EQ(verdict_for(0.26), Verdict::Leaked);
  EXPECT_EQ(verdict_for(0.25 + 1.0 / 256.0), Verdict::Blocked);
  EXPECT_EQ(verdict_for(0.0), Verdict::Blocked);
}

TEST(Attacks, RejectsDegenerateProbeStride) {
  AttackConfig cfg = basic("A");
  cfg.probe_stride = 64;  // below two cache lines
  EXPECT_THROW(run_flush_reload(cfg), HarnessError);
}

TEST(CovertChannel, PerfectTransferAtBaseline) {
  CovertChannelReport rep = covert_channel_bench(basic(""), 128);
  EXPECT_EQ(rep.bits_sent, 1024u);
  EXPECT_EQ(rep.bits_correct, 1024u);
  EXPECT_GT(rep.bandwidth_bits_per_kcycle, 0.0);
}

TEST(CovertChannel, FlushDisabledDegradesToChance) {
  AttackConfig cfg = basic("");
  cfg.mitigations.flush_disabled = true;
  CovertChannelReport rep = covert_channel_bench(cfg, 128);
  const double frac = static_cast<double>(rep.bits_correct) /
                      static_cast<double>(rep.bits_sent);
  EXPECT_GT(frac, 0.45);
  EXPECT_LT(frac, 0.55);
}

TEST(CovertChannel, OneByteMessageIsEightBits) {
  CovertChannelReport rep = covert_channel_bench(basic(""), 1);
  EXPECT_EQ(rep.bits_sent, 8u);
  EXPECT_EQ(rep.bits_correct, 8u);
}

TEST(Integrity, PatchedVictimCodeIsDetected) {
  IntegrityScenarioReport rep = run_integrity_patch(basic(""));
  EXPECT_TRUE(rep.violation_detected);
  SimConfig def;
  EXPECT_EQ(rep.region_start, def.zones.green.start + 0x1000);
}

TEST(Matrix, ShapeAndAnchorRows) {
  std::vector<MatrixRow> rows = mitigation_matrix(1, 1);
  ASSERT_EQ(rows.size(), 9u);
  EXPECT_EQ(rows.front().name, "baseline");
  EXPECT_EQ(rows.back().name, "all");
  EXPECT_EQ(rows.front().flush_reload, Verdict::Leaked);
  EXPECT_EQ(rows.front().spectre, Verdict::Leaked);
  EXPECT_EQ(rows.front().meltdown, Verdict::Leaked);
  EXPECT_EQ(rows.back().flush_reload, Verdict::Blocked);
  EXPECT_EQ(rows.back().spectre, Verdict::Blocked);
  EXPECT_EQ(rows.back().meltdown, Verdict::Blocked);
  for (const MatrixRow& r : rows) {
    if (r.name == "kpti") {
      // The mitigation only helps where it applies.
      EXPECT_EQ(r.flush_reload, Verdict::Leaked);
      EXPECT_EQ(r.spectre, Verdict::Leaked);
      EXPECT_EQ(r.meltdown, Verdict::Blocked);
    }
  }
  // Text and JSON renderings agree on the row count.
  EXPECT_EQ(matrix_to_json(rows).size(), 9u);
}
