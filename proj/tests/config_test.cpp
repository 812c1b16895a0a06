#include <gtest/gtest.h>

#include "trisa/config.hpp"

using namespace trisa;

TEST(Config, DefaultsRoundTrip) {
  SimConfig def;
  SimConfig back = config_from_json(config_to_json(def));
  EXPECT_EQ(back.cache.l1.size_bytes, def.cache.l1.size_bytes);
  EXPECT_EQ(back.cache.dram_latency, def.cache.dram_latency);
  EXPECT_EQ(back.predictor.entries, def.predictor.entries);
  EXPECT_EQ(back.speculation.window, def.speculation.window);
  EXPECT_EQ(back.zones.dmz.start, def.zones.dmz.start);
  EXPECT_EQ(back.zones.dmz.end, def.zones.dmz.end);
  EXPECT_EQ(back.seed, def.seed);
  EXPECT_EQ(back.flat_timing, def.flat_timing);
}

TEST(Config, ThresholdFollowsLatencies) {
  SimConfig c;
  EXPECT_EQ(c.threshold(), 120u);  // (40 + 200) / 2
  c.cache.dram_latency = 400;
  EXPECT_EQ(c.threshold(), 220u);
  c.latency_threshold = 77;
  EXPECT_EQ(c.threshold(), 77u);
}

TEST(Config, PartialDocumentKeepsDefaults) {
  SimConfig c = config_from_string(R"({"seed": 9,
    "mitigations": {"kpti": true}})");
  EXPECT_EQ(c.seed, 9u);
  EXPECT_TRUE(c.mitigations.kpti);
  EXPECT_FALSE(c.mitigations.flush_disabled);
  EXPECT_EQ(c.cache.l1.size_bytes, 32u * 1024);
}

TEST(Config, UnknownKeysRejected) {
  EXPECT_THROW(config_from_string(R"({"sede": 1})"), ConfigError);
  EXPECT_THROW(config_from_string(R"({"cache": {"l4": {}}})"), ConfigError);
  EXPECT_THROW(config_from_string(R"({"mitigations": {"pkti": true}})"),
               ConfigError);
  EXPECT_THROW(config_from_string(R"({"cache": {"l1": {"latency": "x"}}})"),
               ConfigError);
  EXPECT_THROW(config_from_string("not json"), ConfigError);
}

TEST(Config, BadGeometryRejected) {
  EXPECT_THROW(config_from_string(R"({"cache": {"l1": {"line": 48}}})"),
               ConfigError);
  EXPECT_THROW(config_from_string(R"({"cache": {"l1": {"size": 1000}}})"),
               ConfigError);
  EXPECT_THROW(config_from_string(R"({"predictor": {"init": 4}})"),
               ConfigError);
  EXPECT_THROW(config_from_string(R"({"zones": {"dmz": [16, 8]}})"),
               ConfigError);
}

TEST(Config, MitigationHelpers) {
  Mitigations m;
  EXPECT_TRUE(set_mitigation(m, "kpti", true));
  EXPECT_TRUE(m.kpti);
  EXPECT_FALSE(set_mitigation(m, "bogus", true));
  Mitigations all = all_mitigations();
  EXPECT_TRUE(all.flush_disabled && all.speculation_barriers && all.kpti &&
              all.immediate_check && all.cap_enforce_transient &&
              all.branch_avoidance && all.integrity_check);
}
