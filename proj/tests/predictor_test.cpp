#include <gtest/gtest.h>

#include "trisa/predictor.hpp"

using namespace trisa;

TEST(Predictor, InitialStateIsWeakNotTaken) {
  BranchPredictor bp;
  EXPECT_EQ(bp.counter(0x100), 1);
  EXPECT_FALSE(bp.predict(0x100).taken);
  EXPECT_FALSE(bp.predict(0x100).target.has_value());
}

TEST(Predictor, TwoBitSaturation) {
  BranchPredictor bp;
  const Word pc = 0x200;
  bp.train(pc, true, 0x300);
  EXPECT_EQ(bp.counter(pc), 2);
  EXPECT_TRUE(bp.predict(pc).taken);
  bp.train(pc, true, 0x300);
  bp.train(pc, true, 0x300);  // saturate at 3
  EXPECT_EQ(bp.counter(pc), 3);
  bp.train(pc, false, 0);
  EXPECT_EQ(bp.counter(pc), 2);
  EXPECT_TRUE(bp.predict(pc).taken);  // hysteresis
  bp.train(pc, false, 0);
  bp.train(pc, false, 0);
  bp.train(pc, false, 0);  // saturate at 0
  EXPECT_EQ(bp.counter(pc), 0);
  EXPECT_FALSE(bp.predict(pc).taken);
}

TEST(Predictor, BtbInstallOnTakenOnly) {
  BranchPredictor bp;
  const Word pc = 0x400;
  bp.train(pc, false, 0xDEAD);
  EXPECT_FALSE(bp.predict(pc).target.has_value());
  bp.train(pc, true, 0x1234);
  auto p = bp.predict(pc);
  ASSERT_TRUE(p.target.has_value());
  EXPECT_EQ(*p.target, 0x1234u);
}

TEST(Predictor, BtbTagRejectsAliases) {
  PredictorConfig cfg;
  cfg.btb_entries = 128;
  BranchPredictor bp(cfg);
  const Word pc = 0x1000;
  const Word alias = pc + 4 * cfg.btb_entries;  // same BTB index
  bp.train(pc, true, 0x2000);
  EXPECT_FALSE(bp.predict(alias).target.has_value());
  // Counter table also aliases at its own period; both pcs share the
  // counter but not the BTB entry.
  bp.train(alias, true, 0x3000);
  EXPECT_EQ(*bp.predict(alias).target, 0x3000u);
  EXPECT_FALSE(bp.predict(pc).target.has_value());
}

TEST(Predictor, CounterAliasing) {
  PredictorConfig cfg;
  cfg.entries = 512;
  BranchPredictor bp(cfg);
  const Word pc = 0x100;
  const Word alias = pc + 4 * cfg.entries;
  bp.train(pc, true, 0x200);
  bp.train(pc, true, 0x200);
  EXPECT_TRUE(bp.predict(alias).taken);  // shared counter
}
