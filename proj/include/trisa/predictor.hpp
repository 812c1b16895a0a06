#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "trisa/common.hpp"

namespace trisa {

struct PredictorConfig {
  std::uint32_t entries = 512;   // 2-bit counters, direct-indexed
  std::uint8_t init = 1;         // weak not-taken
  std::uint32_t btb_entries = 128;
};

struct Prediction {
  bool taken = false;
  std::optional<Word> target;
};

// Per-pc 2-bit saturating counters plus a direct-mapped BTB.
// Counter >= 2 predicts taken.
class BranchPredictor {
 public:
  explicit BranchPredictor(const PredictorConfig& cfg = PredictorConfig{})
      : cfg_(cfg),
        counters_(cfg.entries, cfg.init),
        btb_(cfg.btb_entries) {}

  Prediction predict(Word pc) const {
    Prediction p;
    p.taken = counters_[index(pc)] >= 2;
    const BtbEntry& e = btb_[btb_index(pc)];
    if (e.valid && e.pc == pc) p.target = e.target;
    return p;
  }

  void train(Word pc, bool taken, Word target) {
    std::uint8_t& c = counters_[index(pc)];
    if (taken) {
      if (c < 3) ++c;
      BtbEntry& e = btb_[btb_index(pc)];
      e.valid = true;
      e.pc = pc;
      e.target = target;
    } else {
      if (c > 0) --c;
    }
  }

  std::uint8_t counter(Word pc) const { return counters_[index(pc)]; }

 private:
  struct BtbEntry {
    bool valid = false;
    Word pc = 0;
    Word target = 0;
  };

  std::size_t index(Word pc) const { return (pc >> 2) % cfg_.entries; }
  std::size_t btb_index(Word pc) const { return (pc >> 2) % cfg_.btb_entries; }

  PredictorConfig cfg_;
  std::vector<std::uint8_t> counters_;
  std::vector<BtbEntry> btb_;
};

}  // namespace trisa
