#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "trisa/common.hpp"

namespace trisa {

struct CacheLevelConfig {
  std::uint32_t size_bytes = 0;
  std::uint32_t line_bytes = 64;
  std::uint32_t assoc = 8;
  std::uint32_t hit_latency = 1;
  bool shared = false;
};

struct CacheParams {
  CacheLevelConfig l1{32 * 1024, 64, 8, 4, false};
  CacheLevelConfig l2{256 * 1024, 64, 8, 12, false};
  CacheLevelConfig l3{8 * 1024 * 1024, 64, 16, 40, true};
  std::uint32_t dram_latency = 200;

  // Hit/miss classification threshold used by the attack harnesses.
  std::uint32_t classify_threshold() const {
    return (l3.hit_latency + dram_latency) / 2;
  }
};

enum class HitLevel { L1, L2, L3, DRAM };

inline const char* hit_level_name(HitLevel l) {
  switch (l) {
    case HitLevel::L1: return "L1";
    case HitLevel::L2: return "L2";
    case HitLevel::L3: return "L3";
    case HitLevel::DRAM: return "DRAM";
  }
  return "?";
}

enum class MemKind { Read, Write, Fetch };

inline const char* mem_kind_name(MemKind k) {
  switch (k) {
    case MemKind::Read: return "read";
    case MemKind::Write: return "write";
    case MemKind::Fetch: return "fetch";
  }
  return "?";
}

struct TraceEntry {
  std::uint64_t cycle = 0;
  Word addr = 0;
  MemKind kind = MemKind::Read;
  HitLevel level = HitLevel::DRAM;
  std::uint32_t latency = 0;
  bool transient = false;
  bool filled = false;  // the access installed the line somewhere
};

struct CacheAccessResult {
  std::uint32_t latency = 0;
  HitLevel level = HitLevel::DRAM;
  bool filled = false;
};

// Inclusive L1/L2/L3 with true-LRU replacement. Only metadata is kept;
// data always lives in the backing memory, so write-back needs no data
// movement. Evicting a line from an outer level back-invalidates it in
// the inner levels to preserve inclusion.
class CacheHierarchy {
 public:
  explicit CacheHierarchy(const CacheParams& params = CacheParams{})
      : params_(params) {
    levels_[0] = Level(params_.l1);
    levels_[1] = Level(params_.l2);
    levels_[2] = Level(params_.l3);
  }

  const CacheParams& params() const { return params_; }

  CacheAccessResult access(Word addr, MemKind kind, bool transient,
                           std::uint64_t cycle) {
    const Word line = addr / params_.l1.line_bytes;
    ++tick_;
    CacheAccessResult res;
    int hit_level = -1;
    for (int i = 0; i < 3; ++i) {
      if (levels_[i].touch(line, tick_)) {
        hit_level = i;
        break;
      }
    }
    if (hit_level == 0) {
      res = {params_.l1.hit_latency, HitLevel::L1, false};
    } else if (hit_level == 1) {
      res = {params_.l2.hit_latency, HitLevel::L2, true};
      install(0, line);
    } else if (hit_level == 2) {
      res = {params_.l3.hit_latency, HitLevel::L3, true};
      install(1, line);
      install(0, line);
    } else {
      res = {params_.dram_latency, HitLevel::DRAM, true};
      install(2, line);
      install(1, line);
      install(0, line);
    }
    if (record_trace) {
      trace.push_back({cycle, addr, kind, res.level, res.latency, transient,
                       res.filled});
    }
    return res;
  }

  // Invalidates the line containing addr at every level.
  void flush_line(Word addr) {
    const Word line = addr / params_.l1.line_bytes;
    for (auto& lv : levels_) lv.invalidate(line);
  }

  bool resident(Word addr, HitLevel level) const {
    const Word line = addr / params_.l1.line_bytes;
    return levels_[static_cast<int>(level)].contains(line);
  }

  // Exposed for the inclusion property test.
  std::vector<Word> lines_at(HitLevel level) const {
    return levels_[static_cast<int>(level)].all_lines();
  }

  std::vector<TraceEntry> trace;
  bool record_trace = true;

 private:
  struct Way {
    Word line = 0;
    bool valid = false;
    std::uint64_t last_used = 0;
  };

  struct Level {
    Level() = default;
    explicit Level(const CacheLevelConfig& cfg)
        : sets(cfg.size_bytes / (cfg.line_bytes * cfg.assoc)),
          assoc(cfg.assoc),
          ways(sets * assoc) {}

    std::uint32_t sets = 1;
    std::uint32_t assoc = 1;
    std::vector<Way> ways;

    std::uint32_t set_of(Word line) const {
      return static_cast<std::uint32_t>(line % sets);
    }

    bool touch(Word line, std::uint64_t tick) {
      const std::uint32_t s = set_of(line);
      for (std::uint32_t w = 0; w < assoc; ++w) {
        Way& way = ways[s * assoc + w];
        if (way.valid && way.line == line) {
          way.last_used = tick;
          return true;
        }
      }
      return false;
    }

    bool contains(Word line) const {
      const std::uint32_t s = set_of(line);
      for (std::uint32_t w = 0; w < assoc; ++w) {
        const Way& way = ways[s * assoc + w];
        if (way.valid && way.line == line) return true;
      }
      return false;
    }

    // Installs line as most-recent; returns a displaced valid line.
    std::optional<Word> install(Word line, std::uint64_t tick) {
      const std::uint32_t s = set_of(line);
      std::uint32_t victim = 0;
      bool found_invalid = false;
      std::uint64_t oldest = ~0ull;
      for (std::uint32_t w = 0; w < assoc; ++w) {
        const Way& way = ways[s * assoc + w];
        if (!way.valid) {
          victim = w;
          found_invalid = true;
          break;
        }
        if (way.last_used < oldest) {
          oldest = way.last_used;
          victim = w;
        }
      }
      Way& v = ways[s * assoc + victim];
      std::optional<Word> evicted;
      if (!found_invalid) evicted = v.line;
      v.line = line;
      v.valid = true;
      v.last_used = tick;
      return evicted;
    }

    void invalidate(Word line) {
      const std::uint32_t s = set_of(line);
      for (std::uint32_t w = 0; w < assoc; ++w) {
        Way& way = ways[s * assoc + w];
        if (way.valid && way.line == line) way.valid = false;
      }
    }

    std::vector<Word> all_lines() const {
      std::vector<Word> out;
      for (const Way& w : ways)
        if (w.valid) out.push_back(w.line);
      return out;
    }
  };

  void install(int level, Word line) {
    auto evicted = levels_[level].install(line, tick_);
    if (evicted) {
      // Inclusion: dropping a line from an outer level removes it from
      // all inner levels too.
      for (int inner = level - 1; inner >= 0; --inner)
        levels_[inner].invalidate(*evicted);
    }
  }

  CacheParams params_;
  Level levels_[3];
  std::uint64_t tick_ = 0;
};

}  // namespace trisa
