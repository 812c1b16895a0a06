#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "trisa/cache.hpp"
#include "trisa/platform.hpp"
#include "trisa/predictor.hpp"

namespace trisa {

struct SpeculationConfig {
  std::uint32_t window = 64;         // transient instruction budget
  std::uint32_t resolve_delay = 20;  // cycles from trigger to resolution
};

struct Mitigations {
  bool flush_disabled = false;
  bool speculation_barriers = false;
  bool kpti = false;
  bool immediate_check = false;
  bool cap_enforce_transient = false;
  bool branch_avoidance = false;
  bool integrity_check = false;
};

struct SimConfig {
  CacheParams cache;
  PredictorConfig predictor;
  SpeculationConfig speculation;
  ZoneMap zones;
  Mitigations mitigations;
  std::uint64_t seed = 1;
  std::optional<std::uint32_t> latency_threshold;
  bool flat_timing = false;   // flat 1-cycle memory, no speculation
  bool record_trace = true;

  std::uint32_t threshold() const {
    return latency_threshold ? *latency_threshold
                             : cache.classify_threshold();
  }
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline nlohmann::json mitigations_to_json(const Mitigations& m) {
  return {{"flush_disabled", m.flush_disabled},
          {"speculation_barriers", m.speculation_barriers},
          {"kpti", m.kpti},
          {"immediate_check", m.immediate_check},
          {"cap_enforce_transient", m.cap_enforce_transient},
          {"branch_avoidance", m.branch_avoidance},
          {"integrity_check", m.integrity_check}};
}

// Sets one mitigation by name; returns false for unknown names.
inline bool set_mitigation(Mitigations& m, const std::string& name, bool on) {
  if (name == "flush_disabled") m.flush_disabled = on;
  else if (name == "speculation_barriers") m.speculation_barriers = on;
  else if (name == "kpti") m.kpti = on;
  else if (name == "immediate_check") m.immediate_check = on;
  else if (name == "cap_enforce_transient") m.cap_enforce_transient = on;
  else if (name == "branch_avoidance") m.branch_avoidance = on;
  else if (name == "integrity_check") m.integrity_check = on;
  else return false;
  return true;
}

inline Mitigations all_mitigations() {
  Mitigations m;
  m.flush_disabled = m.speculation_barriers = m.kpti = m.immediate_check =
      m.cap_enforce_transient = m.branch_avoidance = m.integrity_check = true;
  return m;
}

namespace config_detail {

using nlohmann::json;

inline void reject_unknown(const json& j, std::initializer_list<const char*> keys,
                           const std::string& where) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool known = false;
    for (const char* k : keys)
      if (it.key() == k) known = true;
    if (!known)
      throw ConfigError("unknown config key '" + where + it.key() + "'");
  }
}

template <typename T>
void get_if_present(const json& j, const char* key, T& out) {
  if (j.contains(key)) {
    try {
      out = j.at(key).get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(std::string("bad value for '") + key + "': " + e.what());
    }
  }
}

inline void parse_level(const json& j, const std::string& where,
                        CacheLevelConfig& lv) {
  reject_unknown(j, {"size", "line", "assoc", "latency", "shared"}, where);
  get_if_present(j, "size", lv.size_bytes);
  get_if_present(j, "line", lv.line_bytes);
  get_if_present(j, "assoc", lv.assoc);
  get_if_present(j, "latency", lv.hit_latency);
  get_if_present(j, "shared", lv.shared);
  if (lv.line_bytes == 0 || (lv.line_bytes & (lv.line_bytes - 1)) != 0)
    throw ConfigError(where + "line must be a power of two");
  if (lv.assoc == 0 || lv.size_bytes % (lv.line_bytes * lv.assoc) != 0)
    throw ConfigError(where + "size must be divisible by line*assoc");
}

inline void parse_range(const json& j, const std::string& where, AddrRange& r) {
  if (!j.is_array() || j.size() != 2)
    throw ConfigError(where + " must be [start, end]");
  r.start = j[0].get<Word>();
  r.end = j[1].get<Word>();
  if (r.end <= r.start) throw ConfigError(where + " is empty or inverted");
}

inline json level_json(const CacheLevelConfig& lv) {
  return {{"size", lv.size_bytes},
          {"line", lv.line_bytes},
          {"assoc", lv.assoc},
          {"latency", lv.hit_latency},
          {"shared", lv.shared}};
}

}  // namespace config_detail

inline nlohmann::json config_to_json(const SimConfig& c) {
  using config_detail::level_json;
  nlohmann::json j;
  j["cache"] = {{"l1", level_json(c.cache.l1)},
                {"l2", level_json(c.cache.l2)},
                {"l3", level_json(c.cache.l3)},
                {"dram_latency", c.cache.dram_latency}};
  j["predictor"] = {{"entries", c.predictor.entries},
                    {"init", c.predictor.init},
                    {"btb_entries", c.predictor.btb_entries}};
  j["speculation"] = {{"window", c.speculation.window},
                      {"resolve_delay", c.speculation.resolve_delay}};
  j["zones"] = {
      {"kernel", {c.zones.kernel.start, c.zones.kernel.end}},
      {"green", {c.zones.green.start, c.zones.green.end}},
      {"dmz", {c.zones.dmz.start, c.zones.dmz.end}},
      {"tpm_mmio", {c.zones.tpm_mmio.start, c.zones.tpm_mmio.end}},
      {"external_io", {c.zones.external_io.start, c.zones.external_io.end}}};
  j["mitigations"] = {
      {"flush_disabled", c.mitigations.flush_disabled},
      {"speculation_barriers", c.mitigations.speculation_barriers},
      {"kpti", c.mitigations.kpti},
      {"immediate_check", c.mitigations.immediate_check},
      {"cap_enforce_transient", c.mitigations.cap_enforce_transient},
      {"branch_avoidance", c.mitigations.branch_avoidance},
      {"integrity_check", c.mitigations.integrity_check}};
  j["seed"] = c.seed;
  if (c.latency_threshold) j["latency_threshold"] = *c.latency_threshold;
  j["flat_timing"] = c.flat_timing;
  j["record_trace"] = c.record_trace;
  return j;
}

// Parses a config document. Unknown keys are rejected; omitted keys
// keep the documented defaults.
inline SimConfig config_from_json(const nlohmann::json& j) {
  using namespace config_detail;
  SimConfig c;
  reject_unknown(j,
                 {"cache", "predictor", "speculation", "zones", "mitigations",
                  "seed", "latency_threshold", "flat_timing", "record_trace"},
                 "");
  if (j.contains("cache")) {
    const json& jc = j.at("cache");
    reject_unknown(jc, {"l1", "l2", "l3", "dram_latency"}, "cache.");
    if (jc.contains("l1")) parse_level(jc.at("l1"), "cache.l1.", c.cache.l1);
    if (jc.contains("l2")) parse_level(jc.at("l2"), "cache.l2.", c.cache.l2);
    if (jc.contains("l3")) parse_level(jc.at("l3"), "cache.l3.", c.cache.l3);
    get_if_present(jc, "dram_latency", c.cache.dram_latency);
  }
  if (j.contains("predictor")) {
    const json& jp = j.at("predictor");
    reject_unknown(jp, {"entries", "init", "btb_entries"}, "predictor.");
    get_if_present(jp, "entries", c.predictor.entries);
    get_if_present(jp, "init", c.predictor.init);
    get_if_present(jp, "btb_entries", c.predictor.btb_entries);
    if (c.predictor.init > 3)
      throw ConfigError("predictor.init must be 0..3");
    if (c.predictor.entries == 0 || c.predictor.btb_entries == 0)
      throw ConfigError("predictor tables must be non-empty");
  }
  if (j.contains("speculation")) {
    const json& js = j.at("speculation");
    reject_unknown(js, {"window", "resolve_delay"}, "speculation.");
    get_if_present(js, "window", c.speculation.window);
    get_if_present(js, "resolve_delay", c.speculation.resolve_delay);
  }
  if (j.contains("zones")) {
    const json& jz = j.at("zones");
    reject_unknown(jz, {"kernel", "green", "dmz", "tpm_mmio", "external_io"},
                   "zones.");
    if (jz.contains("kernel"))
      parse_range(jz.at("kernel"), "zones.kernel", c.zones.kernel);
    if (jz.contains("green"))
      parse_range(jz.at("green"), "zones.green", c.zones.green);
    if (jz.contains("dmz")) parse_range(jz.at("dmz"), "zones.dmz", c.zones.dmz);
    if (jz.contains("tpm_mmio"))
      parse_range(jz.at("tpm_mmio"), "zones.tpm_mmio", c.zones.tpm_mmio);
    if (jz.contains("external_io"))
      parse_range(jz.at("external_io"), "zones.external_io",
                  c.zones.external_io);
  }
  if (j.contains("mitigations")) {
    const json& jm = j.at("mitigations");
    reject_unknown(jm,
                   {"flush_disabled", "speculation_barriers", "kpti",
                    "immediate_check", "cap_enforce_transient",
                    "branch_avoidance", "integrity_check"},
                   "mitigations.");
    get_if_present(jm, "flush_disabled", c.mitigations.flush_disabled);
    get_if_present(jm, "speculation_barriers",
                   c.mitigations.speculation_barriers);
    get_if_present(jm, "kpti", c.mitigations.kpti);
    get_if_present(jm, "immediate_check", c.mitigations.immediate_check);
    get_if_present(jm, "cap_enforce_transient",
                   c.mitigations.cap_enforce_transient);
    get_if_present(jm, "branch_avoidance", c.mitigations.branch_avoidance);
    get_if_present(jm, "integrity_check", c.mitigations.integrity_check);
  }
  get_if_present(j, "seed", c.seed);
  if (j.contains("latency_threshold")) {
    std::uint32_t t = 0;
    get_if_present(j, "latency_threshold", t);
    c.latency_threshold = t;
  }
  get_if_present(j, "flat_timing", c.flat_timing);
  get_if_present(j, "record_trace", c.record_trace);
  return c;
}

inline SimConfig config_from_string(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config parse error: ") + e.what());
  }
  return config_from_json(j);
}

}  // namespace trisa
