#pragma once

#include <cstdint>
#include <cstring>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "trisa/capability.hpp"
#include "trisa/common.hpp"
#include "trisa/image.hpp"
#include "trisa/sha256.hpp"

namespace trisa {

// Default memory map. Small, disjoint, overridable in the config.
struct ZoneMap {
  AddrRange kernel{0x0000'1000, 0x0001'0000};
  AddrRange green{0x0001'0000, 0x0010'0000};
  AddrRange dmz{0x0010'0000, 0x0030'0000};
  AddrRange tpm_mmio{0x0030'0000, 0x0030'1000};
  AddrRange external_io{0x0040'0000, 0x0040'1000};

  std::optional<Zone> zone_of(Word addr) const {
    if (kernel.contains(addr)) return Zone::Kernel;
    if (green.contains(addr)) return Zone::Green;
    if (dmz.contains(addr)) return Zone::Dmz;
    if (tpm_mmio.contains(addr)) return Zone::TpmMmio;
    if (external_io.contains(addr)) return Zone::ExternalIo;
    return std::nullopt;
  }

  const AddrRange& range(Zone z) const {
    switch (z) {
      case Zone::Kernel: return kernel;
      case Zone::Green: return green;
      case Zone::Dmz: return dmz;
      case Zone::TpmMmio: return tpm_mmio;
      case Zone::ExternalIo: return external_io;
    }
    return kernel;
  }

  Word top() const { return external_io.end; }
};

enum class BusFaultKind { NoRoute, Unmapped };

enum class RouteTarget { Memory, Tpm, ExternalIo };

using RouteResult = std::variant<RouteTarget, BusFaultKind>;

// Dual-bus routing. Bus A connects the trusted side (green, kernel,
// CPU-local code) with the DMZ; Bus B connects the DMZ with the
// external interface. Nothing routes from external_io into the trusted
// side, and the trusted side cannot reach external_io without staging
// through the DMZ.
inline RouteResult route(const ZoneMap& zones, Zone initiator, Word addr) {
  auto target = zones.zone_of(addr);
  if (!target) return BusFaultKind::Unmapped;
  const Zone t = *target;
  if (t == initiator)
    return t == Zone::TpmMmio  ? RouteTarget::Tpm
           : t == Zone::ExternalIo ? RouteTarget::ExternalIo
                                   : RouteTarget::Memory;

  auto trusted = [](Zone z) {
    return z == Zone::Green || z == Zone::Kernel || z == Zone::TpmMmio;
  };

  bool legal = false;
  if (trusted(initiator) && (trusted(t) || t == Zone::Dmz)) legal = true;
  if (initiator == Zone::Dmz && (trusted(t) || t == Zone::ExternalIo))
    legal = true;
  if (initiator == Zone::ExternalIo && t == Zone::Dmz) legal = true;
  if (!legal) return BusFaultKind::NoRoute;

  if (t == Zone::TpmMmio) return RouteTarget::Tpm;
  if (t == Zone::ExternalIo) return RouteTarget::ExternalIo;
  return RouteTarget::Memory;
}

// Flat backing store for all mapped zones plus a capability tag per
// 16-byte granule. Tagged granules keep their full capability in a side
// table; any plain store overlapping a granule clears its tag.
class Memory {
 public:
  static constexpr Word kGranule = 16;

  explicit Memory(Word size) : bytes_(size, 0) {}

  Word size() const { return bytes_.size(); }

  std::uint64_t load(Word addr, unsigned size) const {
    std::uint64_t v = 0;
    for (unsigned i = 0; i < size; ++i)
      v |= static_cast<std::uint64_t>(bytes_[addr + i]) << (8 * i);
    return v;
  }

  void store(Word addr, unsigned size, std::uint64_t value) {
    for (unsigned i = 0; i < size; ++i)
      bytes_[addr + i] = static_cast<std::uint8_t>(value >> (8 * i));
    clear_tags(addr, size);
  }

  std::uint8_t peek(Word addr) const { return bytes_[addr]; }
  void poke(Word addr, std::uint8_t v) {
    bytes_[addr] = v;
    clear_tags(addr, 1);
  }

  std::span<const std::uint8_t> view(Word addr, Word len) const {
    return {bytes_.data() + addr, len};
  }

  void write_block(Word addr, std::span<const std::uint8_t> data) {
    std::memcpy(bytes_.data() + addr, data.data(), data.size());
    clear_tags(addr, data.size());
  }

  // Capability store: sets the granule tag and records the capability
  // exactly. The raw bytes hold the cursor so untagged reloads see a
  // plain integer.
  void store_capability(Word addr, const Capability& cap) {
    const Word g = addr / kGranule;
    store(addr, 8, cap.cursor);
    store(addr + 8, 8, cap.base);
    if (cap.tag) {
      tags_[g] = cap;
    } else {
      tags_.erase(g);
    }
  }

  // Returns the stored capability if the granule tag is set, otherwise
  // an untagged capability carrying the raw cursor bytes.
  Capability load_capability(Word addr) const {
    const Word g = addr / kGranule;
    auto it = tags_.find(g);
    if (it != tags_.end()) return it->second;
    Capability c;
    c.tag = false;
    c.cursor = load(addr, 8);
    return c;
  }

  bool tag_at(Word addr) const { return tags_.count(addr / kGranule) > 0; }

  bool operator==(const Memory& o) const {
    return bytes_ == o.bytes_ && tags_ == o.tags_;
  }

 private:
  void clear_tags(Word addr, Word len) {
    if (tags_.empty()) return;
    const Word first = addr / kGranule;
    const Word last = (addr + len - 1) / kGranule;
    for (Word g = first; g <= last; ++g) tags_.erase(g);
  }

  std::vector<std::uint8_t> bytes_;
  std::map<Word, Capability> tags_;
};

struct IntegrityRecord {
  AddrRange region;
  Digest digest{};
};

inline Digest region_digest(const Memory& mem, const AddrRange& r) {
  return Sha256::hash(mem.view(r.start, r.size()));
}

enum class ImageErrorKind { UnmappedSection, Overlap };

struct ImageError {
  ImageErrorKind kind;
  std::string detail;
};

struct LoadResult {
  Word entry = 0;
  std::vector<IntegrityRecord> integrity;
  std::optional<ImageError> error;
  bool ok() const { return !error.has_value(); }
};

// Copies image sections into memory and records load-time integrity
// digests over green-zone and kernel sections.
inline LoadResult load_image(const ZoneMap& zones, const ProgramImage& image,
                             Memory& mem) {
  LoadResult res;
  for (std::size_t i = 0; i < image.sections.size(); ++i) {
    const Section& s = image.sections[i];
    const AddrRange span{s.start, s.start + s.bytes.size()};
    const AddrRange& zr = zones.range(s.zone);
    if (!zr.contains(s.start, s.bytes.size())) {
      res.error = {ImageErrorKind::UnmappedSection,
                   "section " + std::to_string(i) + " outside its zone"};
      return res;
    }
    for (std::size_t j = 0; j < i; ++j) {
      const Section& o = image.sections[j];
      const Word o_end = o.start + o.bytes.size();
      if (span.start < o_end && o.start < span.end) {
        res.error = {ImageErrorKind::Overlap,
                     "sections " + std::to_string(j) + " and " +
                         std::to_string(i) + " overlap"};
        return res;
      }
    }
  }
  for (const Section& s : image.sections) {
    mem.write_block(s.start, s.bytes);
  }
  for (const Section& s : image.sections) {
    if (s.zone == Zone::Green || s.zone == Zone::Kernel) {
      AddrRange r{s.start, s.start + s.bytes.size()};
      res.integrity.push_back({r, region_digest(mem, r)});
    }
  }
  res.entry = image.entry;
  return res;
}

struct IntegrityViolation {
  AddrRange region;
};

inline std::optional<IntegrityViolation> verify_integrity(
    const std::vector<IntegrityRecord>& records, const Memory& mem) {
  for (const IntegrityRecord& r : records) {
    if (region_digest(mem, r.region) != r.digest)
      return IntegrityViolation{r.region};
  }
  return std::nullopt;
}

}  // namespace trisa
