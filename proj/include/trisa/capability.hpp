#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <variant>

#include "trisa/common.hpp"

namespace trisa {

// Capability permission bits. LOAD/STORE/EXECUTE gate data and fetch
// access; LOAD_CAP/STORE_CAP gate capability transfer through memory;
// SEAL/UNSEAL gate the sealing operations.
enum CapPerm : std::uint32_t {
  PERM_LOAD = 1u << 0,
  PERM_STORE = 1u << 1,
  PERM_EXECUTE = 1u << 2,
  PERM_LOAD_CAP = 1u << 3,
  PERM_STORE_CAP = 1u << 4,
  PERM_SEAL = 1u << 5,
  PERM_UNSEAL = 1u << 6,
};

constexpr std::uint32_t kAllCapPerms =
    PERM_LOAD | PERM_STORE | PERM_EXECUTE | PERM_LOAD_CAP | PERM_STORE_CAP |
    PERM_SEAL | PERM_UNSEAL;

// Perms granting data/fetch access but no sealing authority.
constexpr std::uint32_t kNonSealingPerms =
    PERM_LOAD | PERM_STORE | PERM_EXECUTE | PERM_LOAD_CAP | PERM_STORE_CAP;

enum class CapFaultKind {
  TagCleared,
  Sealed,
  PermissionDenied,
  BoundsViolation,
  BoundsEscalation,
  TypeMismatch,
};

inline const char* cap_fault_name(CapFaultKind k) {
  switch (k) {
    case CapFaultKind::TagCleared: return "TagCleared";
    case CapFaultKind::Sealed: return "Sealed";
    case CapFaultKind::PermissionDenied: return "PermissionDenied";
    case CapFaultKind::BoundsViolation: return "BoundsViolation";
    case CapFaultKind::BoundsEscalation: return "BoundsEscalation";
    case CapFaultKind::TypeMismatch: return "TypeMismatch";
  }
  return "?";
}

// Uncompressed tagged capability. Fields are held exactly; the in-memory
// encoding concern of real CHERI is out of scope.
struct Capability {
  bool tag = false;
  Word base = 0;
  Word length = 0;
  Word cursor = 0;
  std::uint32_t perms = 0;
  bool sealed = false;
  std::uint16_t otype = 0;

  bool operator==(const Capability&) const = default;

  bool in_bounds(Word addr, Word size) const {
    // base + length never overflows by construction (checked on derive).
    const Word top = base + length;
    return addr >= base && addr <= top && size <= top - addr;
  }

  static Capability root(Word base, Word length, std::uint32_t perms) {
    Capability c;
    c.tag = true;
    c.base = base;
    c.length = length;
    c.cursor = base;
    c.perms = perms;
    return c;
  }
};

using CapResult = std::variant<Capability, CapFaultKind>;

inline bool cap_ok(const CapResult& r) {
  return std::holds_alternative<Capability>(r);
}
inline const Capability& cap_value(const CapResult& r) {
  return std::get<Capability>(r);
}
inline CapFaultKind cap_fault(const CapResult& r) {
  return std::get<CapFaultKind>(r);
}

// Narrows bounds; the derived range must be contained in the parent's.
inline CapResult set_bounds(const Capability& cap, Word new_base,
                            Word new_length) {
  if (!cap.tag) return CapFaultKind::TagCleared;
  if (cap.sealed) return CapFaultKind::Sealed;
  if (new_base + new_length < new_base) return CapFaultKind::BoundsEscalation;
  if (new_base < cap.base || new_base + new_length > cap.base + cap.length)
    return CapFaultKind::BoundsEscalation;
  Capability d = cap;
  d.base = new_base;
  d.length = new_length;
  d.cursor = new_base;
  return d;
}

// Monotone permission intersection.
inline CapResult and_perms(const Capability& cap, std::uint32_t mask) {
  if (!cap.tag) return CapFaultKind::TagCleared;
  if (cap.sealed) return CapFaultKind::Sealed;
  Capability d = cap;
  d.perms = cap.perms & mask;
  return d;
}

inline CapResult seal(const Capability& cap, const Capability& sealer) {
  if (!cap.tag || !sealer.tag) return CapFaultKind::TagCleared;
  if (cap.sealed) return CapFaultKind::Sealed;
  if (sealer.sealed) return CapFaultKind::Sealed;
  if (!(sealer.perms & PERM_SEAL)) return CapFaultKind::PermissionDenied;
  if (sealer.cursor > 0xFFFF) return CapFaultKind::TypeMismatch;
  Capability d = cap;
  d.sealed = true;
  d.otype = static_cast<std::uint16_t>(sealer.cursor);
  return d;
}

inline CapResult unseal(const Capability& cap, const Capability& unsealer) {
  if (!cap.tag || !unsealer.tag) return CapFaultKind::TagCleared;
  if (!cap.sealed) return CapFaultKind::Sealed;
  if (unsealer.sealed) return CapFaultKind::Sealed;
  if (!(unsealer.perms & PERM_UNSEAL)) return CapFaultKind::PermissionDenied;
  if (cap.otype != unsealer.cursor) return CapFaultKind::TypeMismatch;
  Capability d = cap;
  d.sealed = false;
  d.otype = 0;
  return d;
}

enum class AccessKind { Load, Store, Fetch, LoadCap, StoreCap };

inline std::uint32_t required_perm(AccessKind k) {
  switch (k) {
    case AccessKind::Load: return PERM_LOAD;
    case AccessKind::Store: return PERM_STORE;
    case AccessKind::Fetch: return PERM_EXECUTE;
    case AccessKind::LoadCap: return PERM_LOAD | PERM_LOAD_CAP;
    case AccessKind::StoreCap: return PERM_STORE | PERM_STORE_CAP;
  }
  return 0;
}

// Returns nullopt when the access is authorized.
inline std::optional<CapFaultKind> checked_access(const Capability& cap,
                                                  Word addr, Word size,
                                                  AccessKind kind) {
  if (!cap.tag) return CapFaultKind::TagCleared;
  if (cap.sealed) return CapFaultKind::Sealed;
  const std::uint32_t need = required_perm(kind);
  if ((cap.perms & need) != need) return CapFaultKind::PermissionDenied;
  if (!cap.in_bounds(addr, size)) return CapFaultKind::BoundsViolation;
  return std::nullopt;
}

// c0-c7 general capability registers, plus the default data capability
// (legacy loads/stores) and the program counter capability (fetch).
struct CapRegisterFile {
  std::array<Capability, 8> c{};
  Capability ddc;
  Capability pcc;

  bool operator==(const CapRegisterFile&) const = default;
};

}  // namespace trisa
