#include <gtest/gtest.h>

#include <random>

#include "trisa/capability.hpp"
#include "trisa/platform.hpp"

using namespace trisa;

TEST(Capability, RootCoversItsRange) {
  Capability c = Capability::root(0x1000, 0x100, PERM_LOAD | PERM_STORE);
  EXPECT_TRUE(c.tag);
  EXPECT_TRUE(c.in_bounds(0x1000, 1));
  EXPECT_TRUE(c.in_bounds(0x10FF, 1));
  EXPECT_FALSE(c.in_bounds(0x1100, 1));
  EXPECT_FALSE(c.in_bounds(0xFFF, 1));
}

TEST(Capability, SetBoundsRejectsEscalation) {
  Capability c = Capability::root(0x1000, 0x100, kAllCapPerms);
  auto r = set_bounds(c, 0x1000, 0x200);
  ASSERT_FALSE(cap_ok(r));
  EXPECT_EQ(cap_fault(r), CapFaultKind::BoundsEscalation);
  c.cursor = 0x1080;
  r = set_bounds(c, c.cursor, 0x40);
  ASSERT_TRUE(cap_ok(r));
  EXPECT_EQ(cap_value(r).base, 0x1080u);
  EXPECT_EQ(cap_value(r).length, 0x40u);
}

TEST(Capability, AndPermsOnlyShrinks) {
  Capability c = Capability::root(0, 64, PERM_LOAD | PERM_STORE);
  auto r = and_perms(c, PERM_LOAD | PERM_EXECUTE);
  ASSERT_TRUE(cap_ok(r));
  EXPECT_EQ(cap_value(r).perms, static_cast<std::uint32_t>(PERM_LOAD));
}

TEST(Capability, SealUnsealRoundTrip) {
  Capability data = Capability::root(0x2000, 0x80, PERM_LOAD);
  Capability sealer = Capability::root(0, 0x100, PERM_SEAL | PERM_UNSEAL);
  sealer.cursor = 42;
  auto s = seal(data, sealer);
  ASSERT_TRUE(cap_ok(s));
  EXPECT_TRUE(cap_value(s).sealed);
  EXPECT_EQ(cap_value(s).otype, 42);
  // A sealed capability cannot be dereferenced or re-derived.
  EXPECT_EQ(checked_access(cap_value(s), 0x2000, 1, AccessKind::Load),
            CapFaultKind::Sealed);
  EXPECT_FALSE(cap_ok(set_bounds(cap_value(s), 0x2000, 8)));
  // Unseal with the wrong otype fails; with the right one restores.
  Capability wrong = sealer;
  wrong.cursor = 43;
  EXPECT_FALSE(cap_ok(unseal(cap_value(s), wrong)));
  auto u = unseal(cap_value(s), sealer);
  ASSERT_TRUE(cap_ok(u));
  EXPECT_FALSE(cap_value(u).sealed);
  EXPECT_FALSE(checked_access(cap_value(u), 0x2000, 1, AccessKind::Load));
}

TEST(Capability, CheckedAccessFaults) {
  Capability c = Capability::root(0x1000, 0x10, PERM_LOAD);
  EXPECT_FALSE(checked_access(c, 0x1008, 8, AccessKind::Load));
  EXPECT_EQ(checked_access(c, 0x1008, 8, AccessKind::Store),
            CapFaultKind::PermissionDenied);
  EXPECT_EQ(checked_access(c, 0x1010, 1, AccessKind::Load),
            CapFaultKind::BoundsViolation);
  c.tag = false;
  EXPECT_EQ(checked_access(c, 0x1008, 1, AccessKind::Load),
            CapFaultKind::TagCleared);
}

// Monotonicity: no chain of derivations ever grows authority.
TEST(CapabilityFuzz, Monotonicity) {
  std::mt19937_64 rng(101);
  for (int iter = 0; iter < 10000; ++iter) {
    const Word base = rng() % 0x10000;
    const Word len = rng() % 0x1000;
    Capability parent = Capability::root(base, len, rng() & kAllCapPerms);
    Capability cur = parent;
    for (int step = 0; step < 8; ++step) {
      CapResult r = CapFaultKind::TagCleared;
      switch (rng() % 3) {
        case 0: {
          const Word nb = cur.base + (cur.length ? rng() % cur.length : 0);
          const Word nl = rng() % (cur.base + cur.length - nb + 1);
          r = set_bounds(cur, nb, nl);
          break;
        }
        case 1:
          r = and_perms(cur, static_cast<std::uint32_t>(rng()));
          break;
        case 2: {
          // Deliberately escalating request: must fault.
          r = set_bounds(cur, cur.base, cur.length + 1 + rng() % 16);
          ASSERT_FALSE(cap_ok(r));
          continue;
        }
      }
      if (!cap_ok(r)) continue;
      const Capability& d = cap_value(r);
      ASSERT_GE(d.base, parent.base);
      ASSERT_LE(d.base + d.length, parent.base + parent.length);
      ASSERT_EQ(d.perms & ~parent.perms, 0u);
      ASSERT_GE(d.base, cur.base);
      ASSERT_LE(d.base + d.length, cur.base + cur.length);
      ASSERT_EQ(d.perms & ~cur.perms, 0u);
      cur = d;
    }
  }
}

// Tag integrity: any plain store overlapping a tagged granule clears
// the tag, so capabilities cannot be forged byte-by-byte.
TEST(CapabilityFuzz, TagIntegrityInMemory) {
  std::mt19937_64 rng(202);
  Memory mem(0x10000);
  for (int iter = 0; iter < 10000; ++iter) {
    const Word g = (rng() % 0xF00) * Memory::kGranule;
    Capability c = Capability::root(rng() % 0x8000, rng() % 0x100,
                                    rng() & kAllCapPerms);
    mem.store_capability(g, c);
    ASSERT_TRUE(mem.tag_at(g));
    ASSERT_EQ(mem.load_capability(g), c);

    // Overwrite a random byte inside the granule with a plain store.
    const Word victim = g + rng() % Memory::kGranule;
    const unsigned size = 1u << (rng() % 4);
    mem.store(victim & ~(Word(size) - 1), size, rng());
    ASSERT_FALSE(mem.tag_at(g));
    Capability reloaded = mem.load_capability(g);
    ASSERT_FALSE(reloaded.tag);
  }
}

TEST(CapabilityFuzz, UntaggedLoadsSeeRawBytes) {
  Memory mem(0x1000);
  mem.store(0x100, 8, 0x1122334455667788ull);
  Capability c = mem.load_capability(0x100);
  EXPECT_FALSE(c.tag);
  EXPECT_EQ(c.cursor, 0x1122334455667788ull);
}
