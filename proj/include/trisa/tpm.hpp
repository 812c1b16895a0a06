#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <deque>
#include <optional>
#include <span>
#include <vector>

#include "trisa/common.hpp"
#include "trisa/entropy.hpp"
#include "trisa/sha256.hpp"

namespace trisa {

enum class TpmStatus : std::uint8_t {
  Ok = 0,
  BadSlot = 1,
  BadCommand = 2,
  VerifyFailed = 3,
  UnsealFailed = 4,
};

struct TpmResponse {
  TpmStatus status = TpmStatus::Ok;
  std::vector<std::uint8_t> payload;
};

// Discrete TPM model. Key slots, PCR bank and the entropy source live
// inside the device and are never address-mapped; the CPU sees only the
// command/status registers and the data FIFO at tpm_mmio.
class TpmDevice {
 public:
  static constexpr int kSlots = 8;
  static constexpr int kPcrs = 8;
  static constexpr std::uint64_t kCommandCycles = 1000;

  // MMIO register offsets.
  static constexpr Word kRegCmd = 0x00;
  static constexpr Word kRegStatus = 0x04;
  static constexpr Word kRegData = 0x08;

  // Command opcodes (first descriptor byte).
  enum Opcode : std::uint8_t {
    kGetRandom = 0x01,
    kCreateKey = 0x02,
    kHmac = 0x03,
    kVerify = 0x04,
    kSealData = 0x05,
    kUnsealData = 0x06,
    kPcrExtend = 0x07,
    kPcrRead = 0x08,
    kQuote = 0x09,
  };

  explicit TpmDevice(EntropySource entropy = EntropySource::deterministic(0))
      : entropy_(std::move(entropy)) {}

  // ---- direct command interface ----

  TpmResponse get_random(std::size_t n) {
    return {TpmStatus::Ok, entropy_.next(n)};
  }

  TpmResponse create_key(int slot) {
    if (slot < 0 || slot >= kSlots) return {TpmStatus::BadSlot, {}};
    auto bytes = entropy_.next(32);
    Digest k;
    std::copy(bytes.begin(), bytes.end(), k.begin());
    keys_[slot] = k;
    return {TpmStatus::Ok, {}};
  }

  TpmResponse hmac(int slot, std::span<const std::uint8_t> message) {
    if (!slot_ok(slot)) return {TpmStatus::BadSlot, {}};
    Digest d = hmac_sha256(*keys_[slot], message);
    return {TpmStatus::Ok, {d.begin(), d.end()}};
  }

  TpmResponse verify(int slot, std::span<const std::uint8_t> message,
                     std::span<const std::uint8_t> mac) {
    if (!slot_ok(slot)) return {TpmStatus::BadSlot, {}};
    Digest d = hmac_sha256(*keys_[slot], message);
    if (mac.size() != d.size() ||
        !std::equal(d.begin(), d.end(), mac.begin()))
      return {TpmStatus::VerifyFailed, {}};
    return {TpmStatus::Ok, {}};
  }

  // Sealed blob layout: nonce(16) || ciphertext || tag(32). The
  // keystream and tag are both derived from the slot key, so a blob
  // unseals only with the slot that sealed it.
  TpmResponse seal(int slot, std::span<const std::uint8_t> data) {
    if (!slot_ok(slot)) return {TpmStatus::BadSlot, {}};
    std::vector<std::uint8_t> blob = entropy_.next(16);
    std::vector<std::uint8_t> ct(data.begin(), data.end());
    apply_keystream(*keys_[slot], std::span<const std::uint8_t>(blob), ct);
    blob.insert(blob.end(), ct.begin(), ct.end());
    Digest tag = hmac_sha256(*keys_[slot], blob);
    blob.insert(blob.end(), tag.begin(), tag.end());
    return {TpmStatus::Ok, std::move(blob)};
  }

  TpmResponse unseal(int slot, std::span<const std::uint8_t> blob) {
    if (!slot_ok(slot)) return {TpmStatus::BadSlot, {}};
    if (blob.size() < 48) return {TpmStatus::UnsealFailed, {}};
    const auto body = blob.first(blob.size() - 32);
    const auto tag = blob.last(32);
    Digest want = hmac_sha256(*keys_[slot], body);
    if (!std::equal(want.begin(), want.end(), tag.begin()))
      return {TpmStatus::UnsealFailed, {}};
    std::vector<std::uint8_t> pt(body.begin() + 16, body.end());
    apply_keystream(*keys_[slot], body.first(16), pt);
    return {TpmStatus::Ok, std::move(pt)};
  }

  TpmResponse pcr_extend(int idx, std::span<const std::uint8_t> value) {
    if (idx < 0 || idx >= kPcrs) return {TpmStatus::BadSlot, {}};
    Sha256 h;
    h.update(pcrs_[idx]);
    h.update(value);
    pcrs_[idx] = h.finish();
    return {TpmStatus::Ok, {}};
  }

  TpmResponse pcr_read(int idx) const {
    if (idx < 0 || idx >= kPcrs) return {TpmStatus::BadSlot, {}};
    return {TpmStatus::Ok, {pcrs_[idx].begin(), pcrs_[idx].end()}};
  }

  TpmResponse quote(int slot, std::uint8_t pcr_mask) {
    if (!slot_ok(slot)) return {TpmStatus::BadSlot, {}};
    std::vector<std::uint8_t> msg{pcr_mask};
    for (int i = 0; i < kPcrs; ++i)
      if (pcr_mask & (1u << i))
        msg.insert(msg.end(), pcrs_[i].begin(), pcrs_[i].end());
    Digest d = hmac_sha256(*keys_[slot], msg);
    std::vector<std::uint8_t> out(msg.begin(), msg.end());
    out.insert(out.end(), d.begin(), d.end());
    return {TpmStatus::Ok, std::move(out)};
  }

  // Test hook: the raw key material, reachable only through C++, never
  // through the simulated address space.
  std::optional<Digest> key_material(int slot) const {
    if (slot < 0 || slot >= kSlots) return std::nullopt;
    return keys_[slot];
  }

  // ---- MMIO transport ----
  // The CPU pushes a command descriptor into the data FIFO byte by
  // byte, writes GO to the command register, then reads the response
  // back from the FIFO. Executing a command costs kCommandCycles.

  std::uint64_t mmio_read(Word offset) {
    switch (offset & ~0x3ull) {
      case kRegCmd:
        return 0;
      case kRegStatus:
        return (response_ready_ ? 1u : 0u) | (error_ ? 2u : 0u);
      case kRegData: {
        if (fifo_.empty()) return 0;
        std::uint8_t b = fifo_.front();
        fifo_.pop_front();
        if (fifo_.empty()) response_ready_ = false;
        return b;
      }
      default:
        return 0;
    }
  }

  // Returns the cycle cost of the access (command execution is charged
  // to the GO write).
  std::uint64_t mmio_write(Word offset, std::uint64_t value) {
    switch (offset & ~0x3ull) {
      case kRegCmd:
        if ((value & 1) != 0) {
          execute_fifo();
          return kCommandCycles;
        }
        return 0;
      case kRegData:
        fifo_.push_back(static_cast<std::uint8_t>(value));
        return 0;
      default:
        return 0;
    }
  }

  // Parses and runs the descriptor currently in the FIFO; replaces the
  // FIFO contents with [status][len lo][len hi][payload].
  void execute_fifo() {
    std::vector<std::uint8_t> cmd(fifo_.begin(), fifo_.end());
    fifo_.clear();
    TpmResponse r = dispatch(cmd);
    error_ = r.status != TpmStatus::Ok;
    fifo_.push_back(static_cast<std::uint8_t>(r.status));
    fifo_.push_back(static_cast<std::uint8_t>(r.payload.size() & 0xFF));
    fifo_.push_back(static_cast<std::uint8_t>(r.payload.size() >> 8));
    fifo_.insert(fifo_.end(), r.payload.begin(), r.payload.end());
    response_ready_ = true;
  }

  TpmResponse dispatch(std::span<const std::uint8_t> cmd) {
    if (cmd.empty()) return {TpmStatus::BadCommand, {}};
    auto u16 = [&](std::size_t i) {
      return std::size_t(cmd[i]) | (std::size_t(cmd[i + 1]) << 8);
    };
    switch (cmd[0]) {
      case kGetRandom:
        if (cmd.size() != 3) return {TpmStatus::BadCommand, {}};
        return get_random(u16(1));
      case kCreateKey:
        if (cmd.size() != 2) return {TpmStatus::BadCommand, {}};
        return create_key(cmd[1]);
      case kHmac: {
        if (cmd.size() < 4) return {TpmStatus::BadCommand, {}};
        const std::size_t len = u16(2);
        if (cmd.size() != 4 + len) return {TpmStatus::BadCommand, {}};
        return hmac(cmd[1], cmd.subspan(4, len));
      }
      case kVerify: {
        if (cmd.size() < 4) return {TpmStatus::BadCommand, {}};
        const std::size_t len = u16(2);
        if (cmd.size() != 4 + len + 32) return {TpmStatus::BadCommand, {}};
        return verify(cmd[1], cmd.subspan(4, len), cmd.subspan(4 + len, 32));
      }
      case kSealData: {
        if (cmd.size() < 4) return {TpmStatus::BadCommand, {}};
        const std::size_t len = u16(2);
        if (cmd.size() != 4 + len) return {TpmStatus::BadCommand, {}};
        return seal(cmd[1], cmd.subspan(4, len));
      }
      case kUnsealData: {
        if (cmd.size() < 4) return {TpmStatus::BadCommand, {}};
        const std::size_t len = u16(2);
        if (cmd.size() != 4 + len) return {TpmStatus::BadCommand, {}};
        return unseal(cmd[1], cmd.subspan(4, len));
      }
      case kPcrExtend:
        if (cmd.size() != 34) return {TpmStatus::BadCommand, {}};
        return pcr_extend(cmd[1], cmd.subspan(2, 32));
      case kPcrRead:
        if (cmd.size() != 2) return {TpmStatus::BadCommand, {}};
        return pcr_read(cmd[1]);
      case kQuote:
        if (cmd.size() != 3) return {TpmStatus::BadCommand, {}};
        return quote(cmd[1], cmd[2]);
      default:
        return {TpmStatus::BadCommand, {}};
    }
  }

 private:
  bool slot_ok(int slot) const {
    return slot >= 0 && slot < kSlots && keys_[slot].has_value();
  }

  static void apply_keystream(const Digest& key,
                              std::span<const std::uint8_t> nonce,
                              std::vector<std::uint8_t>& data) {
    std::uint64_t counter = 0;
    std::size_t pos = 0;
    while (pos < data.size()) {
      std::vector<std::uint8_t> block(nonce.begin(), nonce.end());
      for (int i = 0; i < 8; ++i)
        block.push_back(static_cast<std::uint8_t>(counter >> (8 * i)));
      Digest ks = hmac_sha256(key, block);
      for (std::size_t i = 0; i < ks.size() && pos < data.size(); ++i, ++pos)
        data[pos] ^= ks[i];
      ++counter;
    }
  }

  std::array<std::optional<Digest>, kSlots> keys_{};
  std::array<Digest, kPcrs> pcrs_{};
  EntropySource entropy_;
  std::deque<std::uint8_t> fifo_;
  bool response_ready_ = false;
  bool error_ = false;
};

}  // namespace trisa
