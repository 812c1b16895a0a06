#pragma once

#include <cstdint>
#include <cstring>
#include <random>
#include <vector>

#include "trisa/sha256.hpp"

namespace trisa {

// Entropy source behind the TPM. The quantum RNG of the platform is
// modeled as an ideal source; Deterministic(seed) is a counter-mode
// keyed-hash stream so that identical seeds reproduce identical bytes.
class EntropySource {
 public:
  enum class Kind { Deterministic, System };

  static EntropySource deterministic(std::uint64_t seed) {
    EntropySource s;
    s.kind_ = Kind::Deterministic;
    s.seed_ = seed;
    return s;
  }

  static EntropySource system() {
    EntropySource s;
    s.kind_ = Kind::System;
    return s;
  }

  Kind kind() const { return kind_; }

  std::vector<std::uint8_t> next(std::size_t n) {
    std::vector<std::uint8_t> out;
    out.reserve(n);
    while (out.size() < n) {
      if (pool_pos_ == pool_.size()) refill();
      out.push_back(pool_[pool_pos_++]);
    }
    return out;
  }

 private:
  void refill() {
    if (kind_ == Kind::Deterministic) {
      std::uint8_t key[8], msg[8];
      std::memcpy(key, &seed_, 8);
      std::memcpy(msg, &counter_, 8);
      Digest d = hmac_sha256(std::span<const std::uint8_t>(key, 8),
                             std::span<const std::uint8_t>(msg, 8));
      pool_.assign(d.begin(), d.end());
      ++counter_;
    } else {
      std::random_device rd;
      pool_.resize(32);
      for (auto& b : pool_) b = static_cast<std::uint8_t>(rd());
    }
    pool_pos_ = 0;
  }

  Kind kind_ = Kind::Deterministic;
  std::uint64_t seed_ = 0;
  std::uint64_t counter_ = 0;
  std::vector<std::uint8_t> pool_;
  std::size_t pool_pos_ = 0;
};

}  // namespace trisa
