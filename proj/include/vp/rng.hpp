// Copyright 2026 The voiceprivacy Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstdint>
#include <random>
#include <string>

namespace vp {

// SplitMix64 finalizer. Good avalanche, cheap, and stateless — the value at
// any stream position can be recomputed from (seed, position) alone, which is
// what makes selection decisions replayable from an audit log.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// Value of the counter-based stream `seed` at position `ordinal`.
inline std::uint64_t counter_draw(std::uint64_t seed, std::uint64_t ordinal) {
  return splitmix64(seed ^ (0x9E3779B97F4A7C15ULL * (ordinal + 1)));
}

/// Mixes a string into a 64-bit key (FNV-1a), for per-utterance streams.
inline std::uint64_t hash_key(const std::string& s, std::uint64_t seed = 0) {
  std::uint64_t h = 1469598103934665603ULL ^ seed;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return splitmix64(h);
}

/// Counter-based RNG stream. Unlike std engines the position is explicit, so
/// consumers can record and audit exactly one draw per event.
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t seed, std::uint64_t start = 0)
      : seed_(seed), counter_(start) {}

  std::uint64_t seed() const { return seed_; }
  std::uint64_t position() const { return counter_; }

  std::uint64_t next() { return counter_draw(seed_, counter_++); }

  /// Uniform in [0, k). Modulo bias is < k/2^64, far below test resolution.
  std::uint64_t next_below(std::uint64_t k) { return next() % k; }

  /// Uniform in [0, 1).
  double next_double() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

 private:
  std::uint64_t seed_;
  std::uint64_t counter_;
};

/// Seed from OS entropy, for deployments that must not be replayable.
inline std::uint64_t entropy_seed() {
  std::random_device rd;
  return (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
}

}  // namespace vp
