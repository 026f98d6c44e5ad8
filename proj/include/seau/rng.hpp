// Copyright 2026 the seau authors
//
// Licensed under the Apache License, Version 2.0

#pragma once

#include <cstdint>
#include <string_view>

namespace seau {

// Counter-based deterministic random stream (splitmix64 core).
//
// Streams are derived, never shared: every consumer forks its own child from
// a parent via a label or index, so any draw in the system is a pure function
// of (root seed, derivation path, draw count).  This is what makes training
// runs resumable and bit-reproducible without serializing generator state.
class RngStream {
 public:
  explicit RngStream(uint64_t seed) : base_(seed), state_(seed) {}

  // Children depend only on the base seed and the label/index, not on how
  // many draws the parent has made.
  RngStream fork(std::string_view label) const;
  RngStream fork(uint64_t index) const;

  uint64_t next_u64();

  // Uniform on [0, 1).
  double uniform();
  float uniform_f32();
  double uniform(double lo, double hi);
  // Integer uniform on [lo, hi).
  int64_t uniform_int(int64_t lo, int64_t hi);
  // Standard normal via Box-Muller.
  double normal();
  float normal_f32() { return static_cast<float>(normal()); }

  uint64_t base_seed() const { return base_; }

 private:
  uint64_t base_;
  uint64_t state_;
};

// FNV-1a over arbitrary bytes; used for stream derivation and content hashes.
uint64_t fnv1a64(const void* data, size_t n, uint64_t seed = 0xcbf29ce484222325ull);
uint64_t fnv1a64(std::string_view s, uint64_t seed = 0xcbf29ce484222325ull);

}  // namespace seau
