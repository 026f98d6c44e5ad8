// Copyright 2026 the seau authors
//
// Licensed under the Apache License, Version 2.0

#include "seau/rng.hpp"

#include <cmath>
#include <numbers>

namespace seau {

namespace {

// splitmix64 finalizer.
uint64_t mix64(uint64_t z) {
  z += 0x9e3779b97f4a7c15ull;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

}  // namespace

uint64_t fnv1a64(const void* data, size_t n, uint64_t seed) {
  const auto* p = static_cast<const unsigned char*>(data);
  uint64_t h = seed;
  for (size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

uint64_t fnv1a64(std::string_view s, uint64_t seed) {
  return fnv1a64(s.data(), s.size(), seed);
}

RngStream RngStream::fork(std::string_view label) const {
  return RngStream(mix64(base_ ^ fnv1a64(label)));
}

RngStream RngStream::fork(uint64_t index) const {
  return RngStream(mix64(base_ ^ mix64(index ^ 0xa5a5a5a5a5a5a5a5ull)));
}

uint64_t RngStream::next_u64() {
  state_ += 0x9e3779b97f4a7c15ull;
  uint64_t z = state_;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

double RngStream::uniform() {
  // 53 random bits -> [0, 1).
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

float RngStream::uniform_f32() {
  return static_cast<float>(next_u64() >> 40) * 0x1.0p-24f;
}

double RngStream::uniform(double lo, double hi) {
  return lo + (hi - lo) * uniform();
}

int64_t RngStream::uniform_int(int64_t lo, int64_t hi) {
  uint64_t span = static_cast<uint64_t>(hi - lo);
  return lo + static_cast<int64_t>(next_u64() % span);
}

double RngStream::normal() {
  double u1 = uniform();
  double u2 = uniform();
  if (u1 <= 0.0) u1 = 0x1.0p-53;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

}  // namespace seau
