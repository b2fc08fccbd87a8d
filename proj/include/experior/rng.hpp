#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace experior {

using Rng = std::mt19937_64;

/** splitmix64 step; good avalanche, used only for seed derivation. */
inline uint64_t splitmix64(uint64_t& state) {
  uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/**
 * Derives one seed from several ids (master seed, distribution id, task id,
 * agent id, ...). Every worker computes the same value for the same ids, so
 * results do not depend on scheduling.
 */
inline uint64_t mix_seed(std::initializer_list<uint64_t> parts) {
  uint64_t state = 0x243f6a8885a308d3ULL;  // arbitrary nonzero start
  uint64_t out = 0;
  for (uint64_t p : parts) {
    state ^= p + 0x9e3779b97f4a7c15ULL + (out << 6) + (out >> 2);
    out = splitmix64(state);
  }
  return out;
}

inline Rng make_rng(std::initializer_list<uint64_t> parts) {
  return Rng(mix_seed(parts));
}

}  // namespace experior
