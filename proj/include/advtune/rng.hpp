#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace advtune {

using Rng = std::mt19937_64;

// SplitMix64 finalizer. Bijective on 64-bit words.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Child seed from a root and a path of identifiers, e.g.
// derive_seed(root, {cell, rep}). Depends only on the values, never on the
// order in which callers happen to request seeds.
constexpr std::uint64_t derive_seed(std::uint64_t root,
                                    std::initializer_list<std::uint64_t> path) noexcept {
  std::uint64_t h = mix64(root);
  for (std::uint64_t p : path) h = mix64(h ^ mix64(p + 0x632be59bd9b4e019ULL));
  return h;
}

// Stream tags used with derive_seed so unrelated consumers never share a
// stream.
namespace stream {
inline constexpr std::uint64_t kShuffle = 1;
inline constexpr std::uint64_t kReplace = 2;
inline constexpr std::uint64_t kAttack = 3;
inline constexpr std::uint64_t kEvalAttack = 4;
inline constexpr std::uint64_t kSchedule = 5;
inline constexpr std::uint64_t kTrial = 6;
inline constexpr std::uint64_t kRepetition = 7;
inline constexpr std::uint64_t kCell = 8;
inline constexpr std::uint64_t kInit = 9;
}  // namespace stream

}  // namespace advtune
