#pragma once

#include <cstdint>
#include <random>

namespace lrd {

using Rng = std::mt19937_64;

/// SplitMix64 finalizer; used to derive independent child seeds from a parent.
constexpr std::uint64_t mix_seed(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t child_seed(std::uint64_t parent, std::uint64_t index) noexcept {
  return mix_seed(mix_seed(parent) ^ mix_seed(index + 0x51ed270b27a3f1cbULL));
}

}  // namespace lrd
