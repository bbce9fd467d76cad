#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace vplidar {

// std::mt19937_64 is fully specified by the standard, the distributions are
// not. All draws below go through these helpers so outputs are identical
// across standard libraries.
using Rng = std::mt19937_64;

std::uint64_t splitmix64(std::uint64_t x);

/// FNV-1a over the bytes of `s`.
std::uint64_t fnv1a64(std::string_view s);

/// seed XOR stable_hash(scene_id, object_index).
std::uint64_t object_seed(std::uint64_t seed, std::string_view scene_id, std::uint64_t object_index);

/// Independent sub-stream of `seed` identified by `stream`.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

/// Uniform integer in [0, n), n >= 1. Rejection sampling, no modulo bias.
std::uint64_t uniform_below(Rng& rng, std::uint64_t n);

/// Uniform double in [0, 1) with 53 random bits.
double uniform01(Rng& rng);

double uniform_real(Rng& rng, double lo, double hi);

}  // namespace vplidar
