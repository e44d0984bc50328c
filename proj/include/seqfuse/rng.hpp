#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace seqfuse {

using Rng = std::mt19937_64;

/// Independent, reproducible stream for a named purpose under a run seed,
/// e.g. rng_stream(seed, "am.enc.fwd0.w_input").
Rng rng_stream(std::uint64_t seed, std::string_view name);

/// 64-bit FNV-1a; stable across platforms, unlike std::hash.
std::uint64_t fnv1a(std::string_view s);

}  // namespace seqfuse
