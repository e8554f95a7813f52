#pragma once

#include <cstdint>
#include <random>

namespace nqsbell {

/// All randomness in the library comes from std::mt19937_64, whose output
/// sequence is fixed by the standard.
using Rng = std::mt19937_64;

/// Independent stream keyed by (seed, stream id). Streams for different ids
/// never depend on how many other streams exist.
inline Rng make_stream(std::uint64_t seed, std::uint64_t stream_id) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream_id), static_cast<std::uint32_t>(stream_id >> 32)};
  return Rng(seq);
}

/// Uniform double in [0, 1) built from the top 53 bits, so the value is the
/// same on every standard library.
inline double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

inline int uniform_index(Rng& rng, int n) {
  return static_cast<int>(uniform01(rng) * n);
}

}  // namespace nqsbell
