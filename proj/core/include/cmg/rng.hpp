#pragma once

#include <cstdint>
#include <random>

namespace cmg {

// Independent deterministic stream for (seed, stream tag, extra).
inline std::mt19937_64 seeded_engine(uint64_t seed, uint32_t stream, uint64_t extra = 0) {
  std::seed_seq seq{static_cast<uint32_t>(seed), static_cast<uint32_t>(seed >> 32), stream,
                    static_cast<uint32_t>(extra), static_cast<uint32_t>(extra >> 32)};
  return std::mt19937_64(seq);
}

}  // namespace cmg
