#pragma once

#include <cstdint>
#include <random>

namespace rgnn {

using Rng = std::mt19937_64;

// Independent named streams derived from one run seed, so that e.g. adding a
// dropout draw never shifts the rewiring sequence.
enum class Stream : std::uint32_t {
  split = 1,
  init = 2,
  mask = 3,
  shuffle = 4,
  rewire = 5,
  dropout = 6,
};

inline Rng make_rng(std::uint64_t seed, Stream stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed & 0xffffffffu),
                    static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream)};
  return Rng(seq);
}

}  // namespace rgnn
