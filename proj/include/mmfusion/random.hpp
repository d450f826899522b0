#pragma once

#include <cstdint>
#include <random>

namespace mmfusion {

using Rng = std::mt19937_64;

/// Purpose tags for independent randomness streams within one Monte Carlo run.
enum class Stream : std::uint32_t {
  dataset = 0,    // ground truth and observations
  prior = 1,      // initial particle set
  filter = 2,     // everything a filter consumes while stepping
};

/// Derives a reproducible stream from (master_seed, run_index, purpose, sub).
///
/// The five 32-bit words are fed through std::seed_seq, so streams for
/// different runs, purposes or sub-filters are decorrelated while the mapping
/// itself stays a pure function of its arguments.
inline Rng make_stream(std::uint64_t master_seed, std::uint64_t run_index, Stream purpose,
                       std::uint32_t sub = 0) {
  std::seed_seq seq{static_cast<std::uint32_t>(master_seed & 0xffffffffu),
                    static_cast<std::uint32_t>(master_seed >> 32),
                    static_cast<std::uint32_t>(run_index & 0xffffffffu),
                    static_cast<std::uint32_t>(purpose), sub};
  return Rng{seq};
}

}  // namespace mmfusion
