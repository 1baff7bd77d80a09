#pragma once

#include <cstdint>
#include <random>

#include "pda/types.hpp"

namespace pda {

// Deterministic random source. All variates are derived from raw mt19937_64
// output with explicit arithmetic, so streams are bit-identical across
// standard library implementations (std::*_distribution is not portable).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1).
  double uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Standard normal via Box-Muller; two engine draws per call, no cached spare.
  double gaussian();

  // Uniform integer in [0, n).
  std::size_t index(std::size_t n) { return static_cast<std::size_t>(engine_() % n); }

  // Gaussian direction normalized to unit length.
  FeatureVector unit_vector(std::size_t dim);

 private:
  std::mt19937_64 engine_;
};

}  // namespace pda
