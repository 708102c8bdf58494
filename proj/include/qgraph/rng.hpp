#pragma once

#include <cstdint>
#include <random>

namespace qgraph {

// Deterministic uniform doubles from a seeded mt19937_64.
// std::uniform_real_distribution is implementation-defined, so draws are
// built from raw 64-bit output to keep results identical across platforms.
class UniformRng {
 public:
  explicit UniformRng(std::uint64_t seed) : engine_(seed) {}

  // Uniform in [0, 1) with 53-bit resolution.
  double unit() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double in(double lo, double hi) { return lo + (hi - lo) * unit(); }

  std::uint64_t raw() { return engine_(); }

 private:
  std::mt19937_64 engine_;
};

}  // namespace qgraph
