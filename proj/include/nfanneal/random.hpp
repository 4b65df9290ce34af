#ifndef NFANNEAL_RANDOM_HPP
#define NFANNEAL_RANDOM_HPP

#include <cstddef>
#include <cstdint>
#include <random>

namespace nfanneal {

/// Seeded random stream shared by every stochastic component.
///
/// All draws go through this class so that a run is reproducible from a
/// single seed. The distributions are the libstdc++ implementations, which are
/// deterministic for a given engine state.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  double uniform() { return uniform_(engine_); }

  double normal() { return normal_(engine_); }

  /// Uniform integer in [0, n).
  std::size_t index(std::size_t n) {
    return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine_);
  }

  /// Derives an independent seed for a child stream.
  std::uint64_t split() { return engine_(); }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
  std::normal_distribution<double> normal_{0.0, 1.0};
};

}  // namespace nfanneal

#endif  // NFANNEAL_RANDOM_HPP
