#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <random>
#include <vector>

namespace cct {

/// SplitMix64 finalizer. Bijective on 64-bit words.
constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// Seed of the replication stream with index `index` under `master`.
///
/// sub_seed = splitmix64(master XOR splitmix64(index)). Distinct indices give
/// distinct, decorrelated seeds, so replications never share stream state.
constexpr std::uint64_t derive_seed(std::uint64_t master,
                                    std::uint64_t index) noexcept {
  return splitmix64(master ^ splitmix64(index));
}

/// Explicit randomness stream passed to every stochastic operation.
///
/// Two streams constructed from the same seed and driven by the same call
/// sequence produce identical draws.
class RandomStream {
 public:
  explicit RandomStream(std::uint64_t seed) : engine_(seed) {}

  /// Uniform draw on [0, 1).
  double uniform() { return uniform_(engine_); }

  double normal() { return normal_(engine_); }

  double chi_squared(double dof) {
    std::chi_squared_distribution<double> dist(dof);
    return dist(engine_);
  }

  /// Uniform index in [0, n).
  std::size_t index(std::size_t n) {
    std::uniform_int_distribution<std::size_t> dist(0, n - 1);
    return dist(engine_);
  }

  std::vector<std::size_t> permutation(std::size_t n) {
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    std::shuffle(perm.begin(), perm.end(), engine_);
    return perm;
  }

  std::mt19937_64& engine() noexcept { return engine_; }

 private:
  std::mt19937_64 engine_;
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
  std::normal_distribution<double> normal_{0.0, 1.0};
};

}  // namespace cct
