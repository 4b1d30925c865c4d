#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace dct {

// 64-bit FNV-1a; used for purpose tags and content hashes of small records.
constexpr std::uint64_t fnv1a(std::string_view text,
                              std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Random stream keyed by (master seed, purpose, index).
///
/// Streams with different keys are statistically independent, so datasets,
/// initialization and training noise can be reproduced separately. All
/// distributions are implemented from the raw 64-bit engine output so that
/// draws are identical across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(splitmix64(seed)) {}
  Rng(std::uint64_t master, std::string_view purpose, std::uint64_t index = 0)
      : engine_(key(master, purpose, index)) {}

  static std::uint64_t key(std::uint64_t master, std::string_view purpose,
                           std::uint64_t index) {
    return splitmix64(splitmix64(master ^ fnv1a(purpose)) + splitmix64(index));
  }

  /// Child stream; the parent advances by one draw.
  Rng split(std::string_view purpose, std::uint64_t index = 0) {
    return Rng(engine_(), purpose, index);
  }

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n).
  std::size_t index(std::size_t n);

  double normal();
  Eigen::MatrixXd normal_matrix(Eigen::Index rows, Eigen::Index cols);

  /// Gamma(shape, scale=1), Marsaglia-Tsang.
  double gamma(double shape);
  double chi_squared(double dof) { return 2.0 * gamma(0.5 * dof); }

  /// Uniformly random permutation of 0..n-1 (Fisher-Yates).
  std::vector<std::size_t> permutation(std::size_t n);
  /// k distinct indices from 0..n-1 in random order.
  std::vector<std::size_t> sample_without_replacement(std::size_t n,
                                                      std::size_t k);

 private:
  std::mt19937_64 engine_;
  double cached_normal_ = 0.0;
  bool has_cached_ = false;
};

}  // namespace dct
