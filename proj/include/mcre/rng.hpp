#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

namespace mcre {

/// 64-bit FNV-1a; used for stream naming and content hashes.
std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t seed = 0xcbf29ce484222325ULL);

/// Formats a hash as 16 lowercase hex digits.
std::string hex64(std::uint64_t value);

std::uint64_t splitmix64(std::uint64_t& state);

/// Deterministic generator with platform-independent distributions.
///
/// A global seed fans out into named streams (`split`, `init`, `shuffle`,
/// `dropout`, ...) so that adding a new consumer never perturbs the draws
/// seen by existing ones.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);
  static Rng stream(std::uint64_t seed, std::string_view name);

  std::uint64_t next_u64();
  /// Uniform in [0, 1).
  double uniform();
  double uniform(double low, double high);
  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);
  double normal();
  bool bernoulli(double p);
  /// Index drawn from an unnormalized weight vector.
  std::size_t categorical(const std::vector<double>& weights);

  template <typename It>
  void shuffle(It first, It last) {
    const auto n = static_cast<std::uint64_t>(last - first);
    for (std::uint64_t i = n; i > 1; --i) {
      const auto j = below(i);
      std::swap(first[i - 1], first[j]);
    }
  }

 private:
  std::uint64_t s_[4];
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace mcre
