#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

namespace fusionkit {

/// Seeded pseudo-random stream.
///
/// The generator is xoshiro256** with its state expanded from the 64-bit seed
/// by splitmix64. Uniform doubles take the top 53 bits of a draw. Gaussian
/// draws use the Box-Muller transform and produce values in pairs; the second
/// value of each pair is cached and returned by the next call. Integer ranges
/// use rejection sampling so every residue is equally likely.
///
/// The stream depends only on the seed and the sequence of calls, so two
/// generators built from the same seed yield identical values.
class Rng {
 public:
  using result_type = std::uint64_t;

  explicit Rng(std::uint64_t seed);

  std::uint64_t seed() const noexcept { return seed_; }

  std::uint64_t next_u64() noexcept;
  /// Uniform in [0, 1).
  double uniform() noexcept;
  double uniform(double lo, double hi) noexcept;
  /// Uniform integer in [0, n). n must be positive.
  std::uint64_t uniform_index(std::uint64_t n) noexcept;
  /// Standard normal.
  double normal() noexcept;
  double normal(double mean, double stddev) noexcept { return mean + stddev * normal(); }

  template <typename T>
  void shuffle(std::span<T> items) noexcept {
    for (std::size_t i = items.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(uniform_index(i));
      std::swap(items[i - 1], items[j]);
    }
  }
  template <typename T>
  void shuffle(std::vector<T>& items) noexcept {
    shuffle(std::span<T>(items));
  }

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return ~result_type{0}; }
  result_type operator()() noexcept { return next_u64(); }

 private:
  std::uint64_t seed_;
  std::uint64_t state_[4];
  std::optional<double> spare_normal_;
};

std::uint64_t splitmix64(std::uint64_t& state) noexcept;

/// 64-bit FNV-1a.
std::uint64_t fnv1a(std::string_view bytes) noexcept;

/// Independent child seed for a named sub-stream, e.g. one per user id.
std::uint64_t derive_seed(std::uint64_t master, std::string_view label) noexcept;
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) noexcept;

}  // namespace fusionkit
