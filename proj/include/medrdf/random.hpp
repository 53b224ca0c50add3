#pragma once

#include <array>
#include <cstdint>
#include <limits>

namespace medrdf {

// Counter-based random stream (Philox4x32-10) keyed by a master seed and a
// substream index. Two streams with the same key pair yield the same
// sequence; streams with different substream indices are independent, so
// parallel workers never share state.
//
// Satisfies UniformRandomBitGenerator, so <random> distributions accept it.
class SeededStream {
 public:
  using result_type = std::uint64_t;

  SeededStream(std::uint64_t master_seed, std::uint64_t substream_index) noexcept;

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept {
    return std::numeric_limits<result_type>::max();
  }

  result_type operator()() noexcept;

  // Uniform on [0, 1) with 53 random bits.
  double uniform() noexcept;
  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }
  // Standard normal via Box-Muller; the second variate of each pair is cached.
  double normal() noexcept;
  // +1.0 or -1.0 with equal probability.
  double rademacher() noexcept;

  std::uint64_t master_seed() const noexcept { return master_seed_; }
  std::uint64_t substream_index() const noexcept { return substream_index_; }

 private:
  void refill() noexcept;

  std::uint64_t master_seed_;
  std::uint64_t substream_index_;
  std::uint64_t block_ = 0;
  std::array<std::uint64_t, 2> buffer_{};
  int buffered_ = 0;
  double cached_normal_ = 0.0;
  bool has_cached_normal_ = false;
};

// Deterministic child seed, e.g. one per test image.
std::uint64_t derive_seed(std::uint64_t master_seed, std::uint64_t index) noexcept;

}  // namespace medrdf
