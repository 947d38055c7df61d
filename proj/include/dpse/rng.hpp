#pragma once

#include <array>
#include <cstdint>
#include <span>

namespace dpse {

/// Philox4x32-10 counter-based generator (Salmon et al., SC'11).
///
/// The stream is fully determined by (seed, stream id); output bits are
/// identical on every platform. `split` derives an independent child stream,
/// which is how per-task, per-seed and per-individual streams are created.
/// Real-valued draws use our own transforms (53-bit uniforms, Box-Muller),
/// never the unspecified algorithms of <random> distributions.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0, std::uint64_t stream = 0);

  std::uint64_t next_u64();
  std::uint32_t next_u32();

  /// Uniform on [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Standard normal.
  double normal();
  /// Unbiased integer in [0, n).
  std::uint64_t below(std::uint64_t n);
  bool bernoulli(double p) { return uniform() < p; }

  Rng split(std::uint64_t stream) const;

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream() const { return stream_; }

  template <typename T>
  void shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(items[i - 1], items[j]);
    }
  }

  bool operator==(const Rng& other) const = default;

 private:
  void refill();

  std::uint64_t seed_;
  std::uint64_t stream_;
  std::array<std::uint32_t, 2> key_{};
  std::array<std::uint32_t, 4> counter_{};
  std::array<std::uint32_t, 4> block_{};
  int index_ = 4;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

/// SplitMix64 finalizer; used for seed derivation and config hashing.
std::uint64_t mix64(std::uint64_t x);

}  // namespace dpse
