#pragma once

#include <cstdint>
#include <initializer_list>
#include <limits>

namespace dsgd {

/// SplitMix64 finalizer. Used both to expand seeds and to hash stream paths.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Derives the seed of a named sub-stream from a master seed.
///
/// The path is a sequence of counters, e.g. {tag, epoch} or {tag, step, slot}.
/// Each element is folded in with a SplitMix64 round, so distinct paths give
/// statistically independent seeds and the mapping is a pure function of
/// (master, path). This is the only way streams are split in the library.
constexpr std::uint64_t derive_seed(std::uint64_t master,
                                    std::initializer_list<std::uint64_t> path) {
  std::uint64_t h = mix64(master ^ 0x6a09e667f3bcc909ULL);
  for (std::uint64_t p : path) h = mix64(h ^ mix64(p + 0x3c6ef372fe94f82bULL));
  return h;
}

/// xoshiro256** generator with its own (portable) uniform and Gaussian
/// transforms, so every stream is bit-reproducible across standard libraries.
class Rng {
 public:
  using result_type = std::uint64_t;

  explicit Rng(std::uint64_t seed) { reseed(seed); }

  /// Generator for the sub-stream `path` of `master`.
  static Rng stream(std::uint64_t master, std::initializer_list<std::uint64_t> path) {
    return Rng(derive_seed(master, path));
  }

  void reseed(std::uint64_t seed) {
    // SplitMix64 sequence; never yields the all-zero state.
    std::uint64_t z = seed;
    for (auto& word : s_) {
      word = mix64(z);
      z += 0x9e3779b97f4a7c15ULL;
    }
    has_spare_ = false;
  }

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()() { return next_u64(); }

  std::uint64_t next_u64() {
    const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  /// Uniform integer in [0, bound). Lemire's multiply-shift with rejection.
  std::uint64_t below(std::uint64_t bound);

  /// Standard normal draw (Marsaglia polar method).
  double normal();

 private:
  static constexpr std::uint64_t rotl(std::uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
  }

  std::uint64_t s_[4]{};
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace dsgd
