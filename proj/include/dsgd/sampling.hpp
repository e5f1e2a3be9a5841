#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "dsgd/common.hpp"
#include "dsgd/rng.hpp"

namespace dsgd {

/// Minibatch subsampling strategy pi with batch size b.
struct SubsamplingStrategy {
  SamplingKind kind = SamplingKind::without_replacement;
  std::size_t b = 1;
};

/// Effective sample size b_eff. Sampling the whole population without
/// replacement has b_eff = +inf; `inverse()` is then exactly 0 so that no
/// infinity ever reaches downstream arithmetic.
struct EffectiveSampleSize {
  double value = 1.0;
  bool infinite = false;

  double inverse() const { return infinite ? 0.0 : 1.0 / value; }
};

/// Ordered partition of {0, ..., n-1} into p = n / b disjoint batches.
struct EpochPartition {
  std::vector<std::vector<std::size_t>> batches;
  std::uint64_t epoch_seed = 0;
};

/// Draws one minibatch. Indices are returned sorted; with replacement the
/// result is a multiset and may contain duplicates.
std::vector<std::size_t> draw_minibatch(const SubsamplingStrategy& strategy, std::size_t n,
                                        Rng& rng);

EffectiveSampleSize effective_sample_size(const SubsamplingStrategy& strategy, std::size_t n);

/// Random reshuffling: a uniform permutation chunked into consecutive
/// batches of size b. Requires b | n. The epoch seed is drawn from `rng` and
/// fully determines the partition.
EpochPartition reshuffle_partition(std::size_t n, std::size_t b, Rng& rng);

/// Rebuilds the partition generated from a recorded epoch seed.
EpochPartition partition_from_seed(std::size_t n, std::size_t b, std::uint64_t epoch_seed);

/// (1/n) sum_i ||g_i - mean||^2, the per-draw variance of uniform subsampling.
double subsampling_unit_variance(std::span<const Vec> component_gradients, std::span<const double> mean);

/// Reusable sampler for hot loops: keeps a permutation workspace so drawing
/// without replacement costs O(b) instead of O(n).
class MinibatchSampler {
 public:
  MinibatchSampler(SubsamplingStrategy strategy, std::size_t n);

  /// Fills `out` (resized to b) with a sorted minibatch.
  void draw(Rng& rng, std::vector<std::size_t>& out);

  const SubsamplingStrategy& strategy() const { return strategy_; }
  std::size_t population() const { return n_; }

 private:
  SubsamplingStrategy strategy_;
  std::size_t n_;
  std::vector<std::size_t> perm_;
};

}  // namespace dsgd
