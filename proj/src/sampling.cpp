#include "dsgd/sampling.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <string>

namespace dsgd {

namespace {

void validate(const SubsamplingStrategy& strategy, std::size_t n) {
  require(n >= 1, "population size n must be >= 1");
  require(strategy.b >= 1, "batch size b must be >= 1");
  if (strategy.kind == SamplingKind::without_replacement)
    require(strategy.b <= n, "batch size b=" + std::to_string(strategy.b) +
                                 " exceeds population n=" + std::to_string(n) +
                                 " under sampling without replacement");
}

}  // namespace

MinibatchSampler::MinibatchSampler(SubsamplingStrategy strategy, std::size_t n)
    : strategy_(strategy), n_(n) {
  validate(strategy_, n_);
  if (strategy_.kind == SamplingKind::without_replacement) {
    perm_.resize(n_);
    std::iota(perm_.begin(), perm_.end(), std::size_t{0});
  }
}

void MinibatchSampler::draw(Rng& rng, std::vector<std::size_t>& out) {
  const std::size_t b = strategy_.b;
  out.resize(b);
  if (strategy_.kind == SamplingKind::with_replacement) {
    for (std::size_t j = 0; j < b; ++j) out[j] = static_cast<std::size_t>(rng.below(n_));
  } else {
    // Partial Fisher-Yates: the first b slots of any permutation shuffled this
    // way form a uniform b-subset, so the workspace need not be reset.
    for (std::size_t j = 0; j < b; ++j) {
      const std::size_t k = j + static_cast<std::size_t>(rng.below(n_ - j));
      std::swap(perm_[j], perm_[k]);
      out[j] = perm_[j];
    }
  }
  std::sort(out.begin(), out.end());
}

std::vector<std::size_t> draw_minibatch(const SubsamplingStrategy& strategy, std::size_t n,
                                        Rng& rng) {
  MinibatchSampler sampler(strategy, n);
  std::vector<std::size_t> out;
  sampler.draw(rng, out);
  return out;
}

EffectiveSampleSize effective_sample_size(const SubsamplingStrategy& strategy, std::size_t n) {
  validate(strategy, n);
  const auto b = static_cast<double>(strategy.b);
  if (strategy.kind == SamplingKind::with_replacement) return {b, false};
  if (strategy.b >= n) return {std::numeric_limits<double>::infinity(), true};
  const auto nn = static_cast<double>(n);
  return {(nn - 1.0) * b / (nn - b), false};
}

EpochPartition partition_from_seed(std::size_t n, std::size_t b, std::uint64_t epoch_seed) {
  require(n >= 1 && b >= 1, "reshuffling needs n >= 1 and b >= 1");
  require(n % b == 0, "batch size b=" + std::to_string(b) + " does not divide n=" +
                          std::to_string(n) + "; reshuffling requires b | n");
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  Rng rng(epoch_seed);
  for (std::size_t j = n - 1; j > 0; --j) {
    const auto k = static_cast<std::size_t>(rng.below(j + 1));
    std::swap(perm[j], perm[k]);
  }
  EpochPartition partition;
  partition.epoch_seed = epoch_seed;
  partition.batches.reserve(n / b);
  for (std::size_t start = 0; start < n; start += b) {
    std::vector<std::size_t> batch(perm.begin() + static_cast<std::ptrdiff_t>(start),
                                   perm.begin() + static_cast<std::ptrdiff_t>(start + b));
    std::sort(batch.begin(), batch.end());
    partition.batches.push_back(std::move(batch));
  }
  return partition;
}

EpochPartition reshuffle_partition(std::size_t n, std::size_t b, Rng& rng) {
  return partition_from_seed(n, b, rng.next_u64());
}

double subsampling_unit_variance(std::span<const Vec> component_gradients,
                                 std::span<const double> mean) {
  require(!component_gradients.empty(), "subsampling variance needs at least one gradient");
  double acc = 0.0;
  for (const Vec& g : component_gradients) acc += dist_sq(g, mean);
  return acc / static_cast<double>(component_gradients.size());
}

}  // namespace dsgd
