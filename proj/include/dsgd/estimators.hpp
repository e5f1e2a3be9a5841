#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "dsgd/common.hpp"
#include "dsgd/problems.hpp"
#include "dsgd/rng.hpp"

namespace dsgd {

/// How component gradients are evaluated. `exact` replaces every Monte Carlo
/// estimate by the closed-form expectation (the sigma_i = 0 surrogate).
enum class GradientMode { monte_carlo, exact };

/// m raw standard-normal noise draws, each of the problem's noise dimension.
struct NoiseBlock {
  std::vector<Vec> draws;
  Sharing sharing = Sharing::shared;
  std::uint64_t source_seed = 0;

  std::size_t m() const { return draws.size(); }
};

struct GradientEstimate {
  Vec value;
  std::vector<std::size_t> batch;
  std::optional<std::vector<Vec>> per_component;  // aligned with `batch`
  std::size_t m = 1;
  Sharing sharing = Sharing::shared;
  Vec at_point;
};

/// Block of m draws produced by the stream seeded with `seed`.
NoiseBlock draw_noise_block(const ProblemSpec& p, std::size_t m, Sharing sharing,
                            std::uint64_t seed);

/// Single-draw integrand g_i(x; noise).
void component_gradient_integrand(const ProblemSpec& p, std::size_t i, std::span<const double> x,
                                  std::span<const double> noise, std::span<double> out);
Vec component_gradient_integrand(const ProblemSpec& p, std::size_t i, std::span<const double> x,
                                 std::span<const double> noise);

/// Average of the integrand over the draws of `block`.
Vec monte_carlo_component(const ProblemSpec& p, std::size_t i, std::span<const double> x,
                          const NoiseBlock& block);

/// Scratch buffers for allocation-free gradient estimation in hot loops.
struct EstimatorWorkspace {
  Vec noise;
  Vec noise_mean;
  Vec component;
};

/// Writes the doubly stochastic gradient (1/b) sum_{i in batch} g_i into `out`.
///
/// Noise streams: one 64-bit base seed is drawn from `rng`; batch slot j uses
/// the stream derive_seed(base, {j}). Shared noise gives every slot the block
/// of slot 0; independent noise gives each slot its own block, so repeated
/// indices of a with-replacement batch still get independent noise.
/// If `per_component` is non-null it receives one vector per batch slot.
void estimate_gradient(const ProblemSpec& p, std::span<const std::size_t> batch,
                       std::span<const double> x, std::size_t m, Sharing sharing, Rng& rng,
                       std::span<double> out, EstimatorWorkspace& ws,
                       GradientMode mode = GradientMode::monte_carlo,
                       std::vector<Vec>* per_component = nullptr);

GradientEstimate doubly_stochastic_gradient(const ProblemSpec& p, std::span<const std::size_t> batch,
                                            std::span<const double> x, std::size_t m,
                                            Sharing sharing, Rng& rng,
                                            bool keep_per_component = false,
                                            GradientMode mode = GradientMode::monte_carlo);

}  // namespace dsgd
