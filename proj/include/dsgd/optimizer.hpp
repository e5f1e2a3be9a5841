#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "dsgd/common.hpp"
#include "dsgd/estimators.hpp"
#include "dsgd/problems.hpp"
#include "dsgd/sampling.hpp"

namespace dsgd {

/// Feasible set X: all of R^d or a closed Euclidean ball.
struct Domain {
  enum class Kind { unconstrained, ball };
  Kind kind = Kind::unconstrained;
  Vec center;
  double radius = 0.0;

  static Domain unconstrained() { return {}; }
  static Domain ball(Vec center, double radius);
};

/// Stream tags under RunConfig::master_seed. A run draws
///   partition of epoch k  from derive_seed(master, {stream_partition, k}),
///   noise of global step t from derive_seed(master, {stream_noise, t}),
///   minibatch of step t   from derive_seed(master, {stream_batch, t}),
/// so shared and independent runs at equal seeds see the same batches and
/// partitions.
inline constexpr std::uint64_t stream_partition = 1;
inline constexpr std::uint64_t stream_noise = 2;
inline constexpr std::uint64_t stream_batch = 3;

struct RunConfig {
  /// sgd_run uses kind and b; sgd_rr_run reshuffles and only reads b.
  SubsamplingStrategy strategy;
  std::size_t m = 1;
  Sharing sharing = Sharing::shared;
  GradientMode mode = GradientMode::monte_carlo;
  double stepsize = 0.01;
  std::size_t steps_or_epochs = 0;  // T for sgd_run, K for sgd_rr_run
  Domain domain;
  std::uint64_t master_seed = 0;
  std::size_t record_every = 1;
  std::optional<Vec> x0;  // default_initial_point(p) when unset
};

/// Iterate x_t after `step` total steps. For reshuffling, epoch = step / p and
/// records with step % p == 0 are epoch boundaries; for sgd_run epoch is 0.
struct TraceRecord {
  std::size_t epoch = 0;
  std::size_t step = 0;
  Vec iterate;
  std::optional<double> dist_sq_to_opt;
  std::optional<double> grad_norm_sq;
};

Vec project(std::span<const double> x, const Domain& domain);
void project_inplace(std::span<double> x, const Domain& domain);

/// Projected SGD with a fresh minibatch and fresh noise each step. Records
/// x_0, every record_every-th step and always the final iterate.
std::vector<TraceRecord> sgd_run(const ProblemSpec& p, const RunConfig& cfg);

/// Doubly SGD with random reshuffling for K epochs. Records x_0, every
/// record_every-th step, every epoch boundary and the final iterate.
std::vector<TraceRecord> sgd_rr_run(const ProblemSpec& p, const RunConfig& cfg);

struct StepsizeChoice {
  double gamma = 0.0;
  std::uint64_t t_min = 0;
};

/// For r_T <= (1 - gamma mu)^T r_0 + B gamma: gamma = min(eps/(2B), 1/C) and
/// T_min = ceil(log(2 r_0/eps)/(gamma mu)), clamped at 0.
StepsizeChoice stepsize_for_accuracy(double B, double C, double mu, double eps, double r0);

/// For r_T <= (1 - gamma mu)^T r_0 + A gamma^2 + B gamma: gamma is the root of
/// A gamma^2 + B gamma = eps/2, capped at 1/C.
StepsizeChoice stepsize_for_accuracy_quadratic_floor(double A, double B, double C, double mu,
                                                     double eps, double r0);

/// x*^0, ..., x*^p with x*^i = Pi(x* - gamma sum_{j<i} grad f_{P_j}(x*)), where
/// f_{P_j} is the batch average. Quadratic family only.
std::vector<Vec> lyapunov_reference_points(const ProblemSpec& p, const EpochPartition& partition,
                                           double gamma, const Domain& domain = Domain{});

}  // namespace dsgd
