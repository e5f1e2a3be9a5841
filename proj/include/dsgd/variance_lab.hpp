#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dsgd/common.hpp"
#include "dsgd/estimators.hpp"
#include "dsgd/problems.hpp"
#include "dsgd/rng.hpp"
#include "dsgd/sampling.hpp"

namespace dsgd {

// ---------------------------------------------------------------------------
// Measurement

struct TraceVarianceEstimate {
  double estimate = 0.0;
  double std_error = 0.0;
};

/// Streaming trace-variance accumulator (Welford). Keeps the draws so the
/// standard error can use deviations from the final mean.
class TraceVarianceAccumulator {
 public:
  explicit TraceVarianceAccumulator(std::size_t dim, std::size_t expected_reps = 0);

  void add(std::span<const double> x);
  std::size_t count() const { return count_; }

  /// Unbiased sum_r ||x_r - xbar||^2 / (reps - 1), with standard error
  /// sd(||x_r - xbar||^2) / sqrt(reps). Requires at least 2 draws.
  TraceVarianceEstimate result() const;

 private:
  std::size_t dim_;
  std::size_t count_ = 0;
  Vec mean_;
  double m2_ = 0.0;
  Vec draws_;
};

/// Fills its argument with one i.i.d. draw.
using VectorSampler = std::function<void(Rng&, std::span<double>)>;

TraceVarianceEstimate empirical_trace_variance(const VectorSampler& sampler, std::size_t dim,
                                               std::size_t reps, Rng& rng);

/// Everything needed to realize g_B(x): the subsampling strategy, m, the
/// sharing policy and the evaluation mode.
struct EstimatorConfig {
  SubsamplingStrategy strategy;
  std::size_t m = 1;
  Sharing sharing = Sharing::shared;
  GradientMode mode = GradientMode::monte_carlo;
};

/// Empirical trace variance of reps realizations of g_B(x), each with a fresh
/// minibatch and fresh noise, driven by the stream seeded with `seed`.
TraceVarianceEstimate measure_estimator_variance(const ProblemSpec& p, std::span<const double> x,
                                                 const EstimatorConfig& cfg, std::size_t reps,
                                                 std::uint64_t seed);

// ---------------------------------------------------------------------------
// Closed-form variance bound

struct VarianceBound {
  double v_com = 0.0;
  double v_cor = 0.0;
  double v_sub = 0.0;
  double rho = 0.0;
  EffectiveSampleSize b_eff;

  double total() const { return v_com + v_cor + v_sub; }
};

/// Bound on tr V[x_B] for x_B = (1/b) sum_{i in B} x_i, where x_i has trace
/// variance sigmas[i]^2 and mean means[i]. Any 1/m factor must already be
/// folded into `sigmas`.
VarianceBound doubly_stochastic_variance_bound(std::span<const double> sigmas,
                                               std::span<const Vec> means, double rho,
                                               SamplingKind strategy, std::size_t b);

/// Same bound with the subsampling variance tau^2 given directly.
VarianceBound variance_bound_from_moments(std::span<const double> sigmas, double tau_sq,
                                          double rho, SamplingKind strategy, std::size_t b,
                                          std::size_t n);

struct VarianceReport {
  double empirical = 0.0;
  double std_error = 0.0;
  double bound_total = 0.0;
  double v_com = 0.0;
  double v_cor = 0.0;
  double v_sub = 0.0;
  double rho_used = 0.0;
  EffectiveSampleSize b_eff;
  std::size_t b = 1;
  std::size_t m = 1;
  Sharing sharing = Sharing::shared;
  SamplingKind strategy = SamplingKind::without_replacement;
};

/// Single-draw component variances sigma_i^2 = tr V[g_i(x; eta)] and the exact
/// component means grad f_i(x). Exact for the quadratic family, Monte Carlo
/// (reps draws per component) otherwise.
struct ComponentMoments {
  Vec sigma_sq;
  Vec sigma_sq_se;  // zeros when exact
  std::vector<Vec> means;
};

ComponentMoments component_moments(const ProblemSpec& p, std::span<const double> x,
                                   std::size_t reps, std::uint64_t seed);

/// Measures g_B(x) and evaluates the bound with rho = 1 (shared) or 0
/// (independent). Component moments come from component_moments with the same
/// reps; the bound uses sigma_i^2 / m.
VarianceReport variance_report(const ProblemSpec& p, std::span<const double> x,
                               const EstimatorConfig& cfg, std::size_t reps, std::uint64_t seed);

/// rho implied by a sharing policy: 1 for shared, 0 for independent.
double rho_for(Sharing sharing);

// ---------------------------------------------------------------------------
// Corollary cases (sampling without replacement). sigmas are single-sample
// standard deviations; m is carried explicitly.

enum class CorollaryCase { i, ii, iii, iv, v };

std::string_view to_string(CorollaryCase c);

double corollary_variance(CorollaryCase c, std::span<const double> sigmas, double tau_sq,
                          std::size_t n, std::size_t b, std::size_t m);

// ---------------------------------------------------------------------------
// Expected variance of a random sum

/// One outcome of the batch variable: its probability and, for every index
/// in the batch, a loading matrix A_i (flattened, all the same size) so that
/// x_i = A_i xi with xi standard normal, hence tr Cov(x_i, x_j) = <A_i, A_j>_F.
struct BatchOutcome {
  double probability = 0.0;
  std::vector<Vec> loadings;
};

struct LemmaCheck {
  double lhs = 0.0;
  double rhs = 0.0;
  bool pass = false;
  bool equality = false;  // |lhs - rhs| <= 1e-12 (1 + |rhs|)
};

/// E tr V[sum_{i in B} x_i | B] against rho V[S] + rho (E S)^2 + (1 - rho) E[V],
/// where S = sum_{i in B} sqrt(tr V_i) and V = sum_{i in B} tr V_i, both by
/// enumeration of the outcomes. pass iff lhs <= rhs + 1e-12 (1 + |rhs|).
LemmaCheck expected_variance_lemma_check(std::span<const BatchOutcome> outcomes, double rho);

/// All batches of size b over the given component loadings, uniformly
/// weighted: every b-subset (without replacement) or every ordered b-tuple
/// (with replacement).
std::vector<BatchOutcome> enumerate_batch_outcomes(std::span<const Vec> component_loadings,
                                                   std::size_t b, SamplingKind kind);

// ---------------------------------------------------------------------------
// BV and ER constants

struct ConstantsReport {
  // BV side, at x*.
  Vec sigma_i_sq;     // m-sample component variances
  Vec sigma_i_sq_se;  // zeros when exact
  double tau_sq = 0.0;
  std::size_t m = 1;
  // Smoothness of the exact components.
  Vec L_i;
  double L_max = 0.0;
  // ER side.
  Vec script_L_i;
  double script_L_max = 0.0;
  double script_L_sub_unit = 0.0;  // L_max: ER constant of single-index subsampling
  double script_L_sub = 0.0;       // script_L_sub_unit / b_eff
  double script_L_A = 0.0;
  double script_L_B = 0.0;
  // Condition numbers; set by with_condition_numbers.
  double mu = 0.0;
  double kappa = 0.0;
  double kappa_sigma = 0.0;
  double kappa_tau = 0.0;
};

/// sigma_i^2 = tr V[g_i^m(x*)] and tau^2 = mean ||grad f_i(x*)||^2 at the
/// closed-form optimum (quadratic family: sigma_i^2 = (d/m) L_i^2 exactly).
ConstantsReport bv_constants(const ProblemSpec& p, std::size_t m, std::size_t reps, Rng& rng);

/// BV constants at an arbitrary reference point, with Monte Carlo sigma_i^2
/// for kinds without a closed form.
ConstantsReport bv_constants_at(const ProblemSpec& p, std::span<const double> point,
                                std::size_t m, std::size_t reps, Rng& rng);

/// ER constants of the doubly stochastic estimator under coupled noise.
/// Per-component script-L_i: 0 for the quadratic and smoothing families
/// (additive noise), (L_i^2/mu)(d_z + k_phi) for reparam.
ConstantsReport er_constants(const ProblemSpec& p, double rho, SamplingKind strategy,
                             std::size_t b, double mu);

/// Copies the BV fields of `bv` into `er` and fills kappa = L_max/mu,
/// kappa_sigma = max sigma_i/mu, kappa_tau = tau/mu.
ConstantsReport merge_constants(const ConstantsReport& bv, const ConstantsReport& er, double mu);

/// sigma^2 of the BV condition for g_B at x*: the general bound evaluated
/// with the report's sigma_i and tau^2.
double bv_sigma_sq(const ConstantsReport& c, double rho, SamplingKind strategy, std::size_t b,
                   std::size_t n);

/// Smoothness of F (quadratic: mean L_i, since the Hessian is mean(L_i) I).
double objective_smoothness(const ProblemSpec& p);
/// Strong convexity of F (quadratic: mean L_i).
double objective_strong_convexity(const ProblemSpec& p);

/// Constants of the reshuffling floor r^{Kp} r0 + C_sub gamma^2 + C_com gamma.
struct ReshufflingConstants {
  double c_sub = 0.0;
  double c_com = 0.0;
  double gamma_max = 0.0;  // 1 / (script_L_max + L_max)
};

ReshufflingConstants reshuffling_constants(const ConstantsReport& c, double mu, std::size_t n,
                                           std::size_t b);

// ---------------------------------------------------------------------------
// Audits

struct AuditConstants {
  double script_L = 0.0;  // ER constant of g_B
  double L = 0.0;         // smoothness of F
  double sigma_sq = 0.0;  // BV constant of g_B
};

struct AuditRow {
  double suboptimality = 0.0;  // F(x) - F(x*)
  double empirical = 0.0;      // E ||g(x)||^2
  double std_error = 0.0;
  double rhs = 0.0;            // 4 (script_L + L)(F(x) - F*) + 2 sigma^2
  bool pass = false;           // empirical <= rhs + 3 SE
};

std::vector<AuditRow> gradient_norm_bound_audit(const ProblemSpec& p, std::span<const Vec> points,
                                                const AuditConstants& constants,
                                                const EstimatorConfig& cfg, std::size_t reps,
                                                Rng& rng);

/// ((1/n) sum_i D_{f_i}(x, y), D_F(x, y)).
std::pair<double, double> average_bregman_check(const ProblemSpec& p, std::span<const double> x,
                                                std::span<const double> y);

struct CorrelationEstimate {
  double rho_hat = 0.0;      // clamped to [0, 1]
  double raw_max = 0.0;      // unclamped maximum pairwise correlation
  std::size_t pair_i = 0;
  std::size_t pair_j = 0;
  std::vector<std::size_t> degenerate;  // zero-variance components, pairs skipped
};

/// Per-draw sampler of k component vectors (each of dimension dim).
using ComponentSampler = std::function<void(Rng&, std::vector<Vec>&)>;

CorrelationEstimate correlation_estimate(const ComponentSampler& sampler, std::size_t k,
                                         std::size_t dim, std::size_t reps, Rng& rng);

// ---------------------------------------------------------------------------
// Budget sweep

struct SweepRow {
  double s = 0.0;
  std::size_t budget = 0;
  std::size_t b = 0;
  std::size_t m = 0;
  Sharing sharing = Sharing::shared;
  SamplingKind strategy = SamplingKind::without_replacement;
  double empirical = 0.0;  // NaN when reps == 0
  double std_error = 0.0;
  double oracle = 0.0;
  double v_com = 0.0;
  double v_cor = 0.0;
  double v_sub = 0.0;
  double bound_total = 0.0;
  std::string status = "ok";
};

/// For each s (the instance is regenerated from p.n, p.d and p.seed) and each
/// budget, every factorization b m = budget with b a power of two and b <= n.
/// Rows are ordered by (s, budget, b). reps = 0 skips Monte Carlo.
std::vector<SweepRow> budget_sweep(const ProblemSpec& p, std::span<const std::size_t> budgets,
                                   std::span<const double> heterogeneity, Sharing sharing,
                                   SamplingKind strategy, std::size_t reps, Rng& rng,
                                   std::size_t threads = 1);

}  // namespace dsgd
