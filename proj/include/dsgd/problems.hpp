#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include "dsgd/common.hpp"

namespace dsgd {

enum class ProblemKind { quadratic, smoothing_erm, reparam };

std::string_view to_string(ProblemKind kind);
ProblemKind parse_problem_kind(std::string_view text);

/// f_i(x; eta) = (L_i/2) ||x - x_i* + eta||^2 with eta ~ N(0, I_d).
struct QuadraticComponents {
  Vec smoothness;            // L_i
  std::vector<Vec> centers;  // x_i*
  double heterogeneity = 1;  // s
};

/// Linear least squares under Gaussian weight perturbation:
/// r_i(w) = E_eps (1/2)((w + eps) . x_i - y_i)^2, eps ~ N(0, scale^2 I).
struct SmoothingErmComponents {
  std::vector<Vec> features;
  Vec labels;
  double perturbation_scale = 1;
  Vec jacobian_bounds;  // G_i
};

/// Location-scale variational toy: l_i(z) = (L_i/2) ||z - zbar_i||^2 with
/// z = C u + m, u ~ N(0, I). Parameter layout: w = [m, row-major tril(C)].
struct ReparamComponents {
  std::vector<Vec> targets;  // zbar_i
  Vec smoothness;            // L_i
  double base_kurtosis = 3;  // k_phi of the standard Gaussian base
  std::size_t latent_dim = 1;
};

struct ProblemSpec {
  ProblemKind kind = ProblemKind::quadratic;
  std::size_t n = 0;
  std::size_t d = 0;
  std::uint64_t seed = 0;
  std::variant<QuadraticComponents, SmoothingErmComponents, ReparamComponents> components;

  /// Dimension of a single noise draw.
  std::size_t noise_dim() const;

  const QuadraticComponents& quadratic() const;
  const SmoothingErmComponents& smoothing_erm() const;
  const ReparamComponents& reparam() const;
};

// Generators. Each is a pure function of its arguments.

/// L_i ~ Inv-Gamma(shape 1/2, scale 1/2), x_i* ~ N(0, s^2 I).
ProblemSpec make_quadratic_problem(std::size_t n, std::size_t d, double s, std::uint64_t seed);

/// Features ~ N(0, I), labels from a random linear teacher plus N(0, 0.01) noise.
ProblemSpec make_smoothing_erm_problem(std::size_t n, std::size_t d, double perturbation_scale,
                                       std::uint64_t seed);

/// L_i ~ U[0.5, 2], zbar_i ~ N(0, s^2 I) in latent_dim dimensions.
ProblemSpec make_reparam_problem(std::size_t n, std::size_t latent_dim, double s,
                                 std::uint64_t seed);

// Constructors from explicit data (fixtures, deserialization).

ProblemSpec quadratic_problem(Vec smoothness, std::vector<Vec> centers, double s = 1.0,
                              std::uint64_t seed = 0);
ProblemSpec smoothing_erm_problem(std::vector<Vec> features, Vec labels, double perturbation_scale,
                                  std::uint64_t seed = 0);
ProblemSpec reparam_problem(std::vector<Vec> targets, Vec smoothness, std::uint64_t seed = 0);

/// Parameter dimension of the reparam family for a latent dimension.
constexpr std::size_t reparam_param_dim(std::size_t latent_dim) {
  return latent_dim + latent_dim * (latent_dim + 1) / 2;
}

/// Index of C(r, c), c <= r, inside the reparam parameter vector.
constexpr std::size_t reparam_scale_index(std::size_t latent_dim, std::size_t r, std::size_t c) {
  return latent_dim + r * (r + 1) / 2 + c;
}

/// Zero vector, except C = I for the reparam family.
Vec default_initial_point(const ProblemSpec& p);

/// Closed-form minimizer (quadratic only).
Vec global_optimum(const ProblemSpec& p);

/// Exact noise expectation of f_i and its gradient.
double component_objective(const ProblemSpec& p, std::size_t i, std::span<const double> x);
void component_gradient(const ProblemSpec& p, std::size_t i, std::span<const double> x,
                        std::span<double> out);

/// F(x) = (1/n) sum_i f_i(x) and its gradient.
std::pair<double, Vec> objective_and_gradient(const ProblemSpec& p, std::span<const double> x);

/// Exact trace variance of the doubly stochastic gradient at x for the
/// quadratic family, by the law of total variance (docs/variance_oracle.md).
double analytic_variance_oracle(const ProblemSpec& p, std::span<const double> x, std::size_t b,
                                std::size_t m, Sharing sharing, SamplingKind strategy);

}  // namespace dsgd
