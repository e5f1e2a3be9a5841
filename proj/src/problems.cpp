#include "dsgd/problems.hpp"

#include <cmath>
#include <string>

#include "dsgd/rng.hpp"
#include "dsgd/sampling.hpp"

namespace dsgd {

std::string_view to_string(ProblemKind kind) {
  switch (kind) {
    case ProblemKind::quadratic: return "quadratic";
    case ProblemKind::smoothing_erm: return "smoothing_erm";
    case ProblemKind::reparam: return "reparam";
  }
  return "unknown";
}

ProblemKind parse_problem_kind(std::string_view text) {
  if (text == "quadratic") return ProblemKind::quadratic;
  if (text == "smoothing_erm") return ProblemKind::smoothing_erm;
  if (text == "reparam") return ProblemKind::reparam;
  throw ParameterError("unknown problem kind '" + std::string(text) +
                       "' (expected quadratic, smoothing_erm or reparam)");
}

std::size_t ProblemSpec::noise_dim() const {
  return kind == ProblemKind::reparam ? reparam().latent_dim : d;
}

const QuadraticComponents& ProblemSpec::quadratic() const {
  if (kind != ProblemKind::quadratic) throw UnsupportedError("problem is not quadratic");
  return std::get<QuadraticComponents>(components);
}

const SmoothingErmComponents& ProblemSpec::smoothing_erm() const {
  if (kind != ProblemKind::smoothing_erm) throw UnsupportedError("problem is not smoothing_erm");
  return std::get<SmoothingErmComponents>(components);
}

const ReparamComponents& ProblemSpec::reparam() const {
  if (kind != ProblemKind::reparam) throw UnsupportedError("problem is not reparam");
  return std::get<ReparamComponents>(components);
}

namespace {

void check_vectors(const std::vector<Vec>& vs, std::size_t n, std::size_t d, const char* what) {
  require(vs.size() == n, std::string(what) + ": expected " + std::to_string(n) + " vectors");
  for (const Vec& v : vs) {
    require(v.size() == d, std::string(what) + ": inconsistent dimension");
    require(all_finite(v), std::string(what) + ": non-finite entry");
  }
}

void check_positive(const Vec& v, const char* what) {
  for (double x : v) require(std::isfinite(x) && x > 0.0, std::string(what) + " must be positive");
}

Vec gaussian_vector(Rng& rng, std::size_t d, double scale) {
  Vec v(d);
  for (double& x : v) x = scale * rng.normal();
  return v;
}

}  // namespace

ProblemSpec quadratic_problem(Vec smoothness, std::vector<Vec> centers, double s,
                              std::uint64_t seed) {
  const std::size_t n = smoothness.size();
  require(n >= 1, "quadratic problem needs n >= 1");
  require(!centers.empty() && !centers.front().empty(), "quadratic problem needs d >= 1");
  require(s > 0.0, "heterogeneity s must be positive");
  check_positive(smoothness, "smoothness L_i");
  const std::size_t d = centers.front().size();
  check_vectors(centers, n, d, "centers");
  ProblemSpec p;
  p.kind = ProblemKind::quadratic;
  p.n = n;
  p.d = d;
  p.seed = seed;
  p.components = QuadraticComponents{std::move(smoothness), std::move(centers), s};
  return p;
}

ProblemSpec smoothing_erm_problem(std::vector<Vec> features, Vec labels, double perturbation_scale,
                                  std::uint64_t seed) {
  const std::size_t n = features.size();
  require(n >= 1, "smoothing_erm problem needs n >= 1");
  require(!features.front().empty(), "smoothing_erm problem needs d >= 1");
  require(labels.size() == n, "labels: expected one per feature vector");
  require(all_finite(labels), "labels: non-finite entry");
  require(perturbation_scale > 0.0, "perturbation scale must be positive");
  const std::size_t d = features.front().size();
  check_vectors(features, n, d, "features");
  Vec bounds(n);
  for (std::size_t i = 0; i < n; ++i) bounds[i] = std::sqrt(norm_sq(features[i]));
  ProblemSpec p;
  p.kind = ProblemKind::smoothing_erm;
  p.n = n;
  p.d = d;
  p.seed = seed;
  p.components = SmoothingErmComponents{std::move(features), std::move(labels),
                                        perturbation_scale, std::move(bounds)};
  return p;
}

ProblemSpec reparam_problem(std::vector<Vec> targets, Vec smoothness, std::uint64_t seed) {
  const std::size_t n = smoothness.size();
  require(n >= 1, "reparam problem needs n >= 1");
  require(!targets.empty() && !targets.front().empty(), "reparam problem needs d_z >= 1");
  check_positive(smoothness, "smoothness L_i");
  const std::size_t dz = targets.front().size();
  check_vectors(targets, n, dz, "targets");
  ProblemSpec p;
  p.kind = ProblemKind::reparam;
  p.n = n;
  p.d = reparam_param_dim(dz);
  p.seed = seed;
  p.components = ReparamComponents{std::move(targets), std::move(smoothness), 3.0, dz};
  return p;
}

ProblemSpec make_quadratic_problem(std::size_t n, std::size_t d, double s, std::uint64_t seed) {
  require(n >= 1 && d >= 1, "quadratic problem needs n >= 1 and d >= 1");
  require(s > 0.0 && std::isfinite(s), "heterogeneity s must be positive");
  Rng smooth_rng = Rng::stream(seed, {0});
  Rng center_rng = Rng::stream(seed, {1});
  Vec smoothness(n);
  for (double& l : smoothness) {
    // Inv-Gamma(1/2, 1/2) is the law of 1/Z^2.
    double z = 0.0;
    while (z == 0.0) z = smooth_rng.normal();
    l = 1.0 / (z * z);
  }
  std::vector<Vec> centers(n);
  for (Vec& c : centers) c = gaussian_vector(center_rng, d, s);
  return quadratic_problem(std::move(smoothness), std::move(centers), s, seed);
}

ProblemSpec make_smoothing_erm_problem(std::size_t n, std::size_t d, double perturbation_scale,
                                       std::uint64_t seed) {
  require(n >= 1 && d >= 1, "smoothing_erm problem needs n >= 1 and d >= 1");
  Rng rng = Rng::stream(seed, {0});
  const Vec teacher = gaussian_vector(rng, d, 1.0);
  std::vector<Vec> features(n);
  Vec labels(n);
  for (std::size_t i = 0; i < n; ++i) {
    features[i] = gaussian_vector(rng, d, 1.0);
    labels[i] = dot(teacher, features[i]) + 0.1 * rng.normal();
  }
  return smoothing_erm_problem(std::move(features), std::move(labels), perturbation_scale, seed);
}

ProblemSpec make_reparam_problem(std::size_t n, std::size_t latent_dim, double s,
                                 std::uint64_t seed) {
  require(n >= 1 && latent_dim >= 1, "reparam problem needs n >= 1 and d_z >= 1");
  require(s > 0.0, "target spread s must be positive");
  Rng rng = Rng::stream(seed, {0});
  Vec smoothness(n);
  for (double& l : smoothness) l = 0.5 + 1.5 * rng.uniform();
  std::vector<Vec> targets(n);
  for (Vec& t : targets) t = gaussian_vector(rng, latent_dim, s);
  return reparam_problem(std::move(targets), std::move(smoothness), seed);
}

Vec default_initial_point(const ProblemSpec& p) {
  Vec x(p.d, 0.0);
  if (p.kind == ProblemKind::reparam) {
    const std::size_t dz = p.reparam().latent_dim;
    for (std::size_t r = 0; r < dz; ++r) x[reparam_scale_index(dz, r, r)] = 1.0;
  }
  return x;
}

Vec global_optimum(const ProblemSpec& p) {
  if (p.kind != ProblemKind::quadratic)
    throw UnsupportedError("global_optimum: no closed form for kind " +
                           std::string(to_string(p.kind)));
  const auto& q = p.quadratic();
  Vec x(p.d, 0.0);
  double total = 0.0;
  for (std::size_t i = 0; i < p.n; ++i) {
    axpy(q.smoothness[i], q.centers[i], x);
    total += q.smoothness[i];
  }
  scale(x, 1.0 / total);
  return x;
}

double component_objective(const ProblemSpec& p, std::size_t i, std::span<const double> x) {
  require(i < p.n && x.size() == p.d, "component_objective: index or dimension mismatch");
  switch (p.kind) {
    case ProblemKind::quadratic: {
      const auto& q = p.quadratic();
      return 0.5 * q.smoothness[i] * (dist_sq(x, q.centers[i]) + static_cast<double>(p.d));
    }
    case ProblemKind::smoothing_erm: {
      const auto& s = p.smoothing_erm();
      const double r = dot(x, s.features[i]) - s.labels[i];
      const double sc = s.perturbation_scale;
      return 0.5 * (r * r + sc * sc * norm_sq(s.features[i]));
    }
    case ProblemKind::reparam: {
      const auto& rp = p.reparam();
      const std::size_t dz = rp.latent_dim;
      const double loc = dist_sq(x.first(dz), rp.targets[i]);
      const double frob = norm_sq(x.subspan(dz));
      return 0.5 * rp.smoothness[i] * (loc + frob);
    }
  }
  return 0.0;
}

void component_gradient(const ProblemSpec& p, std::size_t i, std::span<const double> x,
                        std::span<double> out) {
  require(i < p.n && x.size() == p.d && out.size() == p.d,
          "component_gradient: index or dimension mismatch");
  switch (p.kind) {
    case ProblemKind::quadratic: {
      const auto& q = p.quadratic();
      const double l = q.smoothness[i];
      for (std::size_t k = 0; k < p.d; ++k) out[k] = l * (x[k] - q.centers[i][k]);
      return;
    }
    case ProblemKind::smoothing_erm: {
      const auto& s = p.smoothing_erm();
      const double r = dot(x, s.features[i]) - s.labels[i];
      for (std::size_t k = 0; k < p.d; ++k) out[k] = r * s.features[i][k];
      return;
    }
    case ProblemKind::reparam: {
      const auto& rp = p.reparam();
      const std::size_t dz = rp.latent_dim;
      const double l = rp.smoothness[i];
      for (std::size_t k = 0; k < dz; ++k) out[k] = l * (x[k] - rp.targets[i][k]);
      for (std::size_t k = dz; k < p.d; ++k) out[k] = l * x[k];
      return;
    }
  }
}

std::pair<double, Vec> objective_and_gradient(const ProblemSpec& p, std::span<const double> x) {
  require(x.size() == p.d, "objective_and_gradient: dimension mismatch");
  double f = 0.0;
  Vec grad(p.d, 0.0);
  Vec gi(p.d);
  for (std::size_t i = 0; i < p.n; ++i) {
    f += component_objective(p, i, x);
    component_gradient(p, i, x, gi);
    axpy(1.0, gi, grad);
  }
  const double inv_n = 1.0 / static_cast<double>(p.n);
  scale(grad, inv_n);
  return {f * inv_n, std::move(grad)};
}

double analytic_variance_oracle(const ProblemSpec& p, std::span<const double> x, std::size_t b,
                                std::size_t m, Sharing sharing, SamplingKind strategy) {
  if (p.kind != ProblemKind::quadratic)
    throw UnsupportedError("analytic_variance_oracle: quadratic family only");
  require(x.size() == p.d, "analytic_variance_oracle: dimension mismatch");
  require(m >= 1, "analytic_variance_oracle: m must be >= 1");
  const SubsamplingStrategy strat{strategy, b};
  require(b >= 1, "analytic_variance_oracle: b must be >= 1");
  if (strategy == SamplingKind::without_replacement)
    require(b <= p.n, "analytic_variance_oracle: b=" + std::to_string(b) + " exceeds n=" +
                          std::to_string(p.n) + " under sampling without replacement");
  const double inv_beff = effective_sample_size(strat, p.n).inverse();

  const auto& q = p.quadratic();
  const double n = static_cast<double>(p.n);
  const double d = static_cast<double>(p.d);

  // Population moments of L_i and of the exact component gradients.
  double l_mean = 0.0, l_sq_mean = 0.0;
  Vec g_mean(p.d, 0.0);
  std::vector<Vec> grads(p.n, Vec(p.d));
  for (std::size_t i = 0; i < p.n; ++i) {
    const double l = q.smoothness[i];
    l_mean += l;
    l_sq_mean += l * l;
    for (std::size_t k = 0; k < p.d; ++k) grads[i][k] = l * (x[k] - q.centers[i][k]);
    axpy(1.0, grads[i], g_mean);
  }
  l_mean /= n;
  l_sq_mean /= n;
  scale(g_mean, 1.0 / n);
  double grad_var = 0.0;
  for (const Vec& g : grads) grad_var += dist_sq(g, g_mean);
  grad_var /= n;
  double l_var = 0.0;
  for (double l : q.smoothness) l_var += (l - l_mean) * (l - l_mean);
  l_var /= n;

  const double mm = static_cast<double>(m);
  double noise_term = 0.0;
  if (sharing == Sharing::shared)
    noise_term = (d / mm) * (l_mean * l_mean + inv_beff * l_var);
  else
    noise_term = (d / (mm * static_cast<double>(b))) * l_sq_mean;
  return noise_term + inv_beff * grad_var;
}

}  // namespace dsgd
