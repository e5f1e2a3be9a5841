#include "dsgd/variance_lab.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "dsgd/parallel.hpp"

namespace dsgd {

// ---------------------------------------------------------------------------
// Measurement

TraceVarianceAccumulator::TraceVarianceAccumulator(std::size_t dim, std::size_t expected_reps)
    : dim_(dim), mean_(dim, 0.0) {
  draws_.reserve(dim * expected_reps);
}

void TraceVarianceAccumulator::add(std::span<const double> x) {
  require(x.size() == dim_, "trace variance: draw dimension mismatch");
  ++count_;
  const double inv = 1.0 / static_cast<double>(count_);
  double inc = 0.0;
  for (std::size_t k = 0; k < dim_; ++k) {
    const double delta = x[k] - mean_[k];
    mean_[k] += delta * inv;
    inc += delta * (x[k] - mean_[k]);
  }
  m2_ += inc;
  draws_.insert(draws_.end(), x.begin(), x.end());
}

TraceVarianceEstimate TraceVarianceAccumulator::result() const {
  require(count_ >= 2, "trace variance needs reps >= 2");
  const auto reps = static_cast<double>(count_);
  // Per-draw squared deviations from the final mean; their spread gives the SE.
  double q_mean = 0.0, q_m2 = 0.0;
  for (std::size_t r = 0; r < count_; ++r) {
    const double q =
        dist_sq(std::span<const double>(draws_).subspan(r * dim_, dim_), mean_);
    const double delta = q - q_mean;
    q_mean += delta / static_cast<double>(r + 1);
    q_m2 += delta * (q - q_mean);
  }
  const double q_sd = std::sqrt(std::max(0.0, q_m2 / (reps - 1.0)));
  return {m2_ / (reps - 1.0), q_sd / std::sqrt(reps)};
}

TraceVarianceEstimate empirical_trace_variance(const VectorSampler& sampler, std::size_t dim,
                                               std::size_t reps, Rng& rng) {
  require(reps >= 2, "empirical_trace_variance needs reps >= 2");
  TraceVarianceAccumulator acc(dim, reps);
  Vec draw(dim);
  for (std::size_t r = 0; r < reps; ++r) {
    sampler(rng, draw);
    acc.add(draw);
  }
  return acc.result();
}

TraceVarianceEstimate measure_estimator_variance(const ProblemSpec& p, std::span<const double> x,
                                                 const EstimatorConfig& cfg, std::size_t reps,
                                                 std::uint64_t seed) {
  require(reps >= 2, "measure_estimator_variance needs reps >= 2");
  MinibatchSampler sampler(cfg.strategy, p.n);
  Rng rng(seed);
  EstimatorWorkspace ws;
  std::vector<std::size_t> batch;
  Vec g(p.d);
  TraceVarianceAccumulator acc(p.d, reps);
  for (std::size_t r = 0; r < reps; ++r) {
    sampler.draw(rng, batch);
    estimate_gradient(p, batch, x, cfg.m, cfg.sharing, rng, g, ws, cfg.mode);
    acc.add(g);
  }
  return acc.result();
}

// ---------------------------------------------------------------------------
// Closed-form variance bound

namespace {

double mean_of(std::span<const double> v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double max_of(std::span<const double> v) { return *std::max_element(v.begin(), v.end()); }

void check_rho(double rho) {
  require(rho >= 0.0 && rho <= 1.0, "rho must lie in [0, 1]");
}

void check_batch(SamplingKind strategy, std::size_t b, std::size_t n) {
  require(n >= 1, "population size n must be >= 1");
  require(b >= 1, "batch size b must be >= 1");
  if (strategy == SamplingKind::without_replacement)
    require(b <= n, "batch size b=" + std::to_string(b) + " exceeds n=" + std::to_string(n) +
                        " under sampling without replacement");
}

Vec mean_vector(std::span<const Vec> vs) {
  Vec mean(vs.front().size(), 0.0);
  for (const Vec& v : vs) axpy(1.0, v, mean);
  scale(mean, 1.0 / static_cast<double>(vs.size()));
  return mean;
}

}  // namespace

VarianceBound variance_bound_from_moments(std::span<const double> sigmas, double tau_sq,
                                          double rho, SamplingKind strategy, std::size_t b,
                                          std::size_t n) {
  check_rho(rho);
  check_batch(strategy, b, n);
  require(sigmas.size() == n, "variance bound: expected one sigma per component");
  require(tau_sq >= 0.0, "variance bound: tau^2 must be nonnegative");
  for (double s : sigmas) require(s >= 0.0 && std::isfinite(s), "sigmas must be finite and >= 0");

  const EffectiveSampleSize beff = effective_sample_size({strategy, b}, n);
  const double inv = beff.inverse();
  double sq_mean = 0.0;
  for (double s : sigmas) sq_mean += s * s;
  sq_mean /= static_cast<double>(n);
  const double sd_mean = mean_of(sigmas);

  VarianceBound out;
  out.rho = rho;
  out.b_eff = beff;
  out.v_com = (rho * inv + (1.0 - rho) / static_cast<double>(b)) * sq_mean;
  out.v_cor = rho * (1.0 - inv) * sd_mean * sd_mean;
  out.v_sub = inv * tau_sq;
  return out;
}

VarianceBound doubly_stochastic_variance_bound(std::span<const double> sigmas,
                                               std::span<const Vec> means, double rho,
                                               SamplingKind strategy, std::size_t b) {
  require(!means.empty(), "variance bound needs at least one component");
  const Vec mean = mean_vector(means);
  const double tau_sq = subsampling_unit_variance(means, mean);
  return variance_bound_from_moments(sigmas, tau_sq, rho, strategy, b, means.size());
}

double rho_for(Sharing sharing) { return sharing == Sharing::shared ? 1.0 : 0.0; }

ComponentMoments component_moments(const ProblemSpec& p, std::span<const double> x,
                                   std::size_t reps, std::uint64_t seed) {
  require(x.size() == p.d, "component_moments: dimension mismatch");
  ComponentMoments out;
  out.sigma_sq.assign(p.n, 0.0);
  out.sigma_sq_se.assign(p.n, 0.0);
  out.means.assign(p.n, Vec(p.d));
  for (std::size_t i = 0; i < p.n; ++i) component_gradient(p, i, x, out.means[i]);

  switch (p.kind) {
    case ProblemKind::quadratic: {
      // Noise part L_i eta with eta ~ N(0, I_d).
      const auto& q = p.quadratic();
      for (std::size_t i = 0; i < p.n; ++i)
        out.sigma_sq[i] = static_cast<double>(p.d) * q.smoothness[i] * q.smoothness[i];
      break;
    }
    case ProblemKind::smoothing_erm: {
      // Noise part scale (eps . x_i) x_i with eps ~ N(0, I_d).
      const auto& s = p.smoothing_erm();
      const double sc2 = s.perturbation_scale * s.perturbation_scale;
      for (std::size_t i = 0; i < p.n; ++i) {
        const double f2 = norm_sq(s.features[i]);
        out.sigma_sq[i] = sc2 * f2 * f2;
      }
      break;
    }
    case ProblemKind::reparam: {
      require(reps >= 2, "component_moments: Monte Carlo needs reps >= 2");
      Vec noise(p.noise_dim()), g(p.d);
      for (std::size_t i = 0; i < p.n; ++i) {
        Rng rng = Rng::stream(seed, {i});
        TraceVarianceAccumulator acc(p.d, reps);
        for (std::size_t r = 0; r < reps; ++r) {
          for (double& v : noise) v = rng.normal();
          component_gradient_integrand(p, i, x, noise, g);
          acc.add(g);
        }
        const TraceVarianceEstimate est = acc.result();
        out.sigma_sq[i] = est.estimate;
        out.sigma_sq_se[i] = est.std_error;
      }
      break;
    }
  }
  return out;
}

VarianceReport variance_report(const ProblemSpec& p, std::span<const double> x,
                               const EstimatorConfig& cfg, std::size_t reps, std::uint64_t seed) {
  const ComponentMoments moments = component_moments(p, x, reps, derive_seed(seed, {1}));
  Vec sigmas(p.n, 0.0);
  if (cfg.mode == GradientMode::monte_carlo)
    for (std::size_t i = 0; i < p.n; ++i)
      sigmas[i] = std::sqrt(moments.sigma_sq[i] / static_cast<double>(cfg.m));
  const double rho = rho_for(cfg.sharing);
  const VarianceBound bound =
      doubly_stochastic_variance_bound(sigmas, moments.means, rho, cfg.strategy.kind, cfg.strategy.b);
  const TraceVarianceEstimate emp = measure_estimator_variance(p, x, cfg, reps, derive_seed(seed, {0}));

  VarianceReport rep;
  rep.empirical = emp.estimate;
  rep.std_error = emp.std_error;
  rep.v_com = bound.v_com;
  rep.v_cor = bound.v_cor;
  rep.v_sub = bound.v_sub;
  rep.bound_total = bound.total();
  rep.rho_used = rho;
  rep.b_eff = bound.b_eff;
  rep.b = cfg.strategy.b;
  rep.m = cfg.m;
  rep.sharing = cfg.sharing;
  rep.strategy = cfg.strategy.kind;
  return rep;
}

// ---------------------------------------------------------------------------
// Corollary cases

std::string_view to_string(CorollaryCase c) {
  switch (c) {
    case CorollaryCase::i: return "i";
    case CorollaryCase::ii: return "ii";
    case CorollaryCase::iii: return "iii";
    case CorollaryCase::iv: return "iv";
    case CorollaryCase::v: return "v";
  }
  return "?";
}

double corollary_variance(CorollaryCase c, std::span<const double> sigmas, double tau_sq,
                          std::size_t n, std::size_t b, std::size_t m) {
  require(n >= 1 && b >= 1 && b <= n, "corollary: needs 1 <= b <= n");
  require(m >= 1, "corollary: needs m >= 1");
  require(sigmas.size() == n, "corollary: expected one sigma per component");
  require(tau_sq >= 0.0, "corollary: tau^2 must be nonnegative");
  for (double s : sigmas) require(s >= 0.0 && std::isfinite(s), "corollary: sigmas must be >= 0");

  const double nn = static_cast<double>(n), bb = static_cast<double>(b),
               mm = static_cast<double>(m);
  double sq_mean = 0.0;
  for (double s : sigmas) sq_mean += s * s;
  sq_mean /= nn;
  const double sd_mean = mean_of(sigmas);
  // (n - b)/((n - 1) b); n = 1 forces b = n where the coefficient is 0.
  const double sub = n == 1 ? 0.0 : (nn - bb) / ((nn - 1.0) * bb);

  switch (c) {
    case CorollaryCase::i: {
      const double cor = n == 1 ? 1.0 : nn * (bb - 1.0) / ((nn - 1.0) * bb);
      return sub / mm * sq_mean + cor / mm * sd_mean * sd_mean + sub * tau_sq;
    }
    case CorollaryCase::ii:
      require(b == 1, "corollary case (ii) requires b = 1");
      return sq_mean / mm + tau_sq;
    case CorollaryCase::iii:
      require(b == n, "corollary case (iii) requires b = n");
      return sd_mean * sd_mean / mm;
    case CorollaryCase::iv:
      for (double s : sigmas) require(s == 0.0, "corollary case (iv) requires every sigma_i = 0");
      return sub * tau_sq;
    case CorollaryCase::v:
      return sq_mean / (mm * bb) + sub * tau_sq;
  }
  return 0.0;
}

// ---------------------------------------------------------------------------
// Expected variance of a random sum

LemmaCheck expected_variance_lemma_check(std::span<const BatchOutcome> outcomes, double rho) {
  check_rho(rho);
  require(!outcomes.empty(), "lemma check needs at least one outcome");
  double total_prob = 0.0;
  std::size_t width = 0;
  for (const BatchOutcome& o : outcomes) {
    require(o.probability >= 0.0, "outcome probabilities must be nonnegative");
    require(!o.loadings.empty(), "every outcome needs a nonempty batch");
    total_prob += o.probability;
    for (const Vec& a : o.loadings) {
      if (width == 0) width = a.size();
      require(a.size() == width && width > 0, "loading matrices must share one shape");
    }
  }
  require(std::abs(total_prob - 1.0) <= 1e-12, "outcome probabilities must sum to 1");

  // Per-outcome V_B, S_B and tr V[sum x_i | B] = ||sum A_i||_F^2.
  double lhs = 0.0, e_s = 0.0, e_v = 0.0;
  std::vector<double> s_vals(outcomes.size());
  Vec sum(width);
  for (std::size_t o = 0; o < outcomes.size(); ++o) {
    std::fill(sum.begin(), sum.end(), 0.0);
    double v = 0.0, s = 0.0;
    for (const Vec& a : outcomes[o].loadings) {
      const double tv = norm_sq(a);
      v += tv;
      s += std::sqrt(tv);
      axpy(1.0, a, sum);
    }
    const double pr = outcomes[o].probability;
    lhs += pr * norm_sq(sum);
    e_s += pr * s;
    e_v += pr * v;
    s_vals[o] = s;
  }
  double var_s = 0.0;
  for (std::size_t o = 0; o < outcomes.size(); ++o)
    var_s += outcomes[o].probability * (s_vals[o] - e_s) * (s_vals[o] - e_s);

  LemmaCheck out;
  out.lhs = lhs;
  out.rhs = rho * var_s + rho * e_s * e_s + (1.0 - rho) * e_v;
  const double tol = 1e-12 * (1.0 + std::abs(out.rhs));
  out.pass = out.lhs <= out.rhs + tol;
  out.equality = std::abs(out.lhs - out.rhs) <= tol;
  return out;
}

std::vector<BatchOutcome> enumerate_batch_outcomes(std::span<const Vec> component_loadings,
                                                   std::size_t b, SamplingKind kind) {
  const std::size_t k = component_loadings.size();
  check_batch(kind, b, k);
  std::vector<std::vector<std::size_t>> batches;
  std::vector<std::size_t> idx(b, 0);
  if (kind == SamplingKind::without_replacement) {
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    for (;;) {
      batches.push_back(idx);
      std::size_t pos = b;
      while (pos > 0 && idx[pos - 1] == k - b + pos - 1) --pos;
      if (pos == 0) break;
      ++idx[pos - 1];
      for (std::size_t j = pos; j < b; ++j) idx[j] = idx[j - 1] + 1;
    }
  } else {
    for (;;) {
      batches.push_back(idx);
      std::size_t pos = b;
      while (pos > 0 && idx[pos - 1] == k - 1) idx[--pos] = 0;
      if (pos == 0) break;
      ++idx[pos - 1];
    }
  }
  std::vector<BatchOutcome> out;
  out.reserve(batches.size());
  const double prob = 1.0 / static_cast<double>(batches.size());
  for (const auto& batch : batches) {
    BatchOutcome o;
    o.probability = prob;
    for (std::size_t i : batch) o.loadings.push_back(component_loadings[i]);
    out.push_back(std::move(o));
  }
  return out;
}

// ---------------------------------------------------------------------------
// BV and ER constants

namespace {

Vec component_smoothness(const ProblemSpec& p) {
  switch (p.kind) {
    case ProblemKind::quadratic: return p.quadratic().smoothness;
    case ProblemKind::reparam: return p.reparam().smoothness;
    case ProblemKind::smoothing_erm: {
      Vec out;
      for (const Vec& f : p.smoothing_erm().features) out.push_back(norm_sq(f));
      return out;
    }
  }
  return {};
}

// Extreme eigenvalues of the (constant) Hessian of F.
std::pair<double, double> hessian_extremes(const ProblemSpec& p) {
  if (p.kind != ProblemKind::smoothing_erm) {
    const double l = mean_of(component_smoothness(p));
    return {l, l};
  }
  const auto& s = p.smoothing_erm();
  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(p.d),
                                            static_cast<Eigen::Index>(p.d));
  for (const Vec& f : s.features) {
    const Eigen::Map<const Eigen::VectorXd> v(f.data(), static_cast<Eigen::Index>(f.size()));
    h += v * v.transpose();
  }
  h /= static_cast<double>(p.n);
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(h, Eigen::EigenvaluesOnly);
  return {solver.eigenvalues().minCoeff(), solver.eigenvalues().maxCoeff()};
}

ConstantsReport bv_from_moments(const ProblemSpec& p, const ComponentMoments& moments,
                                std::size_t m) {
  ConstantsReport c;
  c.m = m;
  c.sigma_i_sq = moments.sigma_sq;
  c.sigma_i_sq_se = moments.sigma_sq_se;
  for (double& v : c.sigma_i_sq) v /= static_cast<double>(m);
  for (double& v : c.sigma_i_sq_se) v /= static_cast<double>(m);
  c.tau_sq = subsampling_unit_variance(moments.means, mean_vector(moments.means));
  c.L_i = component_smoothness(p);
  c.L_max = max_of(c.L_i);
  return c;
}

}  // namespace

ConstantsReport bv_constants(const ProblemSpec& p, std::size_t m, std::size_t reps, Rng& rng) {
  if (p.kind != ProblemKind::quadratic)
    throw UnsupportedError("bv_constants: no closed-form optimum for kind " +
                           std::string(to_string(p.kind)) + "; use bv_constants_at");
  require(m >= 1, "bv_constants: m must be >= 1");
  const Vec opt = global_optimum(p);
  ConstantsReport c = bv_from_moments(p, component_moments(p, opt, reps, rng.next_u64()), m);
  // At x* the full gradient vanishes, so tau^2 is the uncentered mean.
  double tau = 0.0;
  Vec g(p.d);
  for (std::size_t i = 0; i < p.n; ++i) {
    component_gradient(p, i, opt, g);
    tau += norm_sq(g);
  }
  c.tau_sq = tau / static_cast<double>(p.n);
  return c;
}

ConstantsReport bv_constants_at(const ProblemSpec& p, std::span<const double> point,
                                std::size_t m, std::size_t reps, Rng& rng) {
  require(m >= 1, "bv_constants_at: m must be >= 1");
  return bv_from_moments(p, component_moments(p, point, reps, rng.next_u64()), m);
}

ConstantsReport er_constants(const ProblemSpec& p, double rho, SamplingKind strategy,
                             std::size_t b, double mu) {
  check_rho(rho);
  check_batch(strategy, b, p.n);
  require(mu > 0.0 && std::isfinite(mu), "er_constants: mu must be positive");
  ConstantsReport c;
  c.L_i = component_smoothness(p);
  c.L_max = max_of(c.L_i);
  c.script_L_i.assign(p.n, 0.0);
  if (p.kind == ProblemKind::reparam) {
    const auto& rp = p.reparam();
    const double factor = static_cast<double>(rp.latent_dim) + rp.base_kurtosis;
    for (std::size_t i = 0; i < p.n; ++i)
      c.script_L_i[i] = rp.smoothness[i] * rp.smoothness[i] / mu * factor;
  }
  c.script_L_max = max_of(c.script_L_i);
  const double inv = effective_sample_size({strategy, b}, p.n).inverse();
  const double mixed = rho * inv + (1.0 - rho) / static_cast<double>(b);
  const double corr = rho * (1.0 - inv);
  double sqrt_mean = 0.0;
  for (double l : c.script_L_i) sqrt_mean += std::sqrt(l);
  sqrt_mean /= static_cast<double>(p.n);
  const double mean_l = mean_of(c.script_L_i);

  c.script_L_sub_unit = c.L_max;
  c.script_L_sub = c.L_max * inv;
  c.script_L_A = mixed * c.script_L_max + corr * mean_l + c.script_L_sub;
  c.script_L_B = mixed * mean_l + corr * sqrt_mean * sqrt_mean + c.script_L_sub;
  c.mu = mu;
  c.kappa = c.L_max / mu;
  return c;
}

ConstantsReport merge_constants(const ConstantsReport& bv, const ConstantsReport& er, double mu) {
  require(mu > 0.0, "merge_constants: mu must be positive");
  ConstantsReport c = er;
  c.sigma_i_sq = bv.sigma_i_sq;
  c.sigma_i_sq_se = bv.sigma_i_sq_se;
  c.tau_sq = bv.tau_sq;
  c.m = bv.m;
  if (c.L_i.empty()) {
    c.L_i = bv.L_i;
    c.L_max = bv.L_max;
  }
  c.mu = mu;
  c.kappa = c.L_max / mu;
  c.kappa_sigma = c.sigma_i_sq.empty() ? 0.0 : std::sqrt(max_of(c.sigma_i_sq)) / mu;
  c.kappa_tau = std::sqrt(c.tau_sq) / mu;
  return c;
}

double bv_sigma_sq(const ConstantsReport& c, double rho, SamplingKind strategy, std::size_t b,
                   std::size_t n) {
  Vec sigmas(c.sigma_i_sq.size());
  for (std::size_t i = 0; i < sigmas.size(); ++i) sigmas[i] = std::sqrt(c.sigma_i_sq[i]);
  return variance_bound_from_moments(sigmas, c.tau_sq, rho, strategy, b, n).total();
}

double objective_smoothness(const ProblemSpec& p) { return hessian_extremes(p).second; }

double objective_strong_convexity(const ProblemSpec& p) { return hessian_extremes(p).first; }

ReshufflingConstants reshuffling_constants(const ConstantsReport& c, double mu, std::size_t n,
                                           std::size_t b) {
  require(mu > 0.0, "reshuffling_constants: mu must be positive");
  check_batch(SamplingKind::without_replacement, b, n);
  require(c.sigma_i_sq.size() == n, "reshuffling_constants: missing sigma_i^2");
  const double nn = static_cast<double>(n), bb = static_cast<double>(b);
  double sd_mean = 0.0;
  for (double v : c.sigma_i_sq) sd_mean += std::sqrt(v);
  sd_mean /= nn;
  ReshufflingConstants r;
  r.c_sub = 0.25 * (c.L_max / mu) * (nn / (bb * bb)) * c.tau_sq;
  r.c_com = 4.0 / (mu * bb) * mean_of(c.sigma_i_sq) + 4.0 / mu * sd_mean * sd_mean;
  r.gamma_max = 1.0 / (c.script_L_max + c.L_max);
  return r;
}

// ---------------------------------------------------------------------------
// Audits

std::vector<AuditRow> gradient_norm_bound_audit(const ProblemSpec& p, std::span<const Vec> points,
                                                const AuditConstants& constants,
                                                const EstimatorConfig& cfg, std::size_t reps,
                                                Rng& rng) {
  require(reps >= 2, "gradient_norm_bound_audit needs reps >= 2");
  const Vec opt = global_optimum(p);
  const double f_opt = objective_and_gradient(p, opt).first;
  MinibatchSampler sampler(cfg.strategy, p.n);
  EstimatorWorkspace ws;
  std::vector<std::size_t> batch;
  Vec g(p.d);
  std::vector<AuditRow> rows;
  for (const Vec& x : points) {
    require(x.size() == p.d, "audit point dimension mismatch");
    Rng local(rng.next_u64());
    double mean = 0.0, m2 = 0.0;
    for (std::size_t r = 0; r < reps; ++r) {
      sampler.draw(local, batch);
      estimate_gradient(p, batch, x, cfg.m, cfg.sharing, local, g, ws, cfg.mode);
      const double q = norm_sq(g);
      const double delta = q - mean;
      mean += delta / static_cast<double>(r + 1);
      m2 += delta * (q - mean);
    }
    AuditRow row;
    row.suboptimality = objective_and_gradient(p, x).first - f_opt;
    row.empirical = mean;
    row.std_error = std::sqrt(m2 / static_cast<double>(reps - 1) / static_cast<double>(reps));
    row.rhs = 4.0 * (constants.script_L + constants.L) * row.suboptimality +
              2.0 * constants.sigma_sq;
    row.pass = row.empirical <= row.rhs + 3.0 * row.std_error;
    rows.push_back(row);
  }
  return rows;
}

std::pair<double, double> average_bregman_check(const ProblemSpec& p, std::span<const double> x,
                                                std::span<const double> y) {
  require(x.size() == p.d && y.size() == p.d, "average_bregman_check: dimension mismatch");
  Vec diff(p.d), gi(p.d);
  for (std::size_t k = 0; k < p.d; ++k) diff[k] = x[k] - y[k];
  double lhs = 0.0;
  for (std::size_t i = 0; i < p.n; ++i) {
    component_gradient(p, i, y, gi);
    lhs += component_objective(p, i, x) - component_objective(p, i, y) - dot(gi, diff);
  }
  lhs /= static_cast<double>(p.n);
  const auto [fx, gx] = objective_and_gradient(p, x);
  const auto [fy, gy] = objective_and_gradient(p, y);
  (void)gx;
  return {lhs, fx - fy - dot(gy, diff)};
}

CorrelationEstimate correlation_estimate(const ComponentSampler& sampler, std::size_t k,
                                         std::size_t dim, std::size_t reps, Rng& rng) {
  require(k >= 2, "correlation_estimate needs at least 2 components");
  require(reps >= 2, "correlation_estimate needs reps >= 2");
  std::vector<Vec> draw(k, Vec(dim));
  std::vector<Vec> mean(k, Vec(dim, 0.0));
  std::vector<Vec> delta(k, Vec(dim));
  std::vector<double> co(k * k, 0.0);
  for (std::size_t r = 0; r < reps; ++r) {
    sampler(rng, draw);
    require(draw.size() == k, "component sampler returned the wrong number of vectors");
    const double inv = 1.0 / static_cast<double>(r + 1);
    for (std::size_t i = 0; i < k; ++i) {
      require(draw[i].size() == dim, "component sampler returned the wrong dimension");
      for (std::size_t t = 0; t < dim; ++t) {
        delta[i][t] = draw[i][t] - mean[i][t];
        mean[i][t] += delta[i][t] * inv;
      }
    }
    for (std::size_t i = 0; i < k; ++i)
      for (std::size_t j = 0; j < k; ++j) {
        double acc = 0.0;
        for (std::size_t t = 0; t < dim; ++t) acc += delta[i][t] * (draw[j][t] - mean[j][t]);
        co[i * k + j] += acc;
      }
  }

  CorrelationEstimate out;
  std::vector<bool> ok(k, true);
  for (std::size_t i = 0; i < k; ++i) {
    const double tv = co[i * k + i] / static_cast<double>(reps - 1);
    if (!(tv > 1e-14 * (1.0 + norm_sq(mean[i])))) {
      ok[i] = false;
      out.degenerate.push_back(i);
    }
  }
  bool any = false;
  double best = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = i + 1; j < k; ++j) {
      if (!ok[i] || !ok[j]) continue;
      const double c = co[i * k + j] / std::sqrt(co[i * k + i] * co[j * k + j]);
      if (!any || c > best) {
        best = c;
        out.pair_i = i;
        out.pair_j = j;
        any = true;
      }
    }
  out.raw_max = any ? best : 0.0;
  out.rho_hat = std::clamp(out.raw_max, 0.0, 1.0);
  return out;
}

// ---------------------------------------------------------------------------
// Budget sweep

std::vector<SweepRow> budget_sweep(const ProblemSpec& p, std::span<const std::size_t> budgets,
                                   std::span<const double> heterogeneity, Sharing sharing,
                                   SamplingKind strategy, std::size_t reps, Rng& rng,
                                   std::size_t threads) {
  if (p.kind != ProblemKind::quadratic)
    throw UnsupportedError("budget_sweep: quadratic family only");
  require(reps == 0 || reps >= 2, "budget_sweep: reps must be 0 or >= 2");
  for (std::size_t budget : budgets) require(budget >= 1, "budgets must be >= 1");
  for (double s : heterogeneity) require(s > 0.0, "heterogeneity values must be positive");

  std::vector<ProblemSpec> instances;
  for (double s : heterogeneity) instances.push_back(make_quadratic_problem(p.n, p.d, s, p.seed));

  struct Cell {
    std::size_t s_idx, budget_idx, b;
  };
  std::vector<Cell> cells;
  for (std::size_t si = 0; si < heterogeneity.size(); ++si)
    for (std::size_t bi = 0; bi < budgets.size(); ++bi)
      for (std::size_t b = 1; b <= budgets[bi] && b <= p.n; b *= 2)
        if (budgets[bi] % b == 0) cells.push_back({si, bi, b});

  const std::uint64_t base = rng.next_u64();
  std::vector<SweepRow> rows(cells.size());
  parallel_for(cells.size(), threads, [&](std::size_t c) {
    const Cell& cell = cells[c];
    const ProblemSpec& inst = instances[cell.s_idx];
    SweepRow& row = rows[c];
    row.s = heterogeneity[cell.s_idx];
    row.budget = budgets[cell.budget_idx];
    row.b = cell.b;
    row.m = row.budget / cell.b;
    row.sharing = sharing;
    row.strategy = strategy;
    row.empirical = std::numeric_limits<double>::quiet_NaN();
    row.std_error = std::numeric_limits<double>::quiet_NaN();
    try {
      const Vec opt = global_optimum(inst);
      row.oracle = analytic_variance_oracle(inst, opt, row.b, row.m, sharing, strategy);
      const ComponentMoments moments = component_moments(inst, opt, 0, 0);
      Vec sigmas(inst.n);
      for (std::size_t i = 0; i < inst.n; ++i)
        sigmas[i] = std::sqrt(moments.sigma_sq[i] / static_cast<double>(row.m));
      const VarianceBound bound = doubly_stochastic_variance_bound(
          sigmas, moments.means, rho_for(sharing), strategy, row.b);
      row.v_com = bound.v_com;
      row.v_cor = bound.v_cor;
      row.v_sub = bound.v_sub;
      row.bound_total = bound.total();
      if (reps > 0) {
        const EstimatorConfig cfg{{strategy, row.b}, row.m, sharing, GradientMode::monte_carlo};
        const TraceVarianceEstimate emp = measure_estimator_variance(
            inst, opt, cfg, reps, derive_seed(base, {cell.s_idx, cell.budget_idx, cell.b}));
        row.empirical = emp.estimate;
        row.std_error = emp.std_error;
      }
      const bool finite = std::isfinite(row.oracle) && std::isfinite(row.bound_total) &&
                          (reps == 0 || (std::isfinite(row.empirical) && std::isfinite(row.std_error)));
      if (!finite) row.status = "nonfinite";
    } catch (const std::exception& e) {
      row.status = std::string("error: ") + e.what();
    }
  });
  return rows;
}

}  // namespace dsgd
