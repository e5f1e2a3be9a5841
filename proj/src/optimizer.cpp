#include "dsgd/optimizer.hpp"

#include <cmath>
#include <limits>
#include <string>

namespace dsgd {

Domain Domain::ball(Vec center, double radius) {
  require(radius > 0.0 && std::isfinite(radius), "ball radius must be positive");
  require(all_finite(center), "ball center must be finite");
  Domain dom;
  dom.kind = Kind::ball;
  dom.center = std::move(center);
  dom.radius = radius;
  return dom;
}

void project_inplace(std::span<double> x, const Domain& domain) {
  if (domain.kind == Domain::Kind::unconstrained) return;
  require(domain.center.size() == x.size(), "projection: ball center dimension mismatch");
  const double dist = std::sqrt(dist_sq(x, domain.center));
  if (dist <= domain.radius) return;
  const double shrink = domain.radius / dist;
  for (std::size_t k = 0; k < x.size(); ++k)
    x[k] = domain.center[k] + shrink * (x[k] - domain.center[k]);
}

Vec project(std::span<const double> x, const Domain& domain) {
  Vec out(x.begin(), x.end());
  project_inplace(out, domain);
  return out;
}

namespace {

void validate(const ProblemSpec& p, const RunConfig& cfg) {
  require(cfg.stepsize > 0.0 && std::isfinite(cfg.stepsize), "stepsize must be positive");
  require(cfg.record_every >= 1, "record_every must be >= 1");
  require(cfg.m >= 1, "m must be >= 1");
  require(cfg.strategy.b >= 1, "batch size b must be >= 1");
  if (cfg.x0) require(cfg.x0->size() == p.d, "x0 dimension mismatch");
  if (cfg.domain.kind == Domain::Kind::ball)
    require(cfg.domain.center.size() == p.d, "ball center dimension mismatch");
}

class Recorder {
 public:
  Recorder(const ProblemSpec& p) : p_(p) {
    if (p.kind == ProblemKind::quadratic) opt_ = global_optimum(p);
  }

  void record(std::vector<TraceRecord>& trace, std::size_t epoch, std::size_t step,
              std::span<const double> x) const {
    TraceRecord rec;
    rec.epoch = epoch;
    rec.step = step;
    rec.iterate.assign(x.begin(), x.end());
    if (opt_)
      rec.dist_sq_to_opt = dist_sq(x, *opt_);
    else
      rec.grad_norm_sq = norm_sq(objective_and_gradient(p_, x).second);
    trace.push_back(std::move(rec));
  }

 private:
  const ProblemSpec& p_;
  std::optional<Vec> opt_;
};

}  // namespace

std::vector<TraceRecord> sgd_run(const ProblemSpec& p, const RunConfig& cfg) {
  validate(p, cfg);
  MinibatchSampler sampler(cfg.strategy, p.n);
  const Recorder recorder(p);
  Vec x = cfg.x0 ? *cfg.x0 : default_initial_point(p);
  project_inplace(x, cfg.domain);
  Vec g(p.d);
  EstimatorWorkspace ws;
  std::vector<std::size_t> batch;
  std::vector<TraceRecord> trace;
  recorder.record(trace, 0, 0, x);

  const std::size_t T = cfg.steps_or_epochs;
  for (std::size_t t = 0; t < T; ++t) {
    Rng batch_rng = Rng::stream(cfg.master_seed, {stream_batch, t});
    sampler.draw(batch_rng, batch);
    Rng noise_rng = Rng::stream(cfg.master_seed, {stream_noise, t});
    estimate_gradient(p, batch, x, cfg.m, cfg.sharing, noise_rng, g, ws, cfg.mode);
    axpy(-cfg.stepsize, g, x);
    project_inplace(x, cfg.domain);
    const std::size_t done = t + 1;
    if (done % cfg.record_every == 0 || done == T) recorder.record(trace, 0, done, x);
  }
  return trace;
}

std::vector<TraceRecord> sgd_rr_run(const ProblemSpec& p, const RunConfig& cfg) {
  validate(p, cfg);
  const std::size_t b = cfg.strategy.b;
  require(b <= p.n && p.n % b == 0, "batch size b=" + std::to_string(b) + " does not divide n=" +
                                        std::to_string(p.n) + "; reshuffling requires b | n");
  const std::size_t steps_per_epoch = p.n / b;
  const Recorder recorder(p);
  Vec x = cfg.x0 ? *cfg.x0 : default_initial_point(p);
  project_inplace(x, cfg.domain);
  Vec g(p.d);
  EstimatorWorkspace ws;
  std::vector<TraceRecord> trace;
  recorder.record(trace, 0, 0, x);

  const std::size_t K = cfg.steps_or_epochs;
  for (std::size_t k = 0; k < K; ++k) {
    Rng part_rng = Rng::stream(cfg.master_seed, {stream_partition, k});
    const EpochPartition partition = reshuffle_partition(p.n, b, part_rng);
    for (std::size_t i = 0; i < steps_per_epoch; ++i) {
      const std::size_t t = k * steps_per_epoch + i;
      Rng noise_rng = Rng::stream(cfg.master_seed, {stream_noise, t});
      estimate_gradient(p, partition.batches[i], x, cfg.m, cfg.sharing, noise_rng, g, ws,
                        cfg.mode);
      axpy(-cfg.stepsize, g, x);
      project_inplace(x, cfg.domain);
      const std::size_t done = t + 1;
      if (done % cfg.record_every == 0 || done % steps_per_epoch == 0)
        recorder.record(trace, done / steps_per_epoch, done, x);
    }
  }
  return trace;
}

namespace {

std::uint64_t iterations_needed(double gamma, double mu, double eps, double r0) {
  const double ratio = 2.0 * r0 / eps;
  if (ratio <= 1.0) return 0;
  const double t = std::ceil(std::log(ratio) / (gamma * mu));
  require(t < static_cast<double>(std::numeric_limits<std::uint64_t>::max()),
          "T_min overflows a 64-bit counter");
  return static_cast<std::uint64_t>(t);
}

void check_recurrence_inputs(double C, double mu, double eps, double r0) {
  require(C > 0.0 && mu > 0.0 && eps > 0.0 && r0 > 0.0,
          "stepsize selection needs C, mu, eps, r0 > 0");
}

}  // namespace

StepsizeChoice stepsize_for_accuracy(double B, double C, double mu, double eps, double r0) {
  check_recurrence_inputs(C, mu, eps, r0);
  require(B >= 0.0, "stepsize selection needs B >= 0");
  double gamma = 1.0 / C;
  if (B > 0.0) gamma = std::min(eps / (2.0 * B), gamma);
  return {gamma, iterations_needed(gamma, mu, eps, r0)};
}

StepsizeChoice stepsize_for_accuracy_quadratic_floor(double A, double B, double C, double mu,
                                                     double eps, double r0) {
  check_recurrence_inputs(C, mu, eps, r0);
  require(A >= 0.0 && B >= 0.0, "stepsize selection needs A, B >= 0");
  double gamma = 1.0 / C;
  if (A > 0.0 || B > 0.0) {
    // Positive root of A g^2 + B g = eps/2, rationalized so that A -> 0
    // recovers eps/(2B) without cancellation.
    const double root = eps / (B + std::sqrt(B * B + 2.0 * A * eps));
    gamma = std::min(root, gamma);
  }
  return {gamma, iterations_needed(gamma, mu, eps, r0)};
}

std::vector<Vec> lyapunov_reference_points(const ProblemSpec& p, const EpochPartition& partition,
                                           double gamma, const Domain& domain) {
  if (p.kind != ProblemKind::quadratic)
    throw UnsupportedError("lyapunov_reference_points: quadratic family only");
  require(gamma > 0.0, "stepsize must be positive");
  const Vec opt = global_optimum(p);
  std::vector<Vec> points;
  points.reserve(partition.batches.size() + 1);
  points.push_back(project(opt, domain));
  Vec drift(p.d, 0.0), gi(p.d);
  for (const auto& batch : partition.batches) {
    require(!batch.empty(), "partition contains an empty batch");
    const double w = 1.0 / static_cast<double>(batch.size());
    for (std::size_t i : batch) {
      require(i < p.n, "partition index out of range");
      component_gradient(p, i, opt, gi);
      axpy(w, gi, drift);
    }
    Vec point = opt;
    axpy(-gamma, drift, point);
    project_inplace(point, domain);
    points.push_back(std::move(point));
  }
  return points;
}

}  // namespace dsgd
