#include "dsgd/estimators.hpp"

#include <algorithm>
#include <string>

namespace dsgd {

namespace {

// Integrands of the quadratic and smoothing families are affine in the noise,
// so the m-sample average equals one evaluation at the mean draw.
bool affine_in_noise(ProblemKind kind) { return kind != ProblemKind::reparam; }

void mean_of_draws(std::span<const double> flat, std::size_t m, std::size_t nd,
                   std::span<double> mean) {
  std::fill(mean.begin(), mean.end(), 0.0);
  for (std::size_t r = 0; r < m; ++r) axpy(1.0, flat.subspan(r * nd, nd), mean);
  scale(mean, 1.0 / static_cast<double>(m));
}

void integrand_unchecked(const ProblemSpec& p, std::size_t i, std::span<const double> x,
                         std::span<const double> noise, std::span<double> out) {
  switch (p.kind) {
    case ProblemKind::quadratic: {
      const auto& q = p.quadratic();
      const double l = q.smoothness[i];
      const Vec& c = q.centers[i];
      for (std::size_t k = 0; k < p.d; ++k) out[k] = l * (x[k] - c[k] + noise[k]);
      return;
    }
    case ProblemKind::smoothing_erm: {
      const auto& s = p.smoothing_erm();
      const Vec& f = s.features[i];
      double pred = 0.0;
      for (std::size_t k = 0; k < p.d; ++k) pred += (x[k] + s.perturbation_scale * noise[k]) * f[k];
      const double r = pred - s.labels[i];
      for (std::size_t k = 0; k < p.d; ++k) out[k] = r * f[k];
      return;
    }
    case ProblemKind::reparam: {
      const auto& rp = p.reparam();
      const std::size_t dz = rp.latent_dim;
      const double l = rp.smoothness[i];
      const Vec& target = rp.targets[i];
      for (std::size_t r = 0; r < dz; ++r) {
        double z = x[r];
        for (std::size_t c = 0; c <= r; ++c) z += x[reparam_scale_index(dz, r, c)] * noise[c];
        const double g = l * (z - target[r]);
        out[r] = g;
        for (std::size_t c = 0; c <= r; ++c) out[reparam_scale_index(dz, r, c)] = g * noise[c];
      }
      return;
    }
  }
}

// Average integrand over m draws stored contiguously in `flat`.
void mc_average(const ProblemSpec& p, std::size_t i, std::span<const double> x,
                std::span<const double> flat, std::size_t m, std::span<const double> noise_mean,
                std::span<double> out, std::span<double> scratch) {
  if (affine_in_noise(p.kind)) {
    integrand_unchecked(p, i, x, noise_mean, out);
    return;
  }
  const std::size_t nd = p.noise_dim();
  std::fill(out.begin(), out.end(), 0.0);
  for (std::size_t r = 0; r < m; ++r) {
    integrand_unchecked(p, i, x, flat.subspan(r * nd, nd), scratch);
    axpy(1.0, scratch, out);
  }
  scale(out, 1.0 / static_cast<double>(m));
}

}  // namespace

NoiseBlock draw_noise_block(const ProblemSpec& p, std::size_t m, Sharing sharing,
                            std::uint64_t seed) {
  require(m >= 1, "noise block needs m >= 1");
  Rng rng(seed);
  NoiseBlock block;
  block.sharing = sharing;
  block.source_seed = seed;
  block.draws.assign(m, Vec(p.noise_dim()));
  for (Vec& draw : block.draws)
    for (double& v : draw) v = rng.normal();
  return block;
}

void component_gradient_integrand(const ProblemSpec& p, std::size_t i, std::span<const double> x,
                                  std::span<const double> noise, std::span<double> out) {
  require(i < p.n, "component index out of range");
  require(x.size() == p.d && out.size() == p.d, "integrand: parameter dimension mismatch");
  require(noise.size() == p.noise_dim(), "integrand: noise dimension mismatch");
  integrand_unchecked(p, i, x, noise, out);
}

Vec component_gradient_integrand(const ProblemSpec& p, std::size_t i, std::span<const double> x,
                                 std::span<const double> noise) {
  Vec out(p.d);
  component_gradient_integrand(p, i, x, noise, out);
  return out;
}

Vec monte_carlo_component(const ProblemSpec& p, std::size_t i, std::span<const double> x,
                          const NoiseBlock& block) {
  require(block.m() >= 1, "noise block is empty");
  Vec out(p.d, 0.0), tmp(p.d);
  for (const Vec& draw : block.draws) {
    component_gradient_integrand(p, i, x, draw, tmp);
    axpy(1.0, tmp, out);
  }
  scale(out, 1.0 / static_cast<double>(block.m()));
  return out;
}

void estimate_gradient(const ProblemSpec& p, std::span<const std::size_t> batch,
                       std::span<const double> x, std::size_t m, Sharing sharing, Rng& rng,
                       std::span<double> out, EstimatorWorkspace& ws, GradientMode mode,
                       std::vector<Vec>* per_component) {
  require(!batch.empty(), "gradient estimate needs a nonempty batch");
  require(m >= 1, "gradient estimate needs m >= 1");
  require(x.size() == p.d && out.size() == p.d, "gradient estimate: dimension mismatch");
  for (std::size_t i : batch)
    require(i < p.n, "batch index " + std::to_string(i) + " out of range");

  const std::size_t d = p.d;
  const std::size_t nd = p.noise_dim();
  ws.component.resize(d);
  std::fill(out.begin(), out.end(), 0.0);
  if (per_component) per_component->clear();

  std::uint64_t base = 0;
  if (mode == GradientMode::monte_carlo) {
    base = rng.next_u64();
    ws.noise.resize(m * nd);
    ws.noise_mean.resize(nd);
  }
  Vec scratch;
  if (mode == GradientMode::monte_carlo && !affine_in_noise(p.kind)) scratch.resize(d);

  for (std::size_t j = 0; j < batch.size(); ++j) {
    const std::size_t i = batch[j];
    if (mode == GradientMode::exact) {
      component_gradient(p, i, x, ws.component);
    } else {
      if (j == 0 || sharing == Sharing::independent) {
        Rng slot(derive_seed(base, {j}));
        for (double& v : ws.noise) v = slot.normal();
        if (affine_in_noise(p.kind)) mean_of_draws(ws.noise, m, nd, ws.noise_mean);
      }
      mc_average(p, i, x, ws.noise, m, ws.noise_mean, ws.component, scratch);
    }
    axpy(1.0, ws.component, out);
    if (per_component) per_component->push_back(ws.component);
  }
  scale(out, 1.0 / static_cast<double>(batch.size()));
}

GradientEstimate doubly_stochastic_gradient(const ProblemSpec& p,
                                            std::span<const std::size_t> batch,
                                            std::span<const double> x, std::size_t m,
                                            Sharing sharing, Rng& rng, bool keep_per_component,
                                            GradientMode mode) {
  GradientEstimate est;
  est.value.assign(p.d, 0.0);
  est.batch.assign(batch.begin(), batch.end());
  est.m = m;
  est.sharing = sharing;
  est.at_point.assign(x.begin(), x.end());
  EstimatorWorkspace ws;
  std::vector<Vec> parts;
  estimate_gradient(p, batch, x, m, sharing, rng, est.value, ws, mode,
                    keep_per_component ? &parts : nullptr);
  if (keep_per_component) est.per_component = std::move(parts);
  return est;
}

}  // namespace dsgd
