#include <doctest.h>

#include <array>
#include <cmath>
#include <functional>
#include <vector>

#include "dsgd/estimators.hpp"
#include "dsgd/sampling.hpp"

using namespace dsgd;

namespace {

// 5-point Gauss-Hermite rule for N(0, 1); exact for polynomials of degree <= 9.
constexpr std::array<double, 5> gh_nodes{-2.8569700138728056, -1.3556261799742659, 0.0,
                                         1.3556261799742659, 2.8569700138728056};
constexpr std::array<double, 5> gh_weights{0.011257411327720691, 0.22207592200561265,
                                           0.53333333333333333, 0.22207592200561265,
                                           0.011257411327720691};

// E h(u) for u ~ N(0, I_2) by the tensor rule.
double gauss_expectation_2d(const std::function<double(const Vec&)>& h) {
  double acc = 0;
  for (std::size_t a = 0; a < 5; ++a)
    for (std::size_t b = 0; b < 5; ++b)
      acc += gh_weights[a] * gh_weights[b] * h(Vec{gh_nodes[a], gh_nodes[b]});
  return acc;
}

std::vector<ProblemSpec> one_of_each() {
  return {make_quadratic_problem(8, 3, 1.0, 1), make_smoothing_erm_problem(8, 3, 0.5, 2),
          make_reparam_problem(8, 2, 1.0, 3)};
}

Vec perturbed_start(const ProblemSpec& p, Rng& rng) {
  Vec x = default_initial_point(p);
  for (double& v : x) v += 0.3 * rng.normal();
  return x;
}

}  // namespace

TEST_CASE("integrand expectation equals the exact gradient (quadrature)") {
  const auto smooth = make_smoothing_erm_problem(5, 2, 0.8, 4);
  const auto rep = make_reparam_problem(5, 2, 1.0, 5);
  Rng rng(6);
  for (const ProblemSpec* p : {&smooth, &rep}) {
    const Vec x = perturbed_start(*p, rng);
    for (std::size_t i = 0; i < p->n; ++i) {
      Vec exact(p->d);
      component_gradient(*p, i, x, exact);
      for (std::size_t k = 0; k < p->d; ++k) {
        const double mean = gauss_expectation_2d(
            [&](const Vec& u) { return component_gradient_integrand(*p, i, x, u)[k]; });
        CHECK(mean == doctest::Approx(exact[k]).epsilon(1e-12).scale(1.0));
      }
    }
  }
}

TEST_CASE("reparam coupled-draw quadratic expected smoothness holds (quadrature)") {
  const auto p = make_reparam_problem(4, 2, 1.0, 7);
  const auto& rp = p.reparam();
  Rng rng(8);
  for (int pair = 0; pair < 10; ++pair) {
    const Vec w = perturbed_start(p, rng), v = perturbed_start(p, rng);
    for (std::size_t i = 0; i < p.n; ++i) {
      const double lhs = gauss_expectation_2d([&](const Vec& u) {
        return dist_sq(component_gradient_integrand(p, i, w, u),
                       component_gradient_integrand(p, i, v, u));
      });
      const double l = rp.smoothness[i];
      const double rhs = l * l * (2.0 + rp.base_kurtosis) * dist_sq(w, v);
      CHECK(lhs <= rhs * (1 + 1e-12));
    }
  }
}

TEST_CASE("exact mode averages closed-form gradients without drawing") {
  Rng rng(9);
  for (const auto& p : one_of_each()) {
    const Vec x = perturbed_start(p, rng);
    const std::vector<std::size_t> batch{0, 3, 3, 5};
    Rng r1(1);
    const auto est = doubly_stochastic_gradient(p, batch, x, 4, Sharing::independent, r1, true,
                                                GradientMode::exact);
    Vec expect(p.d, 0.0), gi(p.d);
    for (std::size_t i : batch) {
      component_gradient(p, i, x, gi);
      axpy(0.25, gi, expect);
    }
    for (std::size_t k = 0; k < p.d; ++k) CHECK(est.value[k] == doctest::Approx(expect[k]));
    CHECK(r1.next_u64() == Rng(1).next_u64());
    CHECK(est.per_component->size() == 4);
  }
}

TEST_CASE("estimate equals the documented stream layout") {
  Rng rng(10);
  for (const auto& p : one_of_each())
    for (Sharing sh : {Sharing::shared, Sharing::independent}) {
      const Vec x = perturbed_start(p, rng);
      const std::vector<std::size_t> batch{1, 2, 6};
      const std::size_t m = 3;
      Rng a(77), b(77);
      const auto est = doubly_stochastic_gradient(p, batch, x, m, sh, a);
      const std::uint64_t base = b.next_u64();
      Vec expect(p.d, 0.0);
      for (std::size_t j = 0; j < batch.size(); ++j) {
        const auto block =
            draw_noise_block(p, m, sh, derive_seed(base, {sh == Sharing::shared ? 0 : j}));
        axpy(1.0 / 3.0, monte_carlo_component(p, batch[j], x, block), expect);
      }
      for (std::size_t k = 0; k < p.d; ++k)
        CHECK(est.value[k] == doctest::Approx(expect[k]).epsilon(1e-12).scale(1.0));
      CHECK(a.next_u64() == b.next_u64());
    }
}

TEST_CASE("shared noise moves every component by a multiple of one draw") {
  const auto p = make_quadratic_problem(6, 4, 1.0, 11);
  const Vec x(4, 0.5);
  Rng rng(12);
  const std::vector<std::size_t> batch{0, 2, 4};
  const auto est = doubly_stochastic_gradient(p, batch, x, 2, Sharing::shared, rng, true);
  const auto& q = p.quadratic();
  Vec first(4);
  for (std::size_t j = 0; j < batch.size(); ++j) {
    Vec exact(4);
    component_gradient(p, batch[j], x, exact);
    Vec noise = (*est.per_component)[j];
    axpy(-1.0, exact, noise);
    scale(noise, 1.0 / q.smoothness[batch[j]]);
    if (j == 0) first = noise;
    for (std::size_t k = 0; k < 4; ++k) CHECK(noise[k] == doctest::Approx(first[k]));
  }
}

TEST_CASE("independent noise differs between repeated indices") {
  const auto p = make_quadratic_problem(3, 2, 1.0, 13);
  Rng rng(14);
  const auto est = doubly_stochastic_gradient(p, std::vector<std::size_t>{1, 1}, Vec(2, 0.0), 1,
                                              Sharing::independent, rng, true);
  CHECK((*est.per_component)[0] != (*est.per_component)[1]);
  Rng rng2(14);
  const auto shared = doubly_stochastic_gradient(p, std::vector<std::size_t>{1, 1}, Vec(2, 0.0),
                                                 1, Sharing::shared, rng2, true);
  CHECK((*shared.per_component)[0] == (*shared.per_component)[1]);
}

TEST_CASE("monte carlo estimate is unbiased for every kind") {
  Rng rng(15);
  for (const auto& p : one_of_each())
    for (Sharing sh : {Sharing::shared, Sharing::independent}) {
      const Vec x = perturbed_start(p, rng);
      const SubsamplingStrategy strat{SamplingKind::without_replacement, 3};
      MinibatchSampler sampler(strat, p.n);
      EstimatorWorkspace ws;
      std::vector<std::size_t> batch;
      const std::size_t reps = 40000;
      Vec sum(p.d, 0.0), sum_sq(p.d, 0.0), g(p.d);
      for (std::size_t r = 0; r < reps; ++r) {
        sampler.draw(rng, batch);
        estimate_gradient(p, batch, x, 2, sh, rng, g, ws);
        for (std::size_t k = 0; k < p.d; ++k) {
          sum[k] += g[k];
          sum_sq[k] += g[k] * g[k];
        }
      }
      const Vec exact = objective_and_gradient(p, x).second;
      for (std::size_t k = 0; k < p.d; ++k) {
        const double mean = sum[k] / reps;
        const double se = std::sqrt((sum_sq[k] / reps - mean * mean) / reps);
        CHECK(std::abs(mean - exact[k]) <= 4.0 * se + 1e-12);
      }
    }
}

TEST_CASE("noise blocks are reproducible from their seed") {
  const auto p = make_reparam_problem(2, 3, 1.0, 0);
  const auto a = draw_noise_block(p, 4, Sharing::shared, 123);
  const auto b = draw_noise_block(p, 4, Sharing::shared, 123);
  CHECK(a.draws == b.draws);
  CHECK(a.m() == 4);
  CHECK(a.draws[0].size() == 3);
  CHECK(a.source_seed == 123);
  CHECK_THROWS_AS(draw_noise_block(p, 0, Sharing::shared, 1), ParameterError);
}

TEST_CASE("estimator argument checks") {
  const auto p = make_quadratic_problem(3, 2, 1.0, 0);
  Rng rng(1);
  CHECK_THROWS_AS(doubly_stochastic_gradient(p, std::vector<std::size_t>{}, Vec(2, 0.0), 1,
                                             Sharing::shared, rng),
                  ParameterError);
  CHECK_THROWS_AS(doubly_stochastic_gradient(p, std::vector<std::size_t>{3}, Vec(2, 0.0), 1,
                                             Sharing::shared, rng),
                  ParameterError);
  CHECK_THROWS_AS(doubly_stochastic_gradient(p, std::vector<std::size_t>{0}, Vec(3, 0.0), 1,
                                             Sharing::shared, rng),
                  ParameterError);
  CHECK_THROWS_AS(component_gradient_integrand(p, 0, Vec(2, 0.0), Vec(1, 0.0)), ParameterError);
}

TEST_CASE("integrand examples") {
  const auto q = quadratic_problem({2.0}, {Vec{0.0}});
  CHECK(component_gradient_integrand(q, 0, Vec{0.0}, Vec{0.0}) == Vec{0.0});
  CHECK(component_gradient_integrand(q, 0, Vec{1.0}, Vec{0.5})[0] == doctest::Approx(3.0));
  const auto r = reparam_problem({Vec{0.4, -1.1}}, {1.3});
  Vec w = default_initial_point(r);
  w[0] = 0.4;
  w[1] = -1.1;
  const Vec g = component_gradient_integrand(r, 0, w, Vec{0.0, 0.0});
  CHECK(g[0] == 0.0);
  CHECK(g[1] == 0.0);
}

TEST_CASE("monte carlo component examples") {
  const auto p = make_quadratic_problem(4, 3, 1.0, 17);
  const Vec x{0.2, -0.4, 1.0};
  const Vec eta{0.7, -0.3, 1.9};
  NoiseBlock one;
  one.draws = {eta};
  CHECK(monte_carlo_component(p, 2, x, one) == component_gradient_integrand(p, 2, x, eta));
  NoiseBlock pair;
  pair.draws = {eta, Vec{-0.7, 0.3, -1.9}};
  const Vec avg = monte_carlo_component(p, 2, x, pair);
  Vec exact(3);
  component_gradient(p, 2, x, exact);
  for (std::size_t k = 0; k < 3; ++k) CHECK(avg[k] == doctest::Approx(exact[k]).epsilon(1e-14));
}

TEST_CASE("per component values average to the estimate") {
  Rng rng(18);
  for (const auto& p : one_of_each())
    for (Sharing sh : {Sharing::shared, Sharing::independent}) {
      const Vec x = perturbed_start(p, rng);
      const std::vector<std::size_t> batch{0, 2, 2, 7};
      const auto est = doubly_stochastic_gradient(p, batch, x, 3, sh, rng, true);
      Vec avg(p.d, 0.0);
      for (const Vec& g : *est.per_component) axpy(0.25, g, avg);
      for (std::size_t k = 0; k < p.d; ++k)
        CHECK(est.value[k] == doctest::Approx(avg[k]).epsilon(1e-12).scale(1.0));
    }
}

TEST_CASE("singleton batch equals the component estimator") {
  const auto p = make_smoothing_erm_problem(5, 3, 0.6, 19);
  const Vec x{0.1, 0.2, -0.3};
  Rng a(20), b(20);
  const auto est = doubly_stochastic_gradient(p, std::vector<std::size_t>{3}, x, 4,
                                              Sharing::independent, a);
  const auto block = draw_noise_block(p, 4, Sharing::independent, derive_seed(b.next_u64(), {0}));
  const Vec direct = monte_carlo_component(p, 3, x, block);
  for (std::size_t k = 0; k < p.d; ++k)
    CHECK(est.value[k] == doctest::Approx(direct[k]).epsilon(1e-12).scale(1.0));
}

TEST_CASE("full-batch deviation shrinks like one over root m") {
  const auto p = make_quadratic_problem(16, 4, 1.0, 21);
  const Vec x(4, 0.3);
  const Vec exact = objective_and_gradient(p, x).second;
  std::vector<std::size_t> all(16);
  for (std::size_t i = 0; i < 16; ++i) all[i] = i;
  Rng rng(22);
  std::vector<double> lx, ly;
  for (std::size_t m : {1u, 4u, 16u, 64u}) {
    double msd = 0;
    const int reps = 4000;
    for (int r = 0; r < reps; ++r)
      msd += dist_sq(doubly_stochastic_gradient(p, all, x, m, Sharing::shared, rng).value, exact) /
             reps;
    lx.push_back(std::log(double(m)));
    ly.push_back(0.5 * std::log(msd));
  }
  double mx = 0, my = 0;
  for (std::size_t k = 0; k < 4; ++k) {
    mx += lx[k] / 4;
    my += ly[k] / 4;
  }
  double sxy = 0, sxx = 0;
  for (std::size_t k = 0; k < 4; ++k) {
    sxy += (lx[k] - mx) * (ly[k] - my);
    sxx += (lx[k] - mx) * (lx[k] - mx);
  }
  CHECK(sxy / sxx == doctest::Approx(-0.5).epsilon(0.05));
}

TEST_CASE("shared quadratic noise deviation is L_i times the mean draw") {
  const auto p = make_quadratic_problem(5, 3, 2.0, 23);
  const Vec x{1.0, 0.0, -1.0};
  const std::vector<std::size_t> batch{0, 1, 3};
  Rng a(24), b(24);
  const auto est = doubly_stochastic_gradient(p, batch, x, 3, Sharing::shared, a, true);
  const auto block = draw_noise_block(p, 3, Sharing::shared, derive_seed(b.next_u64(), {0}));
  Vec eta_bar(3, 0.0);
  for (const Vec& e : block.draws) axpy(1.0 / 3, e, eta_bar);
  for (std::size_t j = 0; j < batch.size(); ++j) {
    Vec exact(3);
    component_gradient(p, batch[j], x, exact);
    for (std::size_t k = 0; k < 3; ++k)
      CHECK(std::abs((*est.per_component)[j][k] - exact[k] -
                     p.quadratic().smoothness[batch[j]] * eta_bar[k]) <= 1e-12);
  }
}
