#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "dsgd/problem_io.hpp"
#include "dsgd/problems.hpp"
#include "dsgd/rng.hpp"
#include "dsgd/sampling.hpp"

using namespace dsgd;

namespace {

std::vector<ProblemSpec> one_of_each() {
  return {make_quadratic_problem(6, 3, 1.5, 11), make_smoothing_erm_problem(6, 3, 0.7, 12),
          make_reparam_problem(6, 2, 1.0, 13)};
}

Vec random_point(const ProblemSpec& p, Rng& rng) {
  Vec x = default_initial_point(p);
  for (double& v : x) v += 0.5 * rng.normal();
  return x;
}

// Visits every batch: b-subsets without replacement, ordered b-tuples with.
void for_each_batch(std::size_t n, std::size_t b, SamplingKind kind,
                    const std::function<void(const std::vector<std::size_t>&)>& visit) {
  std::vector<std::size_t> batch(b, 0);
  std::function<void(std::size_t, std::size_t)> rec = [&](std::size_t slot, std::size_t from) {
    if (slot == b) {
      visit(batch);
      return;
    }
    for (std::size_t i = kind == SamplingKind::with_replacement ? 0 : from; i < n; ++i) {
      batch[slot] = i;
      rec(slot + 1, i + 1);
    }
  };
  rec(0, 0);
}

// Trace variance of the doubly stochastic quadratic gradient by direct
// conditioning on every equally likely batch.
double enumerated_variance(const ProblemSpec& p, const Vec& x, std::size_t b, std::size_t m,
                           Sharing sharing, SamplingKind kind) {
  const auto& q = p.quadratic();
  const double d = double(p.d);
  std::vector<Vec> cond_means;
  std::vector<double> cond_vars;
  for_each_batch(p.n, b, kind, [&](const std::vector<std::size_t>& batch) {
    Vec g(p.d, 0.0);
    double lsum = 0, lsq = 0;
    for (std::size_t i : batch) {
      for (std::size_t k = 0; k < p.d; ++k) g[k] += q.smoothness[i] * (x[k] - q.centers[i][k]) / b;
      lsum += q.smoothness[i];
      lsq += q.smoothness[i] * q.smoothness[i];
    }
    cond_means.push_back(g);
    const double bb = double(b) * double(b);
    cond_vars.push_back(sharing == Sharing::shared ? lsum * lsum / bb * d / m : lsq / bb * d / m);
  });
  const double count = double(cond_means.size());
  Vec mean(p.d, 0.0);
  for (const Vec& g : cond_means) axpy(1.0 / count, g, mean);
  double total = 0;
  for (std::size_t k = 0; k < cond_means.size(); ++k)
    total += (cond_vars[k] + dist_sq(cond_means[k], mean)) / count;
  return total;
}

}  // namespace

TEST_CASE("kind names round-trip") {
  for (ProblemKind k : {ProblemKind::quadratic, ProblemKind::smoothing_erm, ProblemKind::reparam})
    CHECK(parse_problem_kind(to_string(k)) == k);
  CHECK_THROWS_AS(parse_problem_kind("cubic"), ParameterError);
}

TEST_CASE("generators are pure functions of their arguments") {
  const auto a = make_quadratic_problem(20, 4, 2.0, 99);
  const auto b = make_quadratic_problem(20, 4, 2.0, 99);
  const auto c = make_quadratic_problem(20, 4, 2.0, 100);
  CHECK(a.quadratic().smoothness == b.quadratic().smoothness);
  CHECK(a.quadratic().centers == b.quadratic().centers);
  CHECK(a.quadratic().smoothness != c.quadratic().smoothness);
  CHECK(problem_to_json(make_reparam_problem(5, 3, 1.0, 1)) ==
        problem_to_json(make_reparam_problem(5, 3, 1.0, 1)));
}

TEST_CASE("heterogeneity only rescales centers") {
  const auto a = make_quadratic_problem(10, 3, 1.0, 5);
  const auto b = make_quadratic_problem(10, 3, 4.0, 5);
  CHECK(a.quadratic().smoothness == b.quadratic().smoothness);
  for (std::size_t i = 0; i < 10; ++i)
    for (std::size_t k = 0; k < 3; ++k)
      CHECK(b.quadratic().centers[i][k] == doctest::Approx(4.0 * a.quadratic().centers[i][k]));
}

TEST_CASE("smoothness constants follow the law of 1/Z^2") {
  const std::size_t n = 100000;
  const auto p = make_quadratic_problem(n, 1, 1.0, 3);
  double below_one = 0;
  for (double l : p.quadratic().smoothness) {
    REQUIRE(l > 0.0);
    REQUIRE(std::isfinite(l));
    below_one += l <= 1.0;
  }
  const double prob = 0.31731050786291415;  // P(1/Z^2 <= 1) = P(|Z| >= 1)
  CHECK(std::abs(below_one / n - prob) < 5.0 * std::sqrt(prob * (1 - prob) / n));
}

TEST_CASE("centers have covariance s^2 I") {
  const double s = 3.0;
  const auto p = make_quadratic_problem(40000, 2, s, 8);
  double m0 = 0, m1 = 0, v0 = 0, v1 = 0, c01 = 0;
  for (const Vec& c : p.quadratic().centers) {
    m0 += c[0];
    m1 += c[1];
    v0 += c[0] * c[0];
    v1 += c[1] * c[1];
    c01 += c[0] * c[1];
  }
  const double n = 40000;
  CHECK(std::abs(m0 / n) < 5 * s / std::sqrt(n));
  CHECK(std::abs(m1 / n) < 5 * s / std::sqrt(n));
  CHECK(v0 / n == doctest::Approx(s * s).epsilon(0.04));
  CHECK(v1 / n == doctest::Approx(s * s).epsilon(0.04));
  CHECK(std::abs(c01 / n) < 5 * s * s / std::sqrt(n));
}

TEST_CASE("constructors reject malformed data") {
  CHECK_THROWS_AS(quadratic_problem({1.0, -1.0}, {{0.0}, {1.0}}), ParameterError);
  CHECK_THROWS_AS(quadratic_problem({1.0}, {{0.0}, {1.0}}), ParameterError);
  CHECK_THROWS_AS(quadratic_problem({1.0, 1.0}, {{0.0}, {1.0, 2.0}}), ParameterError);
  CHECK_THROWS_AS(smoothing_erm_problem({{1.0}}, {1.0, 2.0}, 1.0), ParameterError);
  CHECK_THROWS_AS(smoothing_erm_problem({{1.0}}, {1.0}, 0.0), ParameterError);
  CHECK_THROWS_AS(reparam_problem({{0.0}}, {0.0}), ParameterError);
  CHECK_THROWS_AS(make_quadratic_problem(0, 3, 1.0, 0), ParameterError);
  CHECK_THROWS_AS(make_quadratic_problem(3, 3, 0.0, 0), ParameterError);
}

TEST_CASE("accessors and closed forms refuse the wrong kind") {
  const auto r = make_reparam_problem(3, 2, 1.0, 0);
  CHECK_THROWS_AS(r.quadratic(), UnsupportedError);
  CHECK_THROWS_AS(r.smoothing_erm(), UnsupportedError);
  CHECK_THROWS_AS(global_optimum(r), UnsupportedError);
  CHECK_THROWS_AS(analytic_variance_oracle(r, default_initial_point(r), 1, 1, Sharing::shared,
                                           SamplingKind::without_replacement),
                  UnsupportedError);
}

TEST_CASE("reparam layout") {
  CHECK(reparam_param_dim(1) == 2);
  CHECK(reparam_param_dim(3) == 9);
  CHECK(reparam_scale_index(3, 0, 0) == 3);
  CHECK(reparam_scale_index(3, 2, 2) == 8);
  const auto p = make_reparam_problem(4, 3, 1.0, 2);
  CHECK(p.d == 9);
  CHECK(p.noise_dim() == 3);
  const Vec x0 = default_initial_point(p);
  CHECK(x0 == Vec{0, 0, 0, 1, 0, 1, 0, 0, 1});
}

TEST_CASE("gradients match central differences") {
  Rng rng(21);
  for (const auto& p : one_of_each()) {
    for (int trial = 0; trial < 3; ++trial) {
      const Vec x = random_point(p, rng);
      for (std::size_t i = 0; i < p.n; ++i) {
        Vec g(p.d);
        component_gradient(p, i, x, g);
        for (std::size_t k = 0; k < p.d; ++k) {
          const double h = 1e-5;
          Vec xp = x, xm = x;
          xp[k] += h;
          xm[k] -= h;
          const double fd =
              (component_objective(p, i, xp) - component_objective(p, i, xm)) / (2 * h);
          CHECK(g[k] == doctest::Approx(fd).epsilon(1e-6).scale(1.0));
        }
      }
    }
  }
}

TEST_CASE("objective is the component average") {
  Rng rng(22);
  for (const auto& p : one_of_each()) {
    const Vec x = random_point(p, rng);
    const auto [f, g] = objective_and_gradient(p, x);
    double f_ref = 0;
    Vec g_ref(p.d, 0.0), gi(p.d);
    for (std::size_t i = 0; i < p.n; ++i) {
      f_ref += component_objective(p, i, x) / p.n;
      component_gradient(p, i, x, gi);
      axpy(1.0 / p.n, gi, g_ref);
    }
    CHECK(f == doctest::Approx(f_ref).epsilon(1e-14));
    for (std::size_t k = 0; k < p.d; ++k) CHECK(g[k] == doctest::Approx(g_ref[k]).epsilon(1e-14));
  }
}

TEST_CASE("quadratic objective carries the noise offset") {
  const auto p = quadratic_problem({2.0}, {{1.0, -1.0}});
  // E (L/2)||x - c + eta||^2 = (L/2)(||x - c||^2 + d)
  CHECK(component_objective(p, 0, Vec{1.0, -1.0}) == 2.0);
  CHECK(component_objective(p, 0, Vec{2.0, -1.0}) == 3.0);
}

TEST_CASE("global optimum zeroes the full gradient") {
  const auto p = make_quadratic_problem(30, 4, 2.0, 4);
  const Vec opt = global_optimum(p);
  const auto [f, g] = objective_and_gradient(p, opt);
  CHECK(norm_sq(g) < 1e-20);
  Rng rng(1);
  for (int k = 0; k < 10; ++k) {
    Vec x = opt;
    for (double& v : x) v += rng.normal();
    CHECK(objective_and_gradient(p, x).first > f);
  }
}

TEST_CASE("analytic oracle equals exhaustive conditioning") {
  Rng rng(31);
  for (int fixture = 0; fixture < 4; ++fixture) {
    const std::size_t n = 3 + fixture;
    const auto p = make_quadratic_problem(n, 2, 1.0 + fixture, 40 + fixture);
    Vec x(2);
    for (double& v : x) v = rng.normal();
    for (SamplingKind kind : {SamplingKind::without_replacement, SamplingKind::with_replacement})
      for (Sharing sh : {Sharing::shared, Sharing::independent})
        for (std::size_t m : {1u, 3u})
          for (std::size_t b = 1; b <= (kind == SamplingKind::with_replacement ? 3 : n); ++b) {
            const double oracle = analytic_variance_oracle(p, x, b, m, sh, kind);
            const double direct = enumerated_variance(p, x, b, m, sh, kind);
            CHECK(oracle == doctest::Approx(direct).epsilon(1e-12));
          }
  }
}

TEST_CASE("oracle rejects bad arguments") {
  const auto p = make_quadratic_problem(4, 2, 1.0, 0);
  const Vec x(2, 0.0);
  CHECK_THROWS_AS(
      analytic_variance_oracle(p, x, 5, 1, Sharing::shared, SamplingKind::without_replacement),
      ParameterError);
  CHECK_THROWS_AS(
      analytic_variance_oracle(p, x, 0, 1, Sharing::shared, SamplingKind::with_replacement),
      ParameterError);
  CHECK_THROWS_AS(
      analytic_variance_oracle(p, x, 2, 0, Sharing::shared, SamplingKind::with_replacement),
      ParameterError);
  CHECK_NOTHROW(
      analytic_variance_oracle(p, x, 9, 1, Sharing::shared, SamplingKind::with_replacement));
}

TEST_CASE("JSON round trip is exact for every kind") {
  Rng rng(41);
  for (const auto& p : one_of_each()) {
    const auto doc = problem_to_json(p);
    const ProblemSpec back = problem_from_json(nlohmann::json::parse(doc.dump()));
    CHECK(back.kind == p.kind);
    CHECK(back.n == p.n);
    CHECK(back.d == p.d);
    CHECK(back.seed == p.seed);
    CHECK(problem_to_json(back) == doc);
    const Vec x = random_point(p, rng);
    for (std::size_t i = 0; i < p.n; ++i)
      CHECK(component_objective(back, i, x) == component_objective(p, i, x));
  }
}

TEST_CASE("malformed JSON instances are rejected") {
  auto doc = problem_to_json(make_quadratic_problem(3, 2, 1.0, 0));
  auto bad_n = doc;
  bad_n["n"] = 4;
  CHECK_THROWS_AS(problem_from_json(bad_n), ParameterError);
  auto no_kind = doc;
  no_kind.erase("kind");
  CHECK_THROWS_AS(problem_from_json(no_kind), ParameterError);
  CHECK_THROWS_AS(problem_from_json(nlohmann::json::array()), ParameterError);
}

TEST_CASE("small closed-form examples") {
  SUBCASE("single component optimum is its center") {
    const auto p = quadratic_problem({2.5}, {Vec{1.0, -2.0}});
    CHECK(global_optimum(p) == Vec{1.0, -2.0});
  }
  SUBCASE("equal smoothness gives the mean of centers") {
    const auto p = quadratic_problem({3.0, 3.0, 3.0}, {Vec{1, 0}, Vec{0, 3}, Vec{2, 3}});
    const Vec x = global_optimum(p);
    CHECK(x[0] == doctest::Approx(1.0));
    CHECK(x[1] == doctest::Approx(2.0));
  }
  SUBCASE("smoothness-weighted centers") {
    const auto p = quadratic_problem({1, 2, 3}, {Vec{1, 0, 0}, Vec{0, 1, 0}, Vec{0, 0, 1}});
    const Vec x = global_optimum(p);
    CHECK(x[0] == doctest::Approx(1.0 / 6));
    CHECK(x[1] == doctest::Approx(2.0 / 6));
    CHECK(x[2] == doctest::Approx(3.0 / 6));
  }
  SUBCASE("two symmetric centers at the origin") {
    const auto p = quadratic_problem({1, 1}, {Vec{1.0}, Vec{-1.0}});
    CHECK(objective_and_gradient(p, Vec{0.0}).first == doctest::Approx(1.0));
  }
  SUBCASE("reparam at its target with unit scale") {
    const auto p = reparam_problem({Vec{0.5, -1.0, 2.0}}, {1.7});
    Vec w = default_initial_point(p);
    std::copy_n(p.reparam().targets[0].begin(), 3, w.begin());
    CHECK(component_objective(p, 0, w) == doctest::Approx(1.7 / 2 * 3));
    Vec g(p.d);
    component_gradient(p, 0, w, g);
    for (std::size_t k = 0; k < 3; ++k) CHECK(g[k] == doctest::Approx(0.0));
  }
  SUBCASE("vanishing heterogeneity collapses the center") {
    const auto p = make_quadratic_problem(1, 1, 1e-12, 4);
    CHECK(std::abs(p.quadratic().centers[0][0]) < 1e-10);
  }
}

TEST_CASE("center covariance across instance seeds") {
  const std::size_t seeds = 10000;
  double sum[2][2] = {}, sq[2][2] = {};
  for (std::uint64_t seed = 0; seed < seeds; ++seed) {
    const auto p = make_quadratic_problem(4, 2, 2.0, seed);
    const Vec& c = p.quadratic().centers[0];
    for (int a = 0; a < 2; ++a)
      for (int b = 0; b < 2; ++b) {
        sum[a][b] += c[a] * c[b];
        sq[a][b] += c[a] * c[b] * c[a] * c[b];
      }
  }
  for (int a = 0; a < 2; ++a)
    for (int b = 0; b < 2; ++b) {
      const double mean = sum[a][b] / seeds;
      const double se = std::sqrt((sq[a][b] / seeds - mean * mean) / seeds);
      CHECK(std::abs(mean - (a == b ? 4.0 : 0.0)) <= 3 * se);
    }
}

TEST_CASE("full gradient matches central differences at random points") {
  Rng rng(21);
  for (const auto& p : one_of_each())
    for (int trial = 0; trial < 20; ++trial) {
      const Vec x = random_point(p, rng);
      const Vec g = objective_and_gradient(p, x).second;
      for (std::size_t k = 0; k < p.d; ++k) {
        const double h = 1e-5;
        Vec xp = x, xm = x;
        xp[k] += h;
        xm[k] -= h;
        const double fd =
            (objective_and_gradient(p, xp).first - objective_and_gradient(p, xm).first) / (2 * h);
        CHECK(std::abs(fd - g[k]) <= 1e-5 * (1 + std::abs(g[k])));
      }
    }
}

TEST_CASE("oracle special cases") {
  const auto p = make_quadratic_problem(5, 3, 1.0, 8);
  const auto& q = p.quadratic();
  const Vec x(3, 0.25);
  double lbar = 0;
  for (double l : q.smoothness) lbar += l / 5;
  const double full =
      analytic_variance_oracle(p, x, 5, 4, Sharing::shared, SamplingKind::without_replacement);
  CHECK(full == doctest::Approx(3.0 / 4 * lbar * lbar).epsilon(1e-12));
  // Many noise samples leave only the subsampling part.
  std::vector<Vec> grads(5, Vec(3));
  for (std::size_t i = 0; i < 5; ++i) component_gradient(p, i, x, grads[i]);
  const Vec mean = objective_and_gradient(p, x).second;
  const double sub = subsampling_unit_variance(grads, mean) * (5.0 - 2.0) / (4.0 * 2.0);
  const double many =
      analytic_variance_oracle(p, x, 2, 1u << 30, Sharing::shared, SamplingKind::without_replacement);
  CHECK(many == doctest::Approx(sub).epsilon(1e-6));
  const auto tiny = quadratic_problem({1, 2, 3, 4}, {Vec{1}, Vec{-1}, Vec{2}, Vec{0.5}});
  for (Sharing sh : {Sharing::shared, Sharing::independent})
    CHECK(analytic_variance_oracle(tiny, Vec{0.3}, 2, 1, sh, SamplingKind::without_replacement) ==
          doctest::Approx(enumerated_variance(tiny, Vec{0.3}, 2, 1, sh,
                                              SamplingKind::without_replacement))
              .epsilon(1e-12));
}
