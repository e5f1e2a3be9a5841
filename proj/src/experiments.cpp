#include "dsgd/experiments.hpp"

#include <cmath>
#include <optional>

#include "dsgd/optimizer.hpp"
#include "dsgd/parallel.hpp"
#include "dsgd/problem_io.hpp"
#include "dsgd/variance_lab.hpp"

namespace dsgd {

namespace {

std::string num(double v) { return format_double(v); }
std::string num(std::size_t v) { return std::to_string(v); }
std::string opt_num(const std::optional<double>& v) { return v ? format_double(*v) : ""; }

CsvTable variance_sweep_table(const ExperimentConfig& cfg, const ProblemSpec& p,
                              const RunOptions& options) {
  const RunBlock& r = cfg.run;
  std::vector<double> hets = r.heterogeneity;
  if (hets.empty()) hets.push_back(cfg.problem.s);
  Rng rng(cfg.master_seed);
  const auto rows = budget_sweep(p, r.budgets, hets, r.sharing, r.strategy, r.reps, rng,
                                 options.threads);
  CsvTable table({"s", "budget", "b", "m", "sharing", "strategy", "empirical", "std_error",
                  "oracle", "v_com", "v_cor", "v_sub", "bound_total", "status"});
  for (const SweepRow& row : rows)
    table.add({num(row.s), num(row.budget), num(row.b), num(row.m),
               std::string(to_string(row.sharing)), std::string(to_string(row.strategy)),
               num(row.empirical), num(row.std_error), num(row.oracle), num(row.v_com),
               num(row.v_cor), num(row.v_sub), num(row.bound_total), row.status});
  return table;
}

CsvTable trace_table(const ExperimentConfig& cfg, const ProblemSpec& p,
                     const RunOptions& options) {
  const RunBlock& r = cfg.run;
  const bool rr = cfg.experiment == Experiment::sgd_rr_trace;
  struct Job {
    std::size_t gamma_idx, run;
  };
  std::vector<Job> jobs;
  for (std::size_t g = 0; g < r.gamma.size(); ++g)
    for (std::size_t k = 0; k < r.runs; ++k) jobs.push_back({g, k});

  std::vector<std::vector<TraceRecord>> traces(jobs.size());
  std::vector<std::string> errors(jobs.size());
  std::vector<std::uint64_t> seeds(jobs.size());
  parallel_for(jobs.size(), options.threads, [&](std::size_t j) {
    RunConfig rc;
    rc.strategy = {r.strategy, r.b};
    rc.m = r.m;
    rc.sharing = r.sharing;
    rc.mode = r.gradient;
    rc.stepsize = r.gamma[jobs[j].gamma_idx];
    rc.steps_or_epochs = rr ? r.epochs : r.steps;
    if (r.radius > 0.0) rc.domain = Domain::ball(Vec(p.d, 0.0), r.radius);
    // Runs share seeds across stepsizes so floors can be compared pairwise.
    rc.master_seed = derive_seed(cfg.master_seed, {jobs[j].run});
    rc.record_every = r.record_every;
    seeds[j] = rc.master_seed;
    try {
      traces[j] = rr ? sgd_rr_run(p, rc) : sgd_run(p, rc);
    } catch (const std::exception& e) {
      errors[j] = std::string("error: ") + e.what();
    }
  });

  CsvTable table({"epoch", "step", "dist_sq", "grad_norm_sq", "gamma", "b", "m", "sharing",
                  "strategy", "seed", "status"});
  const std::string strategy = rr ? "reshuffling" : std::string(to_string(r.strategy));
  for (std::size_t j = 0; j < jobs.size(); ++j) {
    const std::string gamma = num(r.gamma[jobs[j].gamma_idx]);
    const std::string seed = std::to_string(seeds[j]);
    if (!errors[j].empty()) {
      table.add({"", "", "", "", gamma, num(r.b), num(r.m), std::string(to_string(r.sharing)),
                 strategy, seed, errors[j]});
      continue;
    }
    for (const TraceRecord& rec : traces[j]) {
      const double metric = rec.dist_sq_to_opt ? *rec.dist_sq_to_opt : rec.grad_norm_sq.value_or(0);
      const std::string status =
          all_finite(rec.iterate) && std::isfinite(metric) ? "ok" : "nonfinite";
      table.add({num(rec.epoch), num(rec.step), opt_num(rec.dist_sq_to_opt),
                 opt_num(rec.grad_norm_sq), gamma, num(r.b), num(r.m),
                 std::string(to_string(r.sharing)), strategy, seed, status});
    }
  }
  return table;
}

CsvTable bound_audit_table(const ExperimentConfig& cfg, const ProblemSpec& p) {
  const RunBlock& r = cfg.run;
  const EstimatorConfig ec{{r.strategy, r.b}, r.m, r.sharing, r.gradient};
  const double rho = rho_for(r.sharing);
  const Vec opt = global_optimum(p);
  CsvTable table({"check", "point", "b", "m", "sharing", "strategy", "suboptimality",
                  "empirical", "std_error", "bound", "v_com", "v_cor", "v_sub", "pass",
                  "status"});
  const std::string sharing(to_string(r.sharing)), strategy(to_string(r.strategy));

  const VarianceReport rep = variance_report(p, opt, ec, r.reps, derive_seed(cfg.master_seed, {0}));
  const bool var_pass = rep.empirical <= rep.bound_total + 3.0 * rep.std_error;
  table.add({"variance_bound", "0", num(r.b), num(r.m), sharing, strategy, num(0.0),
             num(rep.empirical), num(rep.std_error), num(rep.bound_total), num(rep.v_com),
             num(rep.v_cor), num(rep.v_sub), var_pass ? "1" : "0", "ok"});

  const double mu = objective_strong_convexity(p);
  Rng const_rng(derive_seed(cfg.master_seed, {1}));
  const ConstantsReport bv = bv_constants(p, r.m, r.reps, const_rng);
  const ConstantsReport er = er_constants(p, rho, r.strategy, r.b, mu);
  AuditConstants ac;
  ac.script_L = er.script_L_A;
  ac.L = objective_smoothness(p);
  ac.sigma_sq = r.gradient == GradientMode::exact
                    ? variance_bound_from_moments(Vec(p.n, 0.0), bv.tau_sq, rho, r.strategy,
                                                  r.b, p.n).total()
                    : bv_sigma_sq(bv, rho, r.strategy, r.b, p.n);

  std::vector<Vec> points{opt};
  Rng point_rng(derive_seed(cfg.master_seed, {2}));
  for (std::size_t k = 0; k < r.audit_points; ++k) {
    Vec x = opt;
    for (double& v : x) v += r.audit_spread * point_rng.normal();
    points.push_back(std::move(x));
  }
  Rng audit_rng(derive_seed(cfg.master_seed, {3}));
  const auto rows = gradient_norm_bound_audit(p, points, ac, ec, r.reps, audit_rng);
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const AuditRow& row = rows[k];
    table.add({"gradient_norm", num(k), num(r.b), num(r.m), sharing, strategy,
               num(row.suboptimality), num(row.empirical), num(row.std_error), num(row.rhs), "",
               "", "", row.pass ? "1" : "0", "ok"});
  }
  return table;
}

CsvTable constants_table(const ExperimentConfig& cfg, const ProblemSpec& p) {
  const RunBlock& r = cfg.run;
  const double rho = rho_for(r.sharing);
  const double mu = objective_strong_convexity(p);
  Rng rng(derive_seed(cfg.master_seed, {1}));
  const bool at_optimum = p.kind == ProblemKind::quadratic;
  const ConstantsReport bv = at_optimum
                                 ? bv_constants(p, r.m, r.reps, rng)
                                 : bv_constants_at(p, default_initial_point(p), r.m, r.reps, rng);
  const ConstantsReport c = merge_constants(bv, er_constants(p, rho, r.strategy, r.b, mu), mu);

  CsvTable table({"quantity", "index", "value"});
  auto scalar = [&](const char* name, double v) { table.add({name, "", num(v)}); };
  auto vector = [&](const char* name, const Vec& v) {
    for (std::size_t i = 0; i < v.size(); ++i) table.add({name, num(i), num(v[i])});
  };
  scalar("reference_is_optimum", at_optimum ? 1.0 : 0.0);
  scalar("mu", mu);
  scalar("L", objective_smoothness(p));
  scalar("L_max", c.L_max);
  scalar("tau_sq", c.tau_sq);
  scalar("sigma_sq_bv", bv_sigma_sq(c, rho, r.strategy, r.b, p.n));
  scalar("script_L_max", c.script_L_max);
  scalar("script_L_sub_unit", c.script_L_sub_unit);
  scalar("script_L_sub", c.script_L_sub);
  scalar("script_L_A", c.script_L_A);
  scalar("script_L_B", c.script_L_B);
  scalar("kappa", c.kappa);
  scalar("kappa_sigma", c.kappa_sigma);
  scalar("kappa_tau", c.kappa_tau);
  if (p.n % r.b == 0) {
    const ReshufflingConstants rc = reshuffling_constants(c, mu, p.n, r.b);
    scalar("rr_c_sub", rc.c_sub);
    scalar("rr_c_com", rc.c_com);
    scalar("rr_gamma_max", rc.gamma_max);
  }
  vector("L_i", c.L_i);
  vector("sigma_i_sq", c.sigma_i_sq);
  vector("sigma_i_sq_se", c.sigma_i_sq_se);
  vector("script_L_i", c.script_L_i);
  return table;
}

}  // namespace

ProblemSpec build_instance(const ProblemBlock& block) {
  switch (block.kind) {
    case ProblemKind::quadratic:
      return make_quadratic_problem(block.n, block.d, block.s, block.seed);
    case ProblemKind::smoothing_erm:
      return make_smoothing_erm_problem(block.n, block.d, block.perturbation_scale, block.seed);
    case ProblemKind::reparam:
      return make_reparam_problem(block.n, block.d, block.s, block.seed);
  }
  throw ParameterError("unknown problem kind");
}

CsvTable run_experiment(const ExperimentConfig& cfg, const ProblemSpec& instance,
                        const RunOptions& options) {
  switch (cfg.experiment) {
    case Experiment::variance_sweep: return variance_sweep_table(cfg, instance, options);
    case Experiment::sgd_trace:
    case Experiment::sgd_rr_trace: return trace_table(cfg, instance, options);
    case Experiment::bound_audit: return bound_audit_table(cfg, instance);
    case Experiment::constants: return constants_table(cfg, instance);
  }
  throw ParameterError("unknown experiment");
}

nlohmann::json make_manifest(const ExperimentConfig& cfg, const ProblemSpec& instance,
                             double wall_seconds) {
  nlohmann::json doc;
  doc["tool"] = "dsgd";
  doc["tool_version"] = tool_version;
  doc["config_text"] = render_config(cfg);
  doc["config"] = config_to_json(cfg);
  doc["instance"] = problem_to_json(instance);
  doc["wall_seconds"] = wall_seconds;
  return doc;
}

LoadedManifest load_manifest(const nlohmann::json& manifest) {
  try {
    LoadedManifest out{parse_config(manifest.at("config_text").get<std::string>()),
                       problem_from_json(manifest.at("instance"))};
    return out;
  } catch (const nlohmann::json::exception& e) {
    throw ParameterError(std::string("manifest: ") + e.what());
  }
}

}  // namespace dsgd
