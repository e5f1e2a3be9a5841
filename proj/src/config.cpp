#include "dsgd/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include "dsgd/csv.hpp"

namespace dsgd {

std::string_view to_string(Experiment e) {
  switch (e) {
    case Experiment::variance_sweep: return "variance_sweep";
    case Experiment::sgd_trace: return "sgd_trace";
    case Experiment::sgd_rr_trace: return "sgd_rr_trace";
    case Experiment::bound_audit: return "bound_audit";
    case Experiment::constants: return "constants";
  }
  return "unknown";
}

const std::vector<Experiment>& all_experiments() {
  static const std::vector<Experiment> all{Experiment::variance_sweep, Experiment::sgd_trace,
                                           Experiment::sgd_rr_trace, Experiment::bound_audit,
                                           Experiment::constants};
  return all;
}

Experiment parse_experiment(std::string_view text) {
  for (Experiment e : all_experiments())
    if (to_string(e) == text) return e;
  throw ParameterError("unknown experiment '" + std::string(text) + "'");
}

std::string_view describe(Experiment e) {
  switch (e) {
    case Experiment::variance_sweep:
      return "trace variance at x* over b*m budgets: empirical, exact oracle, bound terms";
    case Experiment::sgd_trace:
      return "projected SGD with independent minibatches; per-step distance to x*";
    case Experiment::sgd_rr_trace:
      return "doubly SGD with random reshuffling; epoch-boundary distance to x*";
    case Experiment::bound_audit:
      return "variance bound at x* and E||g(x)||^2 bound at random points";
    case Experiment::constants:
      return "BV/ER constants, condition numbers and reshuffling floor constants";
  }
  return "";
}

ConfigError::ConfigError(std::size_t line, const std::string& message)
    : ParameterError(line ? "line " + std::to_string(line) + ": " + message : message),
      line_(line) {}

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::uint64_t parse_u64(std::string_view text) {
  std::uint64_t v = 0;
  const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size())
    throw ParameterError("expected a nonnegative integer, got '" + std::string(text) + "'");
  return v;
}

double parse_real(std::string_view text) {
  double v = 0.0;
  const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size() || !std::isfinite(v))
    throw ParameterError("expected a finite real number, got '" + std::string(text) + "'");
  return v;
}

std::vector<std::string_view> split_list(std::string_view text) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const auto comma = text.find(',', start);
    const auto item = trim(text.substr(start, comma == std::string_view::npos ? text.npos
                                                                              : comma - start));
    if (item.empty()) throw ParameterError("empty entry in list '" + std::string(text) + "'");
    out.push_back(item);
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

template <class T, class F>
std::string join(const std::vector<T>& items, F&& fmt) {
  std::string out;
  for (std::size_t k = 0; k < items.size(); ++k) {
    if (k) out += ", ";
    out += fmt(items[k]);
  }
  return out;
}

std::string u64_text(std::uint64_t v) { return std::to_string(v); }

struct KeyDef {
  std::string section;
  std::string name;
  std::string help;
  std::function<void(ExperimentConfig&, std::string_view)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

std::string_view to_string(GradientMode mode) {
  return mode == GradientMode::exact ? "exact" : "monte_carlo";
}

GradientMode parse_gradient_mode(std::string_view text) {
  if (text == "monte_carlo") return GradientMode::monte_carlo;
  if (text == "exact") return GradientMode::exact;
  throw ParameterError("unknown gradient mode '" + std::string(text) +
                       "' (expected monte_carlo or exact)");
}

#define DSGD_SIZE_KEY(sec, field, member, text)                                              \
  KeyDef {                                                                                   \
    sec, #field, text,                                                                       \
        [](ExperimentConfig& c, std::string_view v) { c.member = parse_u64(v); },            \
        [](const ExperimentConfig& c) { return u64_text(c.member); }                         \
  }
#define DSGD_REAL_KEY(sec, field, member, text)                                              \
  KeyDef {                                                                                   \
    sec, #field, text,                                                                       \
        [](ExperimentConfig& c, std::string_view v) { c.member = parse_real(v); },           \
        [](const ExperimentConfig& c) { return format_double_shortest(c.member); }           \
  }

const std::vector<KeyDef>& key_table() {
  static const std::vector<KeyDef> table{
      {"", "experiment", "variance_sweep | sgd_trace | sgd_rr_trace | bound_audit | constants",
       [](ExperimentConfig& c, std::string_view v) { c.experiment = parse_experiment(v); },
       [](const ExperimentConfig& c) { return std::string(to_string(c.experiment)); }},
      {"", "output", "output path prefix",
       [](ExperimentConfig& c, std::string_view v) {
         if (v.empty()) throw ParameterError("output prefix must not be empty");
         c.output = std::string(v);
       },
       [](const ExperimentConfig& c) { return c.output; }},
      DSGD_SIZE_KEY("", master_seed, master_seed, "seed of all run-time randomness"),

      {"problem", "kind", "quadratic | smoothing_erm | reparam",
       [](ExperimentConfig& c, std::string_view v) { c.problem.kind = parse_problem_kind(v); },
       [](const ExperimentConfig& c) { return std::string(to_string(c.problem.kind)); }},
      DSGD_SIZE_KEY("problem", n, problem.n, "number of components"),
      DSGD_SIZE_KEY("problem", d, problem.d, "dimension (latent dimension d_z for reparam)"),
      DSGD_REAL_KEY("problem", s, problem.s, "heterogeneity (spread of centers/targets)"),
      DSGD_SIZE_KEY("problem", seed, problem.seed, "instance generation seed"),
      DSGD_REAL_KEY("problem", perturbation_scale, problem.perturbation_scale,
                    "weight perturbation scale (smoothing_erm)"),

      DSGD_SIZE_KEY("run", b, run.b, "minibatch size"),
      DSGD_SIZE_KEY("run", m, run.m, "Monte Carlo samples per component estimate"),
      {"run", "sharing", "shared | independent",
       [](ExperimentConfig& c, std::string_view v) { c.run.sharing = parse_sharing(v); },
       [](const ExperimentConfig& c) { return std::string(to_string(c.run.sharing)); }},
      {"run", "strategy", "with_replacement | without_replacement",
       [](ExperimentConfig& c, std::string_view v) { c.run.strategy = parse_sampling_kind(v); },
       [](const ExperimentConfig& c) { return std::string(to_string(c.run.strategy)); }},
      {"run", "gradient", "monte_carlo | exact (exact: closed-form component gradients)",
       [](ExperimentConfig& c, std::string_view v) { c.run.gradient = parse_gradient_mode(v); },
       [](const ExperimentConfig& c) { return std::string(to_string(c.run.gradient)); }},
      {"run", "gamma", "stepsize list",
       [](ExperimentConfig& c, std::string_view v) {
         c.run.gamma.clear();
         for (auto item : split_list(v)) c.run.gamma.push_back(parse_real(item));
       },
       [](const ExperimentConfig& c) { return join(c.run.gamma, format_double_shortest); }},
      DSGD_SIZE_KEY("run", steps, run.steps, "SGD steps (sgd_trace)"),
      DSGD_SIZE_KEY("run", epochs, run.epochs, "reshuffling epochs (sgd_rr_trace)"),
      DSGD_SIZE_KEY("run", runs, run.runs, "independent runs per stepsize"),
      DSGD_SIZE_KEY("run", record_every, run.record_every, "trace recording period in steps"),
      DSGD_SIZE_KEY("run", reps, run.reps, "Monte Carlo repetitions per measurement"),
      {"run", "budgets", "b*m budget list (variance_sweep)",
       [](ExperimentConfig& c, std::string_view v) {
         c.run.budgets.clear();
         for (auto item : split_list(v)) c.run.budgets.push_back(parse_u64(item));
       },
       [](const ExperimentConfig& c) { return join(c.run.budgets, u64_text); }},
      {"run", "heterogeneity", "list of s values (variance_sweep; default: problem.s)",
       [](ExperimentConfig& c, std::string_view v) {
         c.run.heterogeneity.clear();
         for (auto item : split_list(v)) c.run.heterogeneity.push_back(parse_real(item));
       },
       [](const ExperimentConfig& c) {
         return join(c.run.heterogeneity, format_double_shortest);
       }},
      DSGD_REAL_KEY("run", radius, run.radius, "ball radius around the origin; 0 = unconstrained"),
      DSGD_SIZE_KEY("run", audit_points, run.audit_points, "random points (bound_audit)"),
      DSGD_REAL_KEY("run", audit_spread, run.audit_spread,
                    "std-dev of audit point offsets from x* (bound_audit)"),
  };
  return table;
}

#undef DSGD_SIZE_KEY
#undef DSGD_REAL_KEY

const KeyDef* find_key(std::string_view section, std::string_view name) {
  for (const KeyDef& k : key_table())
    if (k.section == section && k.name == name) return &k;
  return nullptr;
}

void validate(const ExperimentConfig& c, const std::map<std::string, std::size_t>& lines) {
  auto fail = [&](const std::string& key, const std::string& msg) {
    const auto it = lines.find(key);
    throw ConfigError(it == lines.end() ? 0 : it->second, msg);
  };
  const ProblemBlock& p = c.problem;
  const RunBlock& r = c.run;
  if (!lines.count("experiment")) throw ConfigError(0, "missing required key 'experiment'");
  if (p.n < 1) fail("problem.n", "n must be >= 1");
  if (p.d < 1) fail("problem.d", "d must be >= 1");
  if (!(p.s > 0.0)) fail("problem.s", "s must be positive");
  if (!(p.perturbation_scale > 0.0))
    fail("problem.perturbation_scale", "perturbation_scale must be positive");
  if (r.m < 1) fail("run.m", "m must be >= 1");
  if (r.runs < 1) fail("run.runs", "runs must be >= 1");
  if (r.record_every < 1) fail("run.record_every", "record_every must be >= 1");
  if (r.radius < 0.0) fail("run.radius", "radius must be >= 0");
  if (!(r.audit_spread > 0.0)) fail("run.audit_spread", "audit_spread must be positive");
  if (r.gamma.empty()) fail("run.gamma", "gamma list must not be empty");
  for (double g : r.gamma)
    if (!(g > 0.0)) fail("run.gamma", "every gamma must be positive");

  const bool needs_quadratic =
      c.experiment == Experiment::variance_sweep || c.experiment == Experiment::bound_audit;
  if (needs_quadratic && p.kind != ProblemKind::quadratic)
    fail("problem.kind", std::string(to_string(c.experiment)) +
                             " needs the quadratic family (closed-form optimum)");

  if (c.experiment == Experiment::variance_sweep) {
    if (r.budgets.empty()) fail("run.budgets", "budgets must not be empty");
    for (std::size_t bgt : r.budgets)
      if (bgt < 1) fail("run.budgets", "every budget must be >= 1");
    for (double s : r.heterogeneity)
      if (!(s > 0.0)) fail("run.heterogeneity", "every heterogeneity value must be positive");
    if (r.reps == 1) fail("run.reps", "reps must be 0 (oracle only) or >= 2");
    return;
  }

  if (r.b < 1) fail("run.b", "b must be >= 1");
  if (c.experiment == Experiment::sgd_rr_trace) {
    if (r.b > p.n || p.n % r.b != 0)
      fail("run.b", "b=" + std::to_string(r.b) + " does not divide n=" + std::to_string(p.n) +
                        "; sgd_rr_trace requires b | n");
  } else if (r.strategy == SamplingKind::without_replacement && r.b > p.n) {
    fail("run.b", "b=" + std::to_string(r.b) + " exceeds n=" + std::to_string(p.n) +
                      " under sampling without replacement");
  }
  const bool needs_reps = c.experiment == Experiment::bound_audit ||
                          (c.experiment == Experiment::constants &&
                           p.kind == ProblemKind::reparam);
  if (needs_reps && r.reps < 2) fail("run.reps", "reps must be >= 2");
}

}  // namespace

ExperimentConfig parse_config(std::string_view text) {
  ExperimentConfig cfg;
  std::map<std::string, std::size_t> lines;
  std::string section;
  std::set<std::string> seen_sections;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    std::string_view raw = text.substr(pos, nl == std::string_view::npos ? text.npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    if (const auto hash = raw.find('#'); hash != std::string_view::npos) raw = raw.substr(0, hash);
    const std::string_view line = trim(raw);
    if (line.empty()) continue;

    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(line_no, "malformed section header");
      section = std::string(trim(line.substr(1, line.size() - 2)));
      if (section != "problem" && section != "run")
        throw ConfigError(line_no, "unknown section [" + section + "]");
      if (!seen_sections.insert(section).second)
        throw ConfigError(line_no, "duplicate section [" + section + "]");
      continue;
    }

    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ConfigError(line_no, "expected 'key = value'");
    const std::string key(trim(line.substr(0, eq)));
    const std::string_view value = trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError(line_no, "missing key before '='");
    const KeyDef* def = find_key(section, key);
    const std::string where = section.empty() ? "top level" : "[" + section + "]";
    if (!def) throw ConfigError(line_no, "unknown key '" + key + "' in " + where);
    const std::string full = section.empty() ? key : section + "." + key;
    if (lines.count(full)) throw ConfigError(line_no, "duplicate key '" + key + "' in " + where);
    if (value.empty()) throw ConfigError(line_no, "missing value for '" + key + "'");
    try {
      def->set(cfg, value);
    } catch (const ParameterError& e) {
      throw ConfigError(line_no, key + ": " + e.what());
    }
    lines[full] = line_no;
  }
  validate(cfg, lines);
  return cfg;
}

std::string render_config(const ExperimentConfig& cfg) {
  std::ostringstream out;
  std::string section;
  for (const KeyDef& k : key_table()) {
    if (k.section != section) {
      section = k.section;
      out << "\n[" << section << "]\n";
    }
    const std::string value = k.get(cfg);
    if (value.empty()) continue;  // empty lists keep their default meaning
    out << k.name << " = " << value << '\n';
  }
  return out.str();
}

nlohmann::json config_to_json(const ExperimentConfig& cfg) {
  nlohmann::json doc;
  doc["experiment"] = std::string(to_string(cfg.experiment));
  doc["output"] = cfg.output;
  doc["master_seed"] = cfg.master_seed;
  const ProblemBlock& p = cfg.problem;
  doc["problem"] = {{"kind", std::string(to_string(p.kind))},
                    {"n", p.n},
                    {"d", p.d},
                    {"s", p.s},
                    {"seed", p.seed},
                    {"perturbation_scale", p.perturbation_scale}};
  const RunBlock& r = cfg.run;
  doc["run"] = {{"b", r.b},
                {"m", r.m},
                {"sharing", std::string(to_string(r.sharing))},
                {"strategy", std::string(to_string(r.strategy))},
                {"gradient", std::string(to_string(r.gradient))},
                {"gamma", r.gamma},
                {"steps", r.steps},
                {"epochs", r.epochs},
                {"runs", r.runs},
                {"record_every", r.record_every},
                {"reps", r.reps},
                {"budgets", r.budgets},
                {"heterogeneity", r.heterogeneity},
                {"radius", r.radius},
                {"audit_points", r.audit_points},
                {"audit_spread", r.audit_spread}};
  return doc;
}

std::string config_reference() {
  const ExperimentConfig defaults;
  std::ostringstream out;
  std::string section = "-";
  for (const KeyDef& k : key_table()) {
    if (k.section != section) {
      section = k.section;
      out << (section.empty() ? "top level" : "[" + section + "]") << '\n';
    }
    std::string value = k.get(defaults);
    if (k.name == "experiment") value = "(required)";
    if (k.name == "heterogeneity") value = "(problem.s)";
    std::string lhs = "  " + k.name + " = " + value;
    lhs.resize(std::max<std::size_t>(lhs.size() + 2, 32), ' ');
    out << lhs << k.help << '\n';
  }
  return out.str();
}

}  // namespace dsgd
