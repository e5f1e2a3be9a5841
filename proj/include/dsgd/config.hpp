#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "dsgd/common.hpp"
#include "dsgd/estimators.hpp"
#include "dsgd/problems.hpp"

namespace dsgd {

enum class Experiment { variance_sweep, sgd_trace, sgd_rr_trace, bound_audit, constants };

std::string_view to_string(Experiment e);
Experiment parse_experiment(std::string_view text);
const std::vector<Experiment>& all_experiments();
std::string_view describe(Experiment e);

/// A config problem. Carries the 1-based line it refers to (0 if none).
class ConfigError : public ParameterError {
 public:
  ConfigError(std::size_t line, const std::string& message);
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

struct ProblemBlock {
  ProblemKind kind = ProblemKind::quadratic;
  std::size_t n = 64;
  std::size_t d = 10;  // latent dimension d_z for reparam
  double s = 1.0;
  std::uint64_t seed = 0;
  double perturbation_scale = 1.0;

  bool operator==(const ProblemBlock&) const = default;
};

struct RunBlock {
  std::size_t b = 1;
  std::size_t m = 1;
  Sharing sharing = Sharing::shared;
  SamplingKind strategy = SamplingKind::without_replacement;
  GradientMode gradient = GradientMode::monte_carlo;
  std::vector<double> gamma{0.01};
  std::size_t steps = 1000;
  std::size_t epochs = 100;
  std::size_t runs = 1;
  std::size_t record_every = 1;
  std::size_t reps = 10000;
  std::vector<std::size_t> budgets{16, 128, 1024};
  std::vector<double> heterogeneity;  // empty: just problem.s
  double radius = 0.0;                // 0: unconstrained, else ball around the origin
  std::size_t audit_points = 5;
  double audit_spread = 1.0;

  bool operator==(const RunBlock&) const = default;
};

struct ExperimentConfig {
  Experiment experiment = Experiment::variance_sweep;
  std::string output = "results";
  std::uint64_t master_seed = 0;
  ProblemBlock problem;
  RunBlock run;

  bool operator==(const ExperimentConfig&) const = default;
};

/// Parses and validates a config document (grammar in docs/config.md).
/// Throws ConfigError naming the offending line.
ExperimentConfig parse_config(std::string_view text);

/// Canonical text form; parse_config(render_config(c)) == c.
std::string render_config(const ExperimentConfig& cfg);

/// Structured echo for manifests.
nlohmann::json config_to_json(const ExperimentConfig& cfg);

/// Every key with its default, as shown by --help.
std::string config_reference();

}  // namespace dsgd
