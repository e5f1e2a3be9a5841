#pragma once

#include <cstddef>
#include <string>

#include <json.hpp>

#include "dsgd/config.hpp"
#include "dsgd/csv.hpp"
#include "dsgd/problems.hpp"

namespace dsgd {

inline constexpr const char* tool_version = "1.0.0";

struct RunOptions {
  std::size_t threads = 1;
};

/// Instance described by a [problem] block.
ProblemSpec build_instance(const ProblemBlock& block);

/// Runs one experiment on `instance` and returns its results table. Output is
/// a pure function of (cfg, instance): thread count only changes speed.
CsvTable run_experiment(const ExperimentConfig& cfg, const ProblemSpec& instance,
                        const RunOptions& options = {});

/// Manifest: canonical config text, structured config echo, serialized
/// instance, tool version and wall time.
nlohmann::json make_manifest(const ExperimentConfig& cfg, const ProblemSpec& instance,
                             double wall_seconds);

struct LoadedManifest {
  ExperimentConfig config;
  ProblemSpec instance;
};

LoadedManifest load_manifest(const nlohmann::json& manifest);

}  // namespace dsgd
