#pragma once

#include <json.hpp>

#include "dsgd/problems.hpp"

namespace dsgd {

/// JSON form of an instance: kind, n, d, seed, parameters and the realized
/// per-component arrays. Doubles round-trip exactly.
nlohmann::json problem_to_json(const ProblemSpec& p);

/// Rebuilds an instance from its JSON form without touching any RNG.
ProblemSpec problem_from_json(const nlohmann::json& doc);

}  // namespace dsgd
