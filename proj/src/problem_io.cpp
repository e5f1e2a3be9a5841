#include "dsgd/problem_io.hpp"

#include <string>

namespace dsgd {

using nlohmann::json;

json problem_to_json(const ProblemSpec& p) {
  json doc;
  doc["kind"] = std::string(to_string(p.kind));
  doc["n"] = p.n;
  doc["d"] = p.d;
  doc["seed"] = p.seed;
  switch (p.kind) {
    case ProblemKind::quadratic: {
      const auto& q = p.quadratic();
      doc["s"] = q.heterogeneity;
      doc["smoothness"] = q.smoothness;
      doc["centers"] = q.centers;
      break;
    }
    case ProblemKind::smoothing_erm: {
      const auto& s = p.smoothing_erm();
      doc["perturbation_scale"] = s.perturbation_scale;
      doc["features"] = s.features;
      doc["labels"] = s.labels;
      doc["jacobian_bounds"] = s.jacobian_bounds;
      break;
    }
    case ProblemKind::reparam: {
      const auto& r = p.reparam();
      doc["latent_dim"] = r.latent_dim;
      doc["base_kurtosis"] = r.base_kurtosis;
      doc["smoothness"] = r.smoothness;
      doc["targets"] = r.targets;
      break;
    }
  }
  return doc;
}

ProblemSpec problem_from_json(const json& doc) {
  try {
    const ProblemKind kind = parse_problem_kind(doc.at("kind").get<std::string>());
    const auto seed = doc.at("seed").get<std::uint64_t>();
    ProblemSpec p;
    switch (kind) {
      case ProblemKind::quadratic:
        p = quadratic_problem(doc.at("smoothness").get<Vec>(),
                              doc.at("centers").get<std::vector<Vec>>(),
                              doc.at("s").get<double>(), seed);
        break;
      case ProblemKind::smoothing_erm:
        p = smoothing_erm_problem(doc.at("features").get<std::vector<Vec>>(),
                                  doc.at("labels").get<Vec>(),
                                  doc.at("perturbation_scale").get<double>(), seed);
        break;
      case ProblemKind::reparam:
        p = reparam_problem(doc.at("targets").get<std::vector<Vec>>(),
                            doc.at("smoothness").get<Vec>(), seed);
        break;
    }
    require(doc.at("n").get<std::size_t>() == p.n && doc.at("d").get<std::size_t>() == p.d,
            "problem JSON: n/d do not match the component arrays");
    return p;
  } catch (const json::exception& e) {
    throw ParameterError(std::string("problem JSON: ") + e.what());
  }
}

}  // namespace dsgd
