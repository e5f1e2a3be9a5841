#include "dsgd/common.hpp"

namespace dsgd {

std::string_view to_string(SamplingKind kind) {
  return kind == SamplingKind::with_replacement ? "with_replacement" : "without_replacement";
}

std::string_view to_string(Sharing sharing) {
  return sharing == Sharing::shared ? "shared" : "independent";
}

SamplingKind parse_sampling_kind(std::string_view text) {
  if (text == "with_replacement") return SamplingKind::with_replacement;
  if (text == "without_replacement") return SamplingKind::without_replacement;
  throw ParameterError("unknown sampling strategy '" + std::string(text) +
                       "' (expected with_replacement or without_replacement)");
}

Sharing parse_sharing(std::string_view text) {
  if (text == "shared") return Sharing::shared;
  if (text == "independent") return Sharing::independent;
  throw ParameterError("unknown sharing policy '" + std::string(text) +
                       "' (expected shared or independent)");
}

}  // namespace dsgd
