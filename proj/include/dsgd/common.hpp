#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace dsgd {

using Vec = std::vector<double>;

/// Raised when an argument violates an operation's precondition
/// (dimensions, batch size larger than the population, b not dividing n, ...).
class ParameterError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when an operation has no closed form for the given problem kind.
class UnsupportedError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

enum class SamplingKind { with_replacement, without_replacement };
enum class Sharing { shared, independent };

std::string_view to_string(SamplingKind kind);
std::string_view to_string(Sharing sharing);
SamplingKind parse_sampling_kind(std::string_view text);
Sharing parse_sharing(std::string_view text);

inline void require(bool cond, const std::string& message) {
  if (!cond) throw ParameterError(message);
}

// Small dense vector helpers. Dimensions here are tiny (d <= a few dozen),
// so plain loops over spans are all we need.

inline double dot(std::span<const double> a, std::span<const double> b) {
  double acc = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) acc += a[k] * b[k];
  return acc;
}

inline double norm_sq(std::span<const double> a) { return dot(a, a); }

inline double dist_sq(std::span<const double> a, std::span<const double> b) {
  double acc = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    const double t = a[k] - b[k];
    acc += t * t;
  }
  return acc;
}

/// y += alpha * x
inline void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  for (std::size_t k = 0; k < x.size(); ++k) y[k] += alpha * x[k];
}

inline void scale(std::span<double> x, double alpha) {
  for (double& v : x) v *= alpha;
}

inline bool all_finite(std::span<const double> x) {
  for (double v : x)
    if (!std::isfinite(v)) return false;
  return true;
}

}  // namespace dsgd
