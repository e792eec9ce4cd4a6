#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "matsteer/errors.hpp"
#include "matsteer/types.hpp"

namespace matsteer {

/// Per-attribute gate: sigmoid(weight . a + bias).
struct GateParams {
  Vector weight;
  double bias = 0.0;

  static GateParams zeros(int dim) { return {Vector::Zero(dim), 0.0}; }

  friend bool operator==(const GateParams& a, const GateParams& b) {
    return a.bias == b.bias && a.weight.size() == b.weight.size() && a.weight == b.weight;
  }
};

/// Sigmoid that never evaluates exp of a positive argument.
inline double stable_sigmoid(double x) noexcept {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline double gate_preactivation(const Vector& a, const GateParams& p) {
  if (a.size() != p.weight.size())
    throw InputError("gate dimension mismatch: activation has " + std::to_string(a.size()) +
                     " entries, weight has " + std::to_string(p.weight.size()));
  return p.weight.dot(a) + p.bias;
}

/// Clamped into the open interval (0, 1) so saturated gates stay representable
/// as strictly inside the range.
inline double gate(const Vector& a, const GateParams& p) {
  constexpr double lo = std::numeric_limits<double>::denorm_min();
  const double hi = std::nextafter(1.0, 0.0);
  return std::clamp(stable_sigmoid(gate_preactivation(a, p)), lo, hi);
}

/// Entry (i, t) is gate(activations[i], params[t]).
inline Matrix gate_batch(std::span<const Vector> activations, std::span<const GateParams> params) {
  Matrix out(static_cast<Eigen::Index>(activations.size()), static_cast<Eigen::Index>(params.size()));
  for (std::size_t i = 0; i < activations.size(); ++i)
    for (std::size_t t = 0; t < params.size(); ++t)
      out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(t)) = gate(activations[i], params[t]);
  return out;
}

}  // namespace matsteer
