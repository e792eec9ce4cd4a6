#pragma once

// Gated multi-attribute steering, norm-preserving renormalization and the
// single-vector baseline edits.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "matsteer/errors.hpp"
#include "matsteer/gating.hpp"
#include "matsteer/rng.hpp"
#include "matsteer/types.hpp"

namespace matsteer {

struct AttributeParams {
  Vector theta;
  GateParams gate;
  int attribute_id = 0;

  static AttributeParams zeros(int dim, int attribute_id) {
    return {Vector::Zero(dim), GateParams::zeros(dim), attribute_id};
  }

  friend bool operator==(const AttributeParams& a, const AttributeParams& b) {
    return a.attribute_id == b.attribute_id && a.gate == b.gate && a.theta.size() == b.theta.size() &&
           a.theta == b.theta;
  }
};

using ParamList = std::vector<AttributeParams>;

inline ParamList zero_params(int n_attributes, int dim) {
  ParamList out;
  for (int t = 0; t < n_attributes; ++t) out.push_back(AttributeParams::zeros(dim, t));
  return out;
}

inline constexpr double kMinEditNorm = 1e-12;

inline void check_params(const Vector& a, std::span<const AttributeParams> params) {
  if (params.empty()) throw InputError("steering needs at least one attribute");
  for (const auto& p : params)
    if (p.theta.size() != a.size() || p.gate.weight.size() != a.size())
      throw InputError("steering dimension mismatch: activation has " + std::to_string(a.size()) +
                       " entries, attribute " + std::to_string(p.attribute_id) + " has theta " +
                       std::to_string(p.theta.size()) + " / gate " + std::to_string(p.gate.weight.size()));
}

/// Rescales `edited` to the norm of `original`.
inline Vector normalize(const Vector& original, const Vector& edited) {
  if (original.size() != edited.size()) throw InputError("normalize: dimension mismatch");
  const double edited_norm = edited.norm();
  if (!(edited_norm >= kMinEditNorm))
    throw NumericError("normalize: edited activation has norm " + std::to_string(edited_norm) +
                       ", direction undefined");
  return edited * (original.norm() / edited_norm);
}

/// a + sum_t gate_t(a) * theta_t, with every gate read from the unedited a.
inline Vector steer_raw(const Vector& a, std::span<const AttributeParams> params) {
  check_params(a, params);
  Vector out = a;
  for (const auto& p : params) out += gate(a, p.gate) * p.theta;
  return out;
}

inline Vector steer(const Vector& a, std::span<const AttributeParams> params) {
  return normalize(a, steer_raw(a, params));
}

inline Vector steer(const Vector& a, std::span<const AttributeParams> params, bool renormalize) {
  return renormalize ? steer(a, params) : steer_raw(a, params);
}

/// Same edit with externally chosen gate values (one per attribute); used by
/// the token-selection baselines that replace the learned gate by a hard mask.
inline Vector steer_with_gates(const Vector& a, std::span<const AttributeParams> params,
                               std::span<const double> gates, bool renormalize) {
  check_params(a, params);
  if (gates.size() != params.size()) throw InputError("one gate value per attribute required");
  Vector out = a;
  for (std::size_t t = 0; t < params.size(); ++t) out += gates[t] * params[t].theta;
  return renormalize ? normalize(a, out) : out;
}

enum class BaselineMode { kSingleGlobal, kSummed, kUniformAll, kLastToken, kRandomTokens };

inline std::string_view to_string(BaselineMode m) noexcept {
  switch (m) {
    case BaselineMode::kSingleGlobal: return "single_global";
    case BaselineMode::kSummed: return "summed";
    case BaselineMode::kUniformAll: return "uniform_all";
    case BaselineMode::kLastToken: return "last_token";
    case BaselineMode::kRandomTokens: return "random_tokens";
  }
  return "unknown";
}

struct BaselineConfig {
  double alpha = 1.0;
  BaselineMode mode = BaselineMode::kSingleGlobal;
  std::uint64_t random_seed = 0;
};

/// a + alpha * theta. No gating and no renormalization.
inline Vector baseline_edit(const Vector& a, const Vector& theta, const BaselineConfig& cfg) {
  if (a.size() != theta.size()) throw InputError("baseline_edit: dimension mismatch");
  if (!std::isfinite(cfg.alpha)) throw InputError("baseline_edit: alpha must be finite");
  return a + cfg.alpha * theta;
}

inline Vector summed_vector(std::span<const AttributeParams> params) {
  if (params.empty()) throw InputError("summed_vector needs at least one attribute");
  Vector sum = Vector::Zero(params.front().theta.size());
  for (const auto& p : params) {
    if (p.theta.size() != sum.size()) throw InputError("summed_vector: dimension mismatch");
    sum += p.theta;
  }
  return sum;
}

inline constexpr double kRandomTokenFraction = 0.5;

/// Token positions a baseline intervenes on. random_tokens draws
/// ceil(0.5 * seq_len) distinct positions, fixed per seed.
inline std::set<std::size_t> select_tokens(std::size_t seq_len, BaselineMode mode, std::uint64_t seed) {
  if (seq_len == 0) throw InputError("select_tokens: empty sequence");
  std::set<std::size_t> out;
  switch (mode) {
    case BaselineMode::kLastToken:
      out.insert(seq_len - 1);
      break;
    case BaselineMode::kRandomTokens: {
      const auto k = static_cast<std::size_t>(std::ceil(kRandomTokenFraction * static_cast<double>(seq_len)));
      std::vector<std::size_t> idx(seq_len);
      for (std::size_t i = 0; i < seq_len; ++i) idx[i] = i;
      Rng rng(seed);
      rng.shuffle(std::span<std::size_t>(idx));
      out.insert(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k));
      break;
    }
    default:
      for (std::size_t i = 0; i < seq_len; ++i) out.insert(i);
  }
  return out;
}

}  // namespace matsteer
