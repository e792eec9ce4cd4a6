#pragma once

// Alignment loss (kernel MMD between positives and steered negatives),
// positive-preservation, sparsity and orthogonality penalties, their
// weighted total, and the analytic gradient of that total with respect to
// every steering parameter.

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "matsteer/dataset.hpp"
#include "matsteer/errors.hpp"
#include "matsteer/gating.hpp"
#include "matsteer/parallel.hpp"
#include "matsteer/steering.hpp"
#include "matsteer/types.hpp"

namespace matsteer {

struct KernelConfig {
  double bandwidth = 2.0;

  void validate() const {
    if (!(bandwidth > 0.0) || !std::isfinite(bandwidth)) throw ConfigError("kernel bandwidth must be positive");
  }
  friend bool operator==(const KernelConfig&, const KernelConfig&) = default;
};

/// Which loss terms are active, plus whether steering renormalizes.
struct ComponentMask {
  bool mmd = true;
  bool pos = true;
  bool sparse = true;
  bool ortho = true;
  bool normalize = true;

  bool any_loss() const noexcept { return mmd || pos || sparse || ortho; }
  friend bool operator==(const ComponentMask&, const ComponentMask&) = default;
};

struct LossConfig {
  KernelConfig kernel;
  double lambda_pos = 0.9;
  double lambda_sparse = 0.9;
  double lambda_ortho = 0.1;
  ComponentMask mask;

  void validate() const {
    kernel.validate();
    for (double l : {lambda_pos, lambda_sparse, lambda_ortho})
      if (!(l >= 0.0) || !std::isfinite(l)) throw ConfigError("loss weights must be finite and nonnegative");
    if (!mask.any_loss()) throw ConfigError("at least one loss component must be enabled");
  }
  friend bool operator==(const LossConfig&, const LossConfig&) = default;
};

inline double kernel(const Vector& x, const Vector& y, const KernelConfig& cfg) {
  if (x.size() != y.size()) throw InputError("kernel: dimension mismatch");
  return std::exp(-(x - y).squaredNorm() / (2.0 * cfg.bandwidth * cfg.bandwidth));
}

namespace detail {

/// Sum over all (i, j) of k(xs[i], ys[j]); rows are reduced in index order so
/// the result is independent of the worker count.
inline double kernel_sum(std::span<const Vector> xs, std::span<const Vector> ys, const KernelConfig& cfg) {
  std::vector<double> rows(xs.size(), 0.0);
  parallel_for(
      xs.size(),
      [&](std::size_t i) {
        double s = 0.0;
        for (const auto& y : ys) s += kernel(xs[i], y, cfg);
        rows[i] = s;
      },
      256);
  double total = 0.0;
  for (double r : rows) total += r;
  return total;
}

inline std::vector<Vector> vectors_of(const std::vector<ActivationRecord>& bucket) {
  std::vector<Vector> out;
  out.reserve(bucket.size());
  for (const auto& r : bucket) out.push_back(r.vector);
  return out;
}

}  // namespace detail

/// Biased (V-statistic) squared MMD, self-pairs included.
inline double mmd2(std::span<const Vector> p, std::span<const Vector> q, const KernelConfig& cfg) {
  if (p.empty() || q.empty()) throw InputError("mmd2: both sample sets must be non-empty");
  const double np = static_cast<double>(p.size());
  const double nq = static_cast<double>(q.size());
  return detail::kernel_sum(p, p, cfg) / (np * np) + detail::kernel_sum(q, q, cfg) / (nq * nq) -
         2.0 * detail::kernel_sum(p, q, cfg) / (np * nq);
}

inline void check_alignment(const DatasetList& datasets, std::span<const AttributeParams> params) {
  if (datasets.size() != params.size())
    throw InputError("expected one parameter set per attribute (" + std::to_string(datasets.size()) +
                     " datasets, " + std::to_string(params.size()) + " parameter sets)");
}

inline double loss_mmd(const DatasetList& datasets, std::span<const AttributeParams> params,
                       const KernelConfig& kernel_cfg, bool renormalize) {
  check_alignment(datasets, params);
  double total = 0.0;
  for (const auto& ds : datasets) {
    const auto pos = detail::vectors_of(ds.positives);
    std::vector<Vector> edited;
    edited.reserve(ds.negatives.size());
    for (const auto& r : ds.negatives) edited.push_back(steer(r.vector, params, renormalize));
    total += mmd2(pos, edited, kernel_cfg);
  }
  return total;
}

inline double loss_mmd(const DatasetList& datasets, std::span<const AttributeParams> params, const LossConfig& cfg) {
  return loss_mmd(datasets, params, cfg.kernel, cfg.mask.normalize);
}

/// Sum over attributes of squared own-gate values on that attribute's positives.
inline double loss_pos(const DatasetList& datasets, std::span<const AttributeParams> params) {
  check_alignment(datasets, params);
  double total = 0.0;
  for (std::size_t t = 0; t < datasets.size(); ++t)
    for (const auto& r : datasets[t].positives) {
      const double g = gate(r.vector, params[t].gate);
      total += g * g;
    }
  return total;
}

/// Sum over attributes of own-gate values on that attribute's negatives.
inline double loss_sparse(const DatasetList& datasets, std::span<const AttributeParams> params) {
  check_alignment(datasets, params);
  double total = 0.0;
  for (std::size_t t = 0; t < datasets.size(); ++t)
    for (const auto& r : datasets[t].negatives) total += std::abs(gate(r.vector, params[t].gate));
  return total;
}

/// Below this norm a steering vector has no direction and its pairs contribute 0.
inline constexpr double kOrthoMinNorm = 1e-12;

/// Squared cosine similarity summed over ordered pairs t != t'.
inline double loss_ortho(std::span<const AttributeParams> params) {
  double total = 0.0;
  for (std::size_t t = 0; t < params.size(); ++t) {
    const double nt = params[t].theta.norm();
    if (nt < kOrthoMinNorm) continue;
    for (std::size_t u = 0; u < params.size(); ++u) {
      if (u == t) continue;
      const double nu = params[u].theta.norm();
      if (nu < kOrthoMinNorm) continue;
      const double c = params[t].theta.dot(params[u].theta) / (nt * nu);
      total += c * c;
    }
  }
  return total;
}

struct LossBreakdown {
  double total = 0.0;
  double mmd = 0.0;
  double pos = 0.0;
  double sparse = 0.0;
  double ortho = 0.0;
};

/// Every component (unweighted; disabled ones read 0) and the weighted total.
inline LossBreakdown evaluate_loss(const DatasetList& datasets, std::span<const AttributeParams> params,
                                   const LossConfig& cfg) {
  check_alignment(datasets, params);
  LossBreakdown out;
  if (cfg.mask.mmd) out.mmd = loss_mmd(datasets, params, cfg);
  if (cfg.mask.pos) out.pos = loss_pos(datasets, params);
  if (cfg.mask.sparse) out.sparse = loss_sparse(datasets, params);
  if (cfg.mask.ortho) out.ortho = loss_ortho(params);
  out.total = out.mmd + cfg.lambda_pos * out.pos + cfg.lambda_sparse * out.sparse + cfg.lambda_ortho * out.ortho;
  return out;
}

inline double loss_total(const DatasetList& datasets, std::span<const AttributeParams> params,
                         const LossConfig& cfg) {
  return evaluate_loss(datasets, params, cfg).total;
}

/// Gradient with the same shape as a ParamList.
struct AttributeGradient {
  Vector theta;
  Vector weight;
  double bias = 0.0;
};

using Gradient = std::vector<AttributeGradient>;

inline Gradient zero_gradient(std::span<const AttributeParams> params) {
  Gradient g;
  for (const auto& p : params)
    g.push_back({Vector::Zero(p.theta.size()), Vector::Zero(p.gate.weight.size()), 0.0});
  return g;
}

struct LossAndGradient {
  LossBreakdown loss;
  Gradient grad;
};

namespace detail {

/// Adds the MMD term of one attribute and its gradient.
inline double accumulate_mmd(const AttributeDataset& ds, std::span<const AttributeParams> params,
                             const KernelConfig& kernel_cfg, bool renormalize, Gradient& grad) {
  const auto pos = vectors_of(ds.positives);
  const std::size_t n_neg = ds.negatives.size();
  const std::size_t n_attr = params.size();
  if (pos.empty() || n_neg == 0) throw InputError("mmd2: both sample sets must be non-empty");

  // Forward pass for each negative: gates, raw edit, final edit.
  std::vector<std::vector<double>> gates(n_neg, std::vector<double>(n_attr));
  std::vector<Vector> raw(n_neg);
  std::vector<Vector> edited(n_neg);
  for (std::size_t j = 0; j < n_neg; ++j) {
    const Vector& a = ds.negatives[j].vector;
    check_params(a, params);
    raw[j] = a;
    for (std::size_t u = 0; u < n_attr; ++u) {
      gates[j][u] = gate(a, params[u].gate);
      raw[j] += gates[j][u] * params[u].theta;
    }
    edited[j] = renormalize ? normalize(a, raw[j]) : raw[j];
  }

  const double np = static_cast<double>(pos.size());
  const double nn = static_cast<double>(n_neg);
  const double inv_s2 = 1.0 / (kernel_cfg.bandwidth * kernel_cfg.bandwidth);
  const double value = detail::kernel_sum(pos, pos, kernel_cfg) / (np * np) +
                       detail::kernel_sum(edited, edited, kernel_cfg) / (nn * nn) -
                       2.0 * detail::kernel_sum(pos, edited, kernel_cfg) / (np * nn);

  // dL/d(edited_j); dk(x,y)/dx = -k(x,y) (x - y) / sigma^2.
  std::vector<Vector> upstream(n_neg);
  parallel_for(
      n_neg,
      [&](std::size_t j) {
        Vector g = Vector::Zero(edited[j].size());
        for (std::size_t i = 0; i < n_neg; ++i) {
          if (i == j) continue;
          const Vector diff = edited[j] - edited[i];
          g -= (2.0 / (nn * nn)) * inv_s2 * kernel(edited[j], edited[i], kernel_cfg) * diff;
        }
        for (const auto& p : pos) {
          const Vector diff = edited[j] - p;
          g += (2.0 / (np * nn)) * inv_s2 * kernel(p, edited[j], kernel_cfg) * diff;
        }
        upstream[j] = std::move(g);
      },
      64);

  for (std::size_t j = 0; j < n_neg; ++j) {
    const Vector& a = ds.negatives[j].vector;
    Vector d_raw = upstream[j];
    if (renormalize) {
      // edited = raw * |a| / |raw|
      const double raw_norm = raw[j].norm();
      const double scale = a.norm() / raw_norm;
      d_raw = scale * (upstream[j] - raw[j] * (raw[j].dot(upstream[j]) / (raw_norm * raw_norm)));
    }
    for (std::size_t u = 0; u < n_attr; ++u) {
      const double g = gates[j][u];
      grad[u].theta += g * d_raw;
      const double d_pre = params[u].theta.dot(d_raw) * g * (1.0 - g);
      grad[u].weight += d_pre * a;
      grad[u].bias += d_pre;
    }
  }
  return value;
}

}  // namespace detail

inline LossAndGradient loss_and_grad(const DatasetList& datasets, std::span<const AttributeParams> params,
                                     const LossConfig& cfg) {
  check_alignment(datasets, params);
  LossAndGradient out{{}, zero_gradient(params)};
  Gradient& grad = out.grad;
  LossBreakdown& loss = out.loss;

  if (cfg.mask.mmd) {
    Gradient mmd_grad = zero_gradient(params);
    for (const auto& ds : datasets)
      loss.mmd += detail::accumulate_mmd(ds, params, cfg.kernel, cfg.mask.normalize, mmd_grad);
    for (std::size_t t = 0; t < params.size(); ++t) {
      grad[t].theta += mmd_grad[t].theta;
      grad[t].weight += mmd_grad[t].weight;
      grad[t].bias += mmd_grad[t].bias;
    }
  }

  for (std::size_t t = 0; t < datasets.size(); ++t) {
    const auto& gp = params[t].gate;
    if (cfg.mask.pos) {
      for (const auto& r : datasets[t].positives) {
        const double g = gate(r.vector, gp);
        loss.pos += g * g;
        const double d_pre = cfg.lambda_pos * 2.0 * g * g * (1.0 - g);
        grad[t].weight += d_pre * r.vector;
        grad[t].bias += d_pre;
      }
    }
    if (cfg.mask.sparse) {
      for (const auto& r : datasets[t].negatives) {
        const double g = gate(r.vector, gp);
        loss.sparse += g;
        const double d_pre = cfg.lambda_sparse * g * (1.0 - g);
        grad[t].weight += d_pre * r.vector;
        grad[t].bias += d_pre;
      }
    }
  }

  if (cfg.mask.ortho) {
    loss.ortho = loss_ortho(params);
    // d/d theta_t of sum over ordered pairs = 4 sum_{u != t} c_tu dc_tu/d theta_t.
    for (std::size_t t = 0; t < params.size(); ++t) {
      const Vector& th = params[t].theta;
      const double nt = th.norm();
      if (nt < kOrthoMinNorm) continue;
      for (std::size_t u = 0; u < params.size(); ++u) {
        if (u == t) continue;
        const Vector& tu = params[u].theta;
        const double nu = tu.norm();
        if (nu < kOrthoMinNorm) continue;
        const double c = th.dot(tu) / (nt * nu);
        const Vector dc = tu / (nt * nu) - c * th / (nt * nt);
        grad[t].theta += cfg.lambda_ortho * 4.0 * c * dc;
      }
    }
  }

  loss.total = loss.mmd + cfg.lambda_pos * loss.pos + cfg.lambda_sparse * loss.sparse +
               cfg.lambda_ortho * loss.ortho;
  return out;
}

inline Gradient grad_total(const DatasetList& datasets, std::span<const AttributeParams> params,
                           const LossConfig& cfg) {
  return loss_and_grad(datasets, params, cfg).grad;
}

}  // namespace matsteer
