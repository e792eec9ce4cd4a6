#pragma once

// Mini-batch optimization of the steering parameters plus the layer,
// loss-weight and component-ablation searches built on top of it.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "matsteer/dataset.hpp"
#include "matsteer/errors.hpp"
#include "matsteer/metrics.hpp"
#include "matsteer/objectives.hpp"
#include "matsteer/parallel.hpp"
#include "matsteer/rng.hpp"
#include "matsteer/steering.hpp"

namespace matsteer {

enum class Optimizer { kSgd, kAdam };

/// Starting points for the steering vectors and the gates.
enum class ThetaInit { kZero, kMeanDifference };
enum class GateInit { kZero, kLogisticWarmStart };

struct TrainConfig {
  int batch_pos_per_attr = 16;
  int batch_neg_per_attr = 16;
  double learning_rate = 0.05;
  int max_epochs = 200;
  std::uint64_t seed = 0;
  LossConfig loss;
  int early_stop_patience = 20;
  Optimizer optimizer = Optimizer::kSgd;
  ThetaInit theta_init = ThetaInit::kMeanDifference;
  GateInit gate_init = GateInit::kLogisticWarmStart;

  void validate() const {
    if (batch_pos_per_attr <= 0 || batch_neg_per_attr <= 0) throw ConfigError("batch sizes must be positive");
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw ConfigError("learning rate must be positive");
    if (max_epochs <= 0) throw ConfigError("max_epochs must be positive");
    if (early_stop_patience < 0) throw ConfigError("early_stop_patience must be nonnegative");
    loss.validate();
  }
};

struct TrainTrace {
  std::vector<LossBreakdown> steps;
  std::vector<double> dev_loss;  // one entry per epoch when a dev split is given
  ParamList final_params;
  int epochs_run = 0;
};

/// Loss weights scaled for desk-size batches: the pos/sparse penalties are
/// sums over the batch, so 0.9 swamps an MMD term bounded by 2.
inline TrainConfig desk_train_config() {
  TrainConfig cfg;
  cfg.loss.lambda_pos = 0.005;
  cfg.loss.lambda_sparse = 0.005;
  cfg.loss.lambda_ortho = 0.1;
  return cfg;
}

/// Trainable scalar count: T * (2d + 1).
inline std::size_t trainable_parameter_count(const ParamList& params) {
  std::size_t n = 0;
  for (const auto& p : params) n += static_cast<std::size_t>(p.theta.size() + p.gate.weight.size()) + 1;
  return n;
}

/// Balanced batches for one epoch: every batch holds exactly the configured
/// number of positives and negatives for every attribute, drawn without
/// replacement from a per-(seed, epoch) shuffle of each bucket.
inline std::vector<DatasetList> make_batches(const DatasetList& datasets, const TrainConfig& cfg,
                                             std::uint64_t epoch) {
  if (datasets.empty()) throw ConfigError("no attributes to batch");
  std::size_t n_batches = std::numeric_limits<std::size_t>::max();
  for (const auto& ds : datasets) {
    if (ds.positives.size() < static_cast<std::size_t>(cfg.batch_pos_per_attr) ||
        ds.negatives.size() < static_cast<std::size_t>(cfg.batch_neg_per_attr))
      throw ConfigError("attribute " + std::to_string(ds.attribute_id) + " has " +
                        std::to_string(ds.positives.size()) + " positives / " +
                        std::to_string(ds.negatives.size()) + " negatives, fewer than the batch quota " +
                        std::to_string(cfg.batch_pos_per_attr) + "/" + std::to_string(cfg.batch_neg_per_attr));
    n_batches = std::min({n_batches, ds.positives.size() / static_cast<std::size_t>(cfg.batch_pos_per_attr),
                          ds.negatives.size() / static_cast<std::size_t>(cfg.batch_neg_per_attr)});
  }

  const std::uint64_t epoch_seed = mix_seed(cfg.seed, epoch);
  std::vector<DatasetList> batches(n_batches);
  for (auto& b : batches) {
    b.resize(datasets.size());
    for (std::size_t t = 0; t < datasets.size(); ++t) b[t].attribute_id = datasets[t].attribute_id;
  }
  for (std::size_t t = 0; t < datasets.size(); ++t) {
    auto deal = [&](const std::vector<ActivationRecord>& bucket, std::size_t quota, std::uint64_t tag, bool positive) {
      std::vector<std::size_t> order(bucket.size());
      for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
      Rng rng(mix_seed(epoch_seed, tag));
      rng.shuffle(std::span<std::size_t>(order));
      for (std::size_t b = 0; b < n_batches; ++b) {
        auto& dst = positive ? batches[b][t].positives : batches[b][t].negatives;
        for (std::size_t k = 0; k < quota; ++k) dst.push_back(bucket[order[b * quota + k]]);
      }
    };
    deal(datasets[t].positives, static_cast<std::size_t>(cfg.batch_pos_per_attr), 2 * t, true);
    deal(datasets[t].negatives, static_cast<std::size_t>(cfg.batch_neg_per_attr), 2 * t + 1, false);
  }
  return batches;
}

inline constexpr double kWarmStartRidge = 1e-2;
inline constexpr int kWarmStartIterations = 12;

/// Class-balanced, ridge-regularized logistic fit (Newton iterations) of
/// "negative of attribute t" against every other training record. Returns
/// zero gate parameters when attribute t's two buckets coincide.
inline GateParams warm_start_gate(const DatasetList& datasets, std::size_t t) {
  const int d = dimension_of(datasets);
  if ((mean_of(datasets[t].positives) - mean_of(datasets[t].negatives)).norm() < kOrthoMinNorm)
    return GateParams::zeros(d);
  std::vector<const Vector*> xs;
  std::vector<double> ys;
  for (std::size_t u = 0; u < datasets.size(); ++u) {
    for (const auto& r : datasets[u].positives) {
      xs.push_back(&r.vector);
      ys.push_back(0.0);
    }
    for (const auto& r : datasets[u].negatives) {
      xs.push_back(&r.vector);
      ys.push_back(u == t ? 1.0 : 0.0);
    }
  }
  const double n_pos = static_cast<double>(datasets[t].negatives.size());
  const double n_neg = static_cast<double>(xs.size()) - n_pos;
  // Augmented coefficients (weight, bias).
  Vector beta = Vector::Zero(d + 1);
  for (int it = 0; it < kWarmStartIterations; ++it) {
    Matrix hess = Matrix::Zero(d + 1, d + 1);
    Vector grad = Vector::Zero(d + 1);
    for (std::size_t i = 0; i < xs.size(); ++i) {
      Vector z(d + 1);
      z.head(d) = *xs[i];
      z[d] = 1.0;
      const double w = ys[i] > 0.5 ? 0.5 / n_pos : 0.5 / n_neg;
      const double p = stable_sigmoid(beta.dot(z));
      grad += w * (p - ys[i]) * z;
      hess += w * p * (1.0 - p) * z * z.transpose();
    }
    grad.head(d) += kWarmStartRidge * beta.head(d);
    hess.topLeftCorner(d, d) += kWarmStartRidge * Matrix::Identity(d, d);
    hess(d, d) += 1e-9;
    beta -= hess.ldlt().solve(grad);
  }
  return {beta.head(d), beta[d]};
}

namespace detail {

class Stepper {
 public:
  Stepper(const TrainConfig& cfg, const ParamList& params) : cfg_(cfg) {
    if (cfg.optimizer == Optimizer::kAdam) {
      m_ = zero_gradient(params);
      v_ = zero_gradient(params);
    }
  }

  void apply(ParamList& params, const Gradient& g) {
    const double lr = cfg_.learning_rate;
    if (cfg_.optimizer == Optimizer::kSgd) {
      for (std::size_t t = 0; t < params.size(); ++t) {
        params[t].theta -= lr * g[t].theta;
        params[t].gate.weight -= lr * g[t].weight;
        params[t].gate.bias -= lr * g[t].bias;
      }
      return;
    }
    constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    ++step_;
    const double c1 = 1.0 - std::pow(b1, step_);
    const double c2 = 1.0 - std::pow(b2, step_);
    auto update = [&](Vector& param, Vector& m, Vector& v, const Vector& grad) {
      m = b1 * m + (1 - b1) * grad;
      v = b2 * v + (1 - b2) * grad.cwiseProduct(grad);
      param.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
    };
    for (std::size_t t = 0; t < params.size(); ++t) {
      update(params[t].theta, m_[t].theta, v_[t].theta, g[t].theta);
      update(params[t].gate.weight, m_[t].weight, v_[t].weight, g[t].weight);
      m_[t].bias = b1 * m_[t].bias + (1 - b1) * g[t].bias;
      v_[t].bias = b2 * v_[t].bias + (1 - b2) * g[t].bias * g[t].bias;
      params[t].gate.bias -= lr * (m_[t].bias / c1) / (std::sqrt(v_[t].bias / c2) + eps);
    }
  }

 private:
  const TrainConfig& cfg_;
  Gradient m_, v_;
  int step_ = 0;
};

inline bool finite(const LossBreakdown& l) {
  return std::isfinite(l.total) && std::isfinite(l.mmd) && std::isfinite(l.pos) && std::isfinite(l.sparse) &&
         std::isfinite(l.ortho);
}

}  // namespace detail

/// Optimizes the steering parameters from `theta_init`/`gate_init`. With a dev split, stops
/// after `early_stop_patience` epochs without dev-loss improvement and
/// returns the best dev-loss parameters.
inline TrainTrace train(const DatasetList& datasets, const TrainConfig& cfg, const DatasetList* dev = nullptr) {
  cfg.validate();
  validate_datasets(datasets, true);
  if (dev != nullptr && dev->size() != datasets.size())
    throw ConfigError("dev split has a different attribute count");
  const int d = dimension_of(datasets);

  TrainTrace trace;
  ParamList params = zero_params(static_cast<int>(datasets.size()), d);
  if (cfg.theta_init == ThetaInit::kMeanDifference)
    for (std::size_t t = 0; t < datasets.size(); ++t)
      params[t].theta = mean_of(datasets[t].positives) - mean_of(datasets[t].negatives);
  if (cfg.gate_init == GateInit::kLogisticWarmStart)
    for (std::size_t t = 0; t < datasets.size(); ++t) params[t].gate = warm_start_gate(datasets, t);
  detail::Stepper stepper(cfg, params);
  ParamList best = params;
  double best_dev = std::numeric_limits<double>::infinity();
  int since_best = 0;

  for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    for (const auto& batch : make_batches(datasets, cfg, static_cast<std::uint64_t>(epoch))) {
      LossAndGradient lg;
      try {
        lg = loss_and_grad(batch, params, cfg.loss);
      } catch (const NumericError& e) {
        throw TrainingError(e.what(), trace.steps.size());
      }
      if (!detail::finite(lg.loss)) throw TrainingError("non-finite loss", trace.steps.size());
      trace.steps.push_back(lg.loss);
      stepper.apply(params, lg.grad);
    }
    trace.epochs_run = epoch + 1;
    if (dev != nullptr) {
      double dev_loss = 0.0;
      try {
        dev_loss = loss_total(*dev, params, cfg.loss);
      } catch (const NumericError& e) {
        throw TrainingError(std::string("dev split: ") + e.what(), trace.steps.size());
      }
      if (!std::isfinite(dev_loss)) throw TrainingError("non-finite dev loss", trace.steps.size());
      trace.dev_loss.push_back(dev_loss);
      if (dev_loss < best_dev) {
        best_dev = dev_loss;
        best = params;
        since_best = 0;
      } else if (++since_best >= cfg.early_stop_patience && cfg.early_stop_patience > 0) {
        break;
      }
    }
  }
  trace.final_params = dev != nullptr ? best : params;
  return trace;
}

/// Mean per-attribute flip rate on `dev`, centroids taken from `train`.
inline double dev_metric(const DatasetList& train_split, const DatasetList& dev, const ParamList& params,
                         bool renormalize) {
  const auto rates = flip_rates(dev, matsteer_editor(params, renormalize), compute_centroids(train_split));
  return mean(rates);
}

inline std::string trace_csv(const TrainTrace& trace) {
  std::ostringstream out;
  out << "step,loss_total,loss_mmd,loss_pos,loss_sparse,loss_ortho\n";
  for (std::size_t i = 0; i < trace.steps.size(); ++i) {
    const auto& s = trace.steps[i];
    out << i << ',' << detail::shortest(s.total) << ',' << detail::shortest(s.mmd) << ','
        << detail::shortest(s.pos) << ',' << detail::shortest(s.sparse) << ',' << detail::shortest(s.ortho)
        << '\n';
  }
  return out.str();
}

// ---------------------------------------------------------------------------
// Splits

struct SplitIndices {
  std::vector<std::size_t> train, dev, test;
};

/// Shuffled 40/10/50 partition of [0, n).
inline SplitIndices split_40_10_50(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(seed);
  rng.shuffle(std::span<std::size_t>(order));
  const auto n_train = static_cast<std::size_t>(std::llround(0.4 * static_cast<double>(n)));
  const auto n_dev = static_cast<std::size_t>(std::llround(0.1 * static_cast<double>(n)));
  SplitIndices s;
  s.train.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
  s.dev.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train),
               order.begin() + static_cast<std::ptrdiff_t>(n_train + n_dev));
  s.test.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train + n_dev), order.end());
  return s;
}

struct SequenceSplits {
  std::vector<LabeledSequence> train, dev, test;
};

/// 40/10/50 split applied within every (attribute, polarity) group.
inline SequenceSplits split_sequences(const std::vector<LabeledSequence>& sequences, std::uint64_t seed) {
  std::map<std::pair<int, int>, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < sequences.size(); ++i)
    groups[{sequences[i].attribute_id, static_cast<int>(sequences[i].polarity)}].push_back(i);
  SequenceSplits out;
  for (const auto& [key, members] : groups) {
    const auto s = split_40_10_50(members.size(),
                                  mix_seed(seed, static_cast<std::uint64_t>(key.first * 2 + key.second)));
    for (auto i : s.train) out.train.push_back(sequences[members[i]]);
    for (auto i : s.dev) out.dev.push_back(sequences[members[i]]);
    for (auto i : s.test) out.test.push_back(sequences[members[i]]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Searches

struct LayerSearchResult {
  int best_layer = -1;
  std::vector<int> layers;
  std::vector<double> metrics;
};

/// Trains once per candidate layer and keeps the layer with the highest dev
/// flip rate (ties go to the lowest layer index).
template <typename Model>
LayerSearchResult grid_search_layer(const Model& model, const std::vector<LabeledSequence>& sequences,
                                    const std::vector<int>& layers, const TrainConfig& cfg) {
  if (layers.empty()) throw ConfigError("layer search range is empty");
  for (int l : layers) model.check_layer(l);
  int n_attributes = 0;
  for (const auto& s : sequences) n_attributes = std::max(n_attributes, s.attribute_id + 1);
  const auto splits = split_sequences(sequences, mix_seed(cfg.seed, 0x5EED));

  LayerSearchResult out;
  out.layers = layers;
  out.metrics.assign(layers.size(), 0.0);
  parallel_for(layers.size(), [&](std::size_t i) {
    const auto train_sets = build_dataset(model, layers[i], splits.train, n_attributes);
    const auto dev_sets = build_dataset(model, layers[i], splits.dev, n_attributes);
    const auto trace = train(train_sets, cfg, &dev_sets);
    out.metrics[i] = dev_metric(train_sets, dev_sets, trace.final_params, cfg.loss.mask.normalize);
  });
  std::size_t best = 0;
  for (std::size_t i = 1; i < layers.size(); ++i)
    if (out.metrics[i] > out.metrics[best] || (out.metrics[i] == out.metrics[best] && layers[i] < layers[best]))
      best = i;
  out.best_layer = layers[best];
  return out;
}

struct NamedMask {
  std::string label;
  ComponentMask mask;
};

/// Rows of the component ablation, in table order.
inline std::vector<NamedMask> standard_ablation_masks() {
  auto m = [](bool mmd, bool pos, bool sparse, bool ortho, bool norm) {
    return ComponentMask{mmd, pos, sparse, ortho, norm};
  };
  return {
      {"alignment", m(true, false, false, false, true)},
      {"alignment+pos", m(true, true, false, false, true)},
      {"alignment+sparse", m(true, false, true, false, true)},
      {"alignment+orth", m(true, false, false, true, true)},
      {"w/o pos", m(true, false, true, true, true)},
      {"w/o sparse", m(true, true, false, true, true)},
      {"w/o orth", m(true, true, true, false, true)},
      {"w/o normalization", m(true, true, true, true, false)},
      {"full", m(true, true, true, true, true)},
  };
}

struct AblationRow {
  std::string label;
  ComponentMask mask;
  double metric = 0.0;
};

/// One independent run per mask, all sharing cfg.seed.
inline std::vector<AblationRow> run_ablation(const DatasetList& train_split, const DatasetList& dev,
                                             const TrainConfig& cfg, const std::vector<NamedMask>& masks) {
  if (masks.empty()) throw ConfigError("ablation needs at least one mask");
  std::vector<AblationRow> rows(masks.size());
  parallel_for(masks.size(), [&](std::size_t i) {
    TrainConfig run_cfg = cfg;
    run_cfg.loss.mask = masks[i].mask;
    const auto trace = train(train_split, run_cfg, &dev);
    rows[i] = {masks[i].label, masks[i].mask, dev_metric(train_split, dev, trace.final_params, masks[i].mask.normalize)};
  });
  return rows;
}

struct LambdaCandidate {
  double lambda_pos_sparse = 0.0;  // lambda_pos and lambda_sparse are tied
  double lambda_ortho = 0.0;
  double metric = 0.0;
};

struct LambdaSearchResult {
  LambdaCandidate best;
  std::vector<LambdaCandidate> table;
};

inline std::vector<double> unit_grid(double step) {
  if (!(step > 0.0) || step > 1.0) throw ConfigError("grid step must lie in (0, 1]");
  const double inverse = 1.0 / step;
  const auto n = static_cast<int>(std::floor(inverse + 1e-9));
  // Divide when 1/step is whole so 0.1 steps land on 0.3 rather than 0.30000000000000004.
  const bool whole = std::abs(inverse - std::round(inverse)) < 1e-9;
  std::vector<double> out;
  for (int i = 0; i <= n; ++i) out.push_back(whole ? i / std::round(inverse) : std::min(1.0, i * step));
  return out;
}

/// Grid over tied lambda_pos = lambda_sparse and lambda_ortho in [0, 1].
/// Ties on the dev metric go to the smallest lambda_ortho, then the smallest
/// lambda_pos.
inline LambdaSearchResult grid_search_lambdas(const DatasetList& train_split, const DatasetList& dev,
                                              const TrainConfig& cfg, double grid_step) {
  const auto grid = unit_grid(grid_step);
  LambdaSearchResult out;
  for (double lp : grid)
    for (double lo : grid) out.table.push_back({lp, lo, 0.0});
  parallel_for(out.table.size(), [&](std::size_t i) {
    TrainConfig run_cfg = cfg;
    run_cfg.loss.lambda_pos = run_cfg.loss.lambda_sparse = out.table[i].lambda_pos_sparse;
    run_cfg.loss.lambda_ortho = out.table[i].lambda_ortho;
    const auto trace = train(train_split, run_cfg, &dev);
    out.table[i].metric = dev_metric(train_split, dev, trace.final_params, cfg.loss.mask.normalize);
  });
  out.best = out.table.front();
  for (const auto& c : out.table) {
    const bool better = c.metric > out.best.metric ||
                        (c.metric == out.best.metric &&
                         (c.lambda_ortho < out.best.lambda_ortho ||
                          (c.lambda_ortho == out.best.lambda_ortho && c.lambda_pos_sparse < out.best.lambda_pos_sparse)));
    if (better) out.best = c;
  }
  return out;
}

}  // namespace matsteer
