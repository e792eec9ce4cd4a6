#pragma once

// Synthetic multi-attribute tasks, the templated toy-LM task, gating
// analysis and method comparison.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <map>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "matsteer/dataset.hpp"
#include "matsteer/errors.hpp"
#include "matsteer/metrics.hpp"
#include "matsteer/parallel.hpp"
#include "matsteer/rng.hpp"
#include "matsteer/steering.hpp"
#include "matsteer/toy_lm.hpp"
#include "matsteer/trainer.hpp"

namespace matsteer {

struct SplitData {
  DatasetList train;
  DatasetList dev;
  DatasetList test;

  int n_attributes() const noexcept { return static_cast<int>(train.size()); }
  int dim() const { return dimension_of(train); }
};

// ---------------------------------------------------------------------------
// Synthetic Gaussian clusters

/// Geometry: attribute t has a center c_t orthogonal to the shift plane;
/// negatives ~ N(c_t - s/2 u_t, noise^2 I), positives ~ N(c_t + s/2 u_t, noise^2 I)
/// where u_t = cos(t * angle) e_0 + sin(t * angle) e_1 in a seeded random basis.
struct SynthSpec {
  int n_attributes = 3;
  int dim = 16;
  double cluster_separation = 4.0;
  double conflict_angle = std::numbers::pi / 2;
  int samples_per_bucket = 200;
  double noise_scale = 0.5;
  std::uint64_t seed = 7;
  int tokens_per_sequence = 1;
  double center_radius = 4.0;

  void validate() const {
    if (n_attributes < 1) throw ConfigError("need at least one attribute");
    if (dim < 2) throw ConfigError("dim must be at least 2");
    if (n_attributes > dim) throw ConfigError("n_attributes must not exceed dim");
    if (!(cluster_separation >= 0.0) || !std::isfinite(cluster_separation))
      throw ConfigError("cluster_separation must be finite and nonnegative");
    if (!(conflict_angle >= 0.0 && conflict_angle <= std::numbers::pi))
      throw ConfigError("conflict_angle must lie in [0, pi]");
    if (samples_per_bucket < 1) throw ConfigError("samples_per_bucket must be positive");
    if (!(noise_scale > 0.0) || !std::isfinite(noise_scale)) throw ConfigError("noise_scale must be positive");
    if (tokens_per_sequence < 1) throw ConfigError("tokens_per_sequence must be positive");
    if (samples_per_bucket % tokens_per_sequence != 0)
      throw ConfigError("samples_per_bucket must be a multiple of tokens_per_sequence");
    if (!(center_radius >= 0.0) || !std::isfinite(center_radius))
      throw ConfigError("center_radius must be finite and nonnegative");
  }
};

inline std::uint64_t make_sequence_id(int attribute, Polarity polarity, std::uint64_t index) {
  return (static_cast<std::uint64_t>(attribute * 2 + static_cast<int>(polarity)) << 32) | index;
}

/// Random orthonormal basis (columns), Gram-Schmidt over Gaussian draws.
inline Matrix random_orthonormal_basis(int dim, Rng& rng) {
  Matrix q(dim, dim);
  for (int c = 0; c < dim; ++c) {
    Vector v(dim);
    for (;;) {
      for (int r = 0; r < dim; ++r) v[r] = rng.normal();
      for (int k = 0; k < c; ++k) v -= q.col(k).dot(v) * q.col(k);
      if (v.norm() > 1e-6) break;
    }
    q.col(c) = v.normalized();
  }
  return q;
}

/// Unit shift direction of each attribute.
inline std::vector<Vector> synthetic_directions(const SynthSpec& spec) {
  Rng rng(mix_seed(spec.seed, 0xD1));
  const Matrix basis = random_orthonormal_basis(spec.dim, rng);
  std::vector<Vector> out;
  for (int t = 0; t < spec.n_attributes; ++t)
    out.push_back(std::cos(t * spec.conflict_angle) * basis.col(0) + std::sin(t * spec.conflict_angle) * basis.col(1));
  return out;
}

inline SplitData gen_synthetic(const SynthSpec& spec) {
  spec.validate();
  Rng basis_rng(mix_seed(spec.seed, 0xD1));
  const Matrix basis = random_orthonormal_basis(spec.dim, basis_rng);
  const auto directions = synthetic_directions(spec);

  Rng center_rng(mix_seed(spec.seed, 0xC3));
  std::vector<Vector> centers;
  for (int t = 0; t < spec.n_attributes; ++t) {
    Vector c(spec.dim);
    if (spec.dim >= spec.n_attributes + 2) {
      c = basis.col(2 + t);
    } else {
      for (int i = 0; i < spec.dim; ++i) c[i] = center_rng.normal();
      c.normalize();
    }
    centers.push_back(spec.center_radius * c);
  }

  SplitData out;
  for (auto* part : {&out.train, &out.dev, &out.test}) {
    part->resize(static_cast<std::size_t>(spec.n_attributes));
    for (int t = 0; t < spec.n_attributes; ++t) (*part)[static_cast<std::size_t>(t)].attribute_id = t;
  }
  const int n_sequences = spec.samples_per_bucket / spec.tokens_per_sequence;
  for (int t = 0; t < spec.n_attributes; ++t) {
    for (Polarity pol : {Polarity::kPositive, Polarity::kNegative}) {
      const double sign = pol == Polarity::kPositive ? 0.5 : -0.5;
      const Vector mu = centers[static_cast<std::size_t>(t)] +
                        sign * spec.cluster_separation * directions[static_cast<std::size_t>(t)];
      const std::uint64_t bucket_tag = static_cast<std::uint64_t>(t * 2 + static_cast<int>(pol));
      Rng rng(mix_seed(spec.seed, 0x100 + bucket_tag));
      std::vector<std::vector<ActivationRecord>> sequences(static_cast<std::size_t>(n_sequences));
      for (int s = 0; s < n_sequences; ++s)
        for (int k = 0; k < spec.tokens_per_sequence; ++k) {
          ActivationRecord r;
          r.vector.resize(spec.dim);
          for (int i = 0; i < spec.dim; ++i) r.vector[i] = mu[i] + spec.noise_scale * rng.normal();
          r.vector = round_to_float(r.vector);
          r.attribute_id = t;
          r.polarity = pol;
          r.token_index = static_cast<std::uint32_t>(k);
          r.sequence_id = make_sequence_id(t, pol, static_cast<std::uint64_t>(s));
          sequences[static_cast<std::size_t>(s)].push_back(std::move(r));
        }
      const auto split = split_40_10_50(static_cast<std::size_t>(n_sequences), mix_seed(spec.seed, 0x200 + bucket_tag));
      auto emit = [&](DatasetList& part, const std::vector<std::size_t>& idx) {
        auto& ds = part[static_cast<std::size_t>(t)];
        auto& bucket = pol == Polarity::kPositive ? ds.positives : ds.negatives;
        for (auto i : idx) bucket.insert(bucket.end(), sequences[i].begin(), sequences[i].end());
      };
      emit(out.train, split.train);
      emit(out.dev, split.dev);
      emit(out.test, split.test);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Templated token sequences through the toy LM

/// Vocabulary layout: per attribute a positive marker, a negative marker and
/// `topic_tokens` topic ids; every remaining id is filler.
struct ToyTaskSpec {
  ToyLMConfig model;
  int layer = 1;
  int n_attributes = 3;
  int sequences_per_bucket = 40;
  int prompt_length = 8;
  int markers_per_sequence = 2;
  int topic_tokens = 3;
  std::uint64_t seed = 11;

  int reserved_tokens() const noexcept { return n_attributes * (2 + topic_tokens); }

  void validate() const {
    model.validate();
    if (n_attributes < 1) throw ConfigError("need at least one attribute");
    if (layer < 0 || layer >= model.n_layers) throw ConfigError("layer outside the toy model");
    if (sequences_per_bucket < 2) throw ConfigError("need at least two sequences per bucket");
    if (prompt_length < 2 || prompt_length > model.max_seq_len) throw ConfigError("invalid prompt_length");
    if (markers_per_sequence < 1 || markers_per_sequence + 1 > prompt_length)
      throw ConfigError("invalid markers_per_sequence");
    if (topic_tokens < 1) throw ConfigError("topic_tokens must be positive");
    if (reserved_tokens() + 4 > model.vocab_size) throw ConfigError("vocabulary too small for the template");
  }
};

inline std::vector<LabeledSequence> make_template_sequences(const ToyTaskSpec& spec) {
  spec.validate();
  const int reserved = spec.reserved_tokens();
  const int n_filler = spec.model.vocab_size - reserved;
  std::vector<LabeledSequence> out;
  for (int t = 0; t < spec.n_attributes; ++t) {
    const TokenId pos_marker = t * (2 + spec.topic_tokens);
    const TokenId neg_marker = pos_marker + 1;
    const TokenId topic_base = pos_marker + 2;
    for (Polarity pol : {Polarity::kPositive, Polarity::kNegative}) {
      Rng rng(mix_seed(spec.seed, 0x300 + static_cast<std::uint64_t>(t * 2 + static_cast<int>(pol))));
      for (int s = 0; s < spec.sequences_per_bucket; ++s) {
        LabeledSequence seq;
        seq.attribute_id = t;
        seq.polarity = pol;
        seq.sequence_id = make_sequence_id(t, pol, static_cast<std::uint64_t>(s));
        seq.tokens.resize(static_cast<std::size_t>(spec.prompt_length));
        for (auto& tok : seq.tokens) tok = reserved + static_cast<TokenId>(rng.below(static_cast<std::uint64_t>(n_filler)));
        // Topic token first so every later position sees the attribute.
        seq.tokens[0] = topic_base + static_cast<TokenId>(rng.below(static_cast<std::uint64_t>(spec.topic_tokens)));
        std::vector<std::size_t> slots;
        for (int i = 1; i < spec.prompt_length; ++i) slots.push_back(static_cast<std::size_t>(i));
        rng.shuffle(std::span<std::size_t>(slots));
        for (int m = 0; m < spec.markers_per_sequence; ++m)
          seq.tokens[slots[static_cast<std::size_t>(m)]] = pol == Polarity::kPositive ? pos_marker : neg_marker;
        out.push_back(std::move(seq));
      }
    }
  }
  return out;
}

/// Activations of the templated task at `spec.layer`, split by sequence.
inline SplitData gen_toy_task(const ToyTaskSpec& spec) {
  const ToyLM model(spec.model);
  const auto splits = split_sequences(make_template_sequences(spec), mix_seed(spec.seed, 0x5EED));
  SplitData out;
  out.train = build_dataset(model, spec.layer, splits.train, spec.n_attributes);
  out.dev = build_dataset(model, spec.layer, splits.dev, spec.n_attributes);
  out.test = build_dataset(model, spec.layer, splits.test, spec.n_attributes);
  return out;
}

// ---------------------------------------------------------------------------
// Gating analysis

struct AttributeReport {
  int attribute = 0;
  double flip_rate = 0.0;
  double positive_preservation = 0.0;
  double avg_gate_matching_negatives = 0.0;
  double avg_gate_other_attributes = 0.0;  // other gates on this attribute's negatives
  double avg_gate_positives = 0.0;
  double avg_intervened_tokens = 0.0;  // per negative sequence
  double avg_intervened_tokens_positive = 0.0;
};

/// Gate averages are taken per token.
struct SteeringReport {
  std::vector<AttributeReport> attributes;
  double threshold = 0.5;
  std::string aggregation = "per-token";

  double mean_flip_rate() const {
    std::vector<double> v;
    for (const auto& a : attributes) v.push_back(a.flip_rate);
    return mean(v);
  }
};

inline constexpr double kDefaultGateThreshold = 0.5;

inline std::vector<double> gate_values(const Vector& a, const ParamList& params) {
  std::vector<double> g;
  for (const auto& p : params) g.push_back(gate(a, p.gate));
  return g;
}

namespace detail {

inline double intervened_per_sequence(const std::vector<ActivationRecord>& bucket, const ParamList& params,
                                      double threshold) {
  std::map<std::uint64_t, std::size_t> per_sequence;
  for (const auto& r : bucket) {
    auto& count = per_sequence[r.sequence_id];
    const auto g = gate_values(r.vector, params);
    if (std::any_of(g.begin(), g.end(), [&](double x) { return x > threshold; })) ++count;
  }
  if (per_sequence.empty()) return 0.0;
  double total = 0.0;
  for (const auto& [id, count] : per_sequence) total += static_cast<double>(count);
  return total / static_cast<double>(per_sequence.size());
}

}  // namespace detail

inline SteeringReport gating_report(const DatasetList& test, const Centroids& centroids, const ParamList& params,
                                    double threshold = kDefaultGateThreshold, bool renormalize = true) {
  if (!(threshold > 0.0 && threshold < 1.0)) throw InputError("gate threshold must lie in (0, 1)");
  if (test.size() != params.size()) throw InputError("report needs one parameter set per attribute");
  SteeringReport report;
  report.threshold = threshold;
  const Editor edit = matsteer_editor(params, renormalize);
  const std::size_t n_attr = params.size();
  for (std::size_t t = 0; t < test.size(); ++t) {
    const auto& ds = test[t];
    AttributeReport row;
    row.attribute = ds.attribute_id;
    row.flip_rate = ds.negatives.empty() ? 0.0 : flip_rate(ds, edit, centroids);
    row.positive_preservation = ds.positives.empty() ? 0.0 : positive_preservation(ds, edit, centroids);
    double match = 0.0, other = 0.0, positive = 0.0;
    for (const auto& r : ds.negatives) {
      const auto g = gate_values(r.vector, params);
      match += g[t];
      if (n_attr > 1) {
        double s = 0.0;
        for (std::size_t u = 0; u < n_attr; ++u)
          if (u != t) s += g[u];
        other += s / static_cast<double>(n_attr - 1);
      }
    }
    for (const auto& r : ds.positives) positive += gate(r.vector, params[t].gate);
    if (!ds.negatives.empty()) {
      row.avg_gate_matching_negatives = match / static_cast<double>(ds.negatives.size());
      row.avg_gate_other_attributes = other / static_cast<double>(ds.negatives.size());
    }
    if (!ds.positives.empty()) row.avg_gate_positives = positive / static_cast<double>(ds.positives.size());
    row.avg_intervened_tokens = detail::intervened_per_sequence(ds.negatives, params, threshold);
    row.avg_intervened_tokens_positive = detail::intervened_per_sequence(ds.positives, params, threshold);
    report.attributes.push_back(row);
  }
  return report;
}

/// `record_id,attribute,polarity,gate_0..gate_{T-1}` over records in
/// attribute-major, positives-first order.
inline std::string gate_dump_csv(const DatasetList& test, const ParamList& params) {
  std::ostringstream out;
  out << "record_id,attribute,polarity";
  for (std::size_t t = 0; t < params.size(); ++t) out << ",gate_" << t;
  out << '\n';
  std::size_t id = 0;
  for (const auto& r : flatten(test)) {
    out << id++ << ',' << r.attribute_id << ',' << to_string(r.polarity);
    for (double g : gate_values(r.vector, params)) out << ',' << detail::shortest(g);
    out << '\n';
  }
  return out.str();
}

inline std::string report_csv(const SteeringReport& report) {
  std::ostringstream out;
  out << "attribute,flip_rate,positive_preservation,avg_gate_matching_negatives,avg_gate_other_attributes,"
         "avg_gate_positives,avg_intervened_tokens,avg_intervened_tokens_positive\n";
  for (const auto& a : report.attributes) {
    out << a.attribute << ',' << detail::shortest(a.flip_rate) << ',' << detail::shortest(a.positive_preservation)
        << ',' << detail::shortest(a.avg_gate_matching_negatives) << ','
        << detail::shortest(a.avg_gate_other_attributes) << ',' << detail::shortest(a.avg_gate_positives) << ','
        << detail::shortest(a.avg_intervened_tokens) << ',' << detail::shortest(a.avg_intervened_tokens_positive)
        << '\n';
  }
  return out.str();
}

/// Aligned-column rendering of rows of cells; the first row is the header.
inline std::string aligned_table(const std::vector<std::vector<std::string>>& rows) {
  std::vector<std::size_t> width;
  for (const auto& row : rows)
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (width.size() <= c) width.push_back(0);
      width[c] = std::max(width[c], row[c].size());
    }
  std::ostringstream out;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t c = 0; c < rows[r].size(); ++c) {
      if (c > 0) out << "  ";
      if (c == 0) out << std::left << std::setw(static_cast<int>(width[c])) << rows[r][c];
      else out << std::right << std::setw(static_cast<int>(width[c])) << rows[r][c];
    }
    out << '\n';
    if (r == 0) {
      std::size_t total = 0;
      for (auto w : width) total += w;
      out << std::string(total + 2 * (width.size() - 1), '-') << '\n';
    }
  }
  return out.str();
}

inline std::string fixed(double x, int digits = 4) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(digits) << x;
  return s.str();
}

inline std::string report_text(const SteeringReport& report) {
  std::vector<std::vector<std::string>> rows{{"attribute", "flip_rate", "pos_preserve", "gate_match_neg",
                                              "gate_other", "gate_pos", "interv_tok_neg", "interv_tok_pos"}};
  for (const auto& a : report.attributes)
    rows.push_back({std::to_string(a.attribute), fixed(a.flip_rate), fixed(a.positive_preservation),
                    fixed(a.avg_gate_matching_negatives), fixed(a.avg_gate_other_attributes),
                    fixed(a.avg_gate_positives), fixed(a.avg_intervened_tokens),
                    fixed(a.avg_intervened_tokens_positive)});
  std::ostringstream out;
  out << aligned_table(rows);
  out << "mean flip rate " << fixed(report.mean_flip_rate()) << ", gate threshold " << report.threshold
      << ", gate averages " << report.aggregation << '\n';
  return out.str();
}

// ---------------------------------------------------------------------------
// Method comparison

enum class Method { kMatSteer, kSingleGlobal, kSummed, kUniformAll, kLastToken, kRandomTokens };

inline constexpr std::string_view kMethodNames[] = {"matsteer",    "single_global", "summed",
                                                    "uniform_all", "last_token",    "random_tokens"};

inline std::string_view to_string(Method m) noexcept { return kMethodNames[static_cast<int>(m)]; }

inline Method parse_method(std::string_view name) {
  for (int i = 0; i < 6; ++i)
    if (kMethodNames[i] == name) return static_cast<Method>(i);
  std::string valid;
  for (auto n : kMethodNames) valid += (valid.empty() ? "" : ", ") + std::string(n);
  throw ConfigError("unknown method '" + std::string(name) + "'; valid methods: " + valid);
}

inline std::vector<Method> all_methods() {
  return {Method::kMatSteer, Method::kSingleGlobal, Method::kSummed,
          Method::kUniformAll, Method::kLastToken, Method::kRandomTokens};
}

struct MethodRow {
  Method method = Method::kMatSteer;
  std::vector<double> flip_rates;
  double mean_flip_rate = 0.0;
  double positive_preservation = 0.0;
};

/// Per-attribute mean(positives) - mean(negatives) as parameter sets with
/// zero gates.
inline ParamList mean_difference_params(const DatasetList& train) {
  ParamList out;
  for (const auto& ds : train) {
    auto p = AttributeParams::zeros(dimension_of(train), ds.attribute_id);
    p.theta = mean_of(ds.positives) - mean_of(ds.negatives);
    out.push_back(std::move(p));
  }
  return out;
}

/// Mean difference over the merged dataset (all attributes pooled).
inline Vector global_mean_difference(const DatasetList& train) {
  std::vector<ActivationRecord> pos, neg;
  for (const auto& ds : train) {
    pos.insert(pos.end(), ds.positives.begin(), ds.positives.end());
    neg.insert(neg.end(), ds.negatives.begin(), ds.negatives.end());
  }
  return mean_of(pos) - mean_of(neg);
}

/// Hard token selection in place of the learned gate: every attribute's
/// vector at full strength on selected tokens.
inline Editor token_selection_editor(ParamList params, BaselineMode mode, std::uint64_t seed,
                                     std::map<std::uint64_t, std::size_t> sequence_lengths, bool renormalize) {
  return [params = std::move(params), mode, seed, lengths = std::move(sequence_lengths),
          renormalize](const ActivationRecord& r) -> Vector {
    const auto it = lengths.find(r.sequence_id);
    const std::size_t len = it == lengths.end() ? r.token_index + 1 : it->second;
    const auto chosen = select_tokens(len, mode, mix_seed(seed, r.sequence_id));
    if (!chosen.contains(r.token_index)) return r.vector;
    const std::vector<double> ones(params.size(), 1.0);
    return steer_with_gates(r.vector, params, ones, renormalize);
  };
}

inline std::map<std::uint64_t, std::size_t> sequence_lengths(const DatasetList& data) {
  std::map<std::uint64_t, std::size_t> out;
  for (const auto& r : flatten(data)) {
    auto& len = out[r.sequence_id];
    len = std::max<std::size_t>(len, r.token_index + 1);
  }
  return out;
}

/// Fits every method on the same training split and scores it on the test
/// split. MAT-Steer is trained once; the token-selection baselines reuse its
/// steering vectors.
inline std::vector<MethodRow> compare_methods(const SplitData& data, const std::vector<Method>& methods,
                                              const TrainConfig& cfg, const BaselineConfig& baseline = {}) {
  if (methods.empty()) throw ConfigError("compare needs at least one method");
  const Centroids centroids = compute_centroids(data.train);
  const bool renorm = cfg.loss.mask.normalize;

  const bool needs_training = std::any_of(methods.begin(), methods.end(), [](Method m) {
    return m == Method::kMatSteer || m == Method::kUniformAll || m == Method::kLastToken || m == Method::kRandomTokens;
  });
  ParamList trained;
  if (needs_training) trained = train(data.train, cfg, &data.dev).final_params;
  const auto lengths = sequence_lengths(data.test);

  std::vector<MethodRow> rows;
  for (Method m : methods) {
    Editor edit;
    BaselineConfig b = baseline;
    switch (m) {
      case Method::kMatSteer:
        edit = matsteer_editor(trained, renorm);
        break;
      case Method::kSingleGlobal: {
        b.mode = BaselineMode::kSingleGlobal;
        edit = [theta = global_mean_difference(data.train), b](const ActivationRecord& r) {
          return baseline_edit(r.vector, theta, b);
        };
        break;
      }
      case Method::kSummed: {
        b.mode = BaselineMode::kSummed;
        edit = [theta = summed_vector(mean_difference_params(data.train)), b](const ActivationRecord& r) {
          return baseline_edit(r.vector, theta, b);
        };
        break;
      }
      case Method::kUniformAll:
        edit = token_selection_editor(trained, BaselineMode::kUniformAll, b.random_seed, lengths, renorm);
        break;
      case Method::kLastToken:
        edit = token_selection_editor(trained, BaselineMode::kLastToken, b.random_seed, lengths, renorm);
        break;
      case Method::kRandomTokens:
        edit = token_selection_editor(trained, BaselineMode::kRandomTokens, b.random_seed, lengths, renorm);
        break;
    }
    MethodRow row;
    row.method = m;
    row.flip_rates = flip_rates(data.test, edit, centroids);
    row.mean_flip_rate = mean(row.flip_rates);
    const auto keep = preservation_rates(data.test, edit, centroids);
    row.positive_preservation = mean(keep);
    rows.push_back(std::move(row));
  }
  return rows;
}

inline std::vector<MethodRow> compare_methods(const SynthSpec& spec, const std::vector<Method>& methods,
                                              const TrainConfig& cfg, const BaselineConfig& baseline = {}) {
  return compare_methods(gen_synthetic(spec), methods, cfg, baseline);
}

inline std::vector<std::vector<std::string>> compare_rows(const std::vector<MethodRow>& rows, bool shortest_floats) {
  const std::size_t n_attr = rows.empty() ? 0 : rows.front().flip_rates.size();
  std::vector<std::string> header{"method"};
  for (std::size_t t = 0; t < n_attr; ++t) header.push_back("flip_rate_" + std::to_string(t));
  header.push_back("mean_flip_rate");
  header.push_back("positive_preservation");
  std::vector<std::vector<std::string>> out{header};
  auto fmt = [&](double x) { return shortest_floats ? detail::shortest(x) : fixed(x); };
  for (const auto& r : rows) {
    std::vector<std::string> cells{std::string(to_string(r.method))};
    for (double f : r.flip_rates) cells.push_back(fmt(f));
    cells.push_back(fmt(r.mean_flip_rate));
    cells.push_back(fmt(r.positive_preservation));
    out.push_back(std::move(cells));
  }
  return out;
}

inline std::string to_csv(const std::vector<std::vector<std::string>>& rows) {
  std::ostringstream out;
  for (const auto& row : rows) {
    for (std::size_t c = 0; c < row.size(); ++c) out << (c ? "," : "") << row[c];
    out << '\n';
  }
  return out.str();
}

}  // namespace matsteer
