#pragma once

// Run configuration: an INI file with [run] [synth] [model] [toy] [train]
// [loss] [baseline] sections, plus command-line overrides.

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "matsteer/dataset.hpp"
#include "matsteer/errors.hpp"
#include "matsteer/harness.hpp"
#include "matsteer/steering.hpp"
#include "matsteer/toy_lm.hpp"
#include "matsteer/trainer.hpp"
#include "matsteer/types.hpp"

namespace matsteer {

enum class DataSource { kSynthetic, kToyLM };

struct RunConfig {
  DataSource source = DataSource::kSynthetic;
  std::string out_dir = "out";
  std::string data_dir;  // where train/eval read activations; empty means out_dir
  std::string bundle;    // empty means <out_dir>/bundle.mstb
  int layer = 1;
  double threshold = kDefaultGateThreshold;
  std::vector<Method> methods = all_methods();
  std::vector<int> layers;  // layersearch candidates; empty means every layer
  SynthSpec synth;
  ToyTaskSpec toy;
  TrainConfig train = desk_train_config();
  BaselineConfig baseline;

  std::string input_dir() const { return data_dir.empty() ? out_dir : data_dir; }
  std::string bundle_path() const { return bundle.empty() ? out_dir + "/bundle.mstb" : bundle; }

  /// The toy task with the run-level layer applied.
  ToyTaskSpec toy_task() const {
    ToyTaskSpec t = toy;
    t.layer = layer;
    return t;
  }

  void validate() const {
    if (!(threshold > 0.0 && threshold < 1.0)) throw ConfigError("threshold must lie in (0, 1)");
    if (methods.empty()) throw ConfigError("methods must list at least one method");
    train.validate();
    if (!std::isfinite(baseline.alpha)) throw ConfigError("baseline alpha must be finite");
    if (source == DataSource::kSynthetic) {
      synth.validate();
    } else {
      toy_task().validate();
      for (int l : layers)
        if (l < 0 || l >= toy.model.n_layers) throw ConfigError("layersearch layer " + std::to_string(l) + " out of range");
    }
  }
};

struct CliOverrides {
  std::optional<std::uint64_t> seed;
  std::optional<int> layer;
  std::optional<double> lambda_pos;
  std::optional<double> lambda_sparse;
  std::optional<double> lambda_ortho;
  std::optional<double> threshold;
  std::optional<std::string> out_dir;
};

/// `--seed` reseeds data generation and training together.
inline void apply_overrides(RunConfig& cfg, const CliOverrides& o) {
  if (o.seed) {
    cfg.synth.seed = *o.seed;
    cfg.toy.seed = *o.seed;
    cfg.train.seed = *o.seed;
  }
  if (o.layer) cfg.layer = *o.layer;
  if (o.lambda_pos) cfg.train.loss.lambda_pos = *o.lambda_pos;
  if (o.lambda_sparse) cfg.train.loss.lambda_sparse = *o.lambda_sparse;
  if (o.lambda_ortho) cfg.train.loss.lambda_ortho = *o.lambda_ortho;
  if (o.threshold) cfg.threshold = *o.threshold;
  if (o.out_dir) cfg.out_dir = *o.out_dir;
}

namespace detail {

template <typename T>
T parse_number(std::string_view text, std::string_view key) {
  T value{};
  const auto* first = text.data();
  const auto* last = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last)
    throw ConfigError("cannot parse '" + std::string(text) + "' for key " + std::string(key));
  return value;
}

inline bool parse_bool(std::string_view text, std::string_view key) {
  if (text == "true" || text == "1" || text == "on" || text == "yes") return true;
  if (text == "false" || text == "0" || text == "off" || text == "no") return false;
  throw ConfigError("cannot parse '" + std::string(text) + "' as a boolean for key " + std::string(key));
}

inline std::vector<std::string> split_list(std::string_view text) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in{std::string(text)};
  while (std::getline(in, item, ',')) {
    const auto b = item.find_first_not_of(" \t");
    const auto e = item.find_last_not_of(" \t");
    if (b != std::string::npos) out.push_back(item.substr(b, e - b + 1));
  }
  return out;
}

struct Field {
  const char* section;
  const char* key;
  bool is_path;  // excluded from the config hash
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, std::string_view)> set;
};

inline std::string fmt(double x) { return shortest(x); }
inline std::string fmt(int x) { return std::to_string(x); }
inline std::string fmt(std::uint64_t x) { return std::to_string(x); }
inline std::string fmt(bool x) { return x ? "true" : "false"; }

// Builds a field from an accessor returning a reference into RunConfig.
template <typename Access>
Field field(const char* section, const char* key, Access access) {
  using T = std::remove_cvref_t<decltype(access(std::declval<RunConfig&>()))>;
  return Field{section, key, false,
               [access](const RunConfig& c) { return fmt(access(const_cast<RunConfig&>(c))); },
               [access, key](RunConfig& c, std::string_view v) {
                 if constexpr (std::is_same_v<T, bool>) {
                   access(c) = parse_bool(v, key);
                 } else {
                   access(c) = parse_number<T>(v, key);
                 }
               }};
}

template <typename Access, std::size_t N>
Field choice(const char* section, const char* key, Access access, std::array<std::string_view, N> names) {
  return Field{section, key, false,
               [access, names](const RunConfig& c) {
                 return std::string(names[static_cast<std::size_t>(access(const_cast<RunConfig&>(c)))]);
               },
               [access, names, key](RunConfig& c, std::string_view v) {
                 using E = std::remove_cvref_t<decltype(access(c))>;
                 for (std::size_t i = 0; i < N; ++i)
                   if (names[i] == v) {
                     access(c) = static_cast<E>(i);
                     return;
                   }
                 std::string valid;
                 for (auto n : names) valid += (valid.empty() ? "" : ", ") + std::string(n);
                 throw ConfigError("invalid value '" + std::string(v) + "' for key " + key + "; expected one of: " + valid);
               }};
}

inline const std::vector<Field>& fields() {
  static const std::vector<Field> table = [] {
    std::vector<Field> f;
    f.push_back(choice("run", "source", [](RunConfig& c) -> DataSource& { return c.source; },
                       std::array<std::string_view, 2>{"synthetic", "toylm"}));
    f.push_back(Field{"run", "out", true, [](const RunConfig& c) { return c.out_dir; },
                      [](RunConfig& c, std::string_view v) { c.out_dir = v; }});
    f.push_back(Field{"run", "data", true, [](const RunConfig& c) { return c.data_dir; },
                      [](RunConfig& c, std::string_view v) { c.data_dir = v; }});
    f.push_back(Field{"run", "bundle", true, [](const RunConfig& c) { return c.bundle; },
                      [](RunConfig& c, std::string_view v) { c.bundle = v; }});
    f.push_back(field("run", "layer", [](RunConfig& c) -> int& { return c.layer; }));
    f.push_back(field("run", "threshold", [](RunConfig& c) -> double& { return c.threshold; }));
    f.push_back(Field{"run", "methods", false,
                      [](const RunConfig& c) {
                        std::string s;
                        for (Method m : c.methods) s += (s.empty() ? "" : ",") + std::string(to_string(m));
                        return s;
                      },
                      [](RunConfig& c, std::string_view v) {
                        c.methods.clear();
                        for (const auto& name : split_list(v)) c.methods.push_back(parse_method(name));
                      }});
    f.push_back(Field{"run", "layers", false,
                      [](const RunConfig& c) {
                        std::string s;
                        for (int l : c.layers) s += (s.empty() ? "" : ",") + std::to_string(l);
                        return s;
                      },
                      [](RunConfig& c, std::string_view v) {
                        c.layers.clear();
                        for (const auto& item : split_list(v)) c.layers.push_back(parse_number<int>(item, "layers"));
                      }});

    f.push_back(field("synth", "n_attributes", [](RunConfig& c) -> int& { return c.synth.n_attributes; }));
    f.push_back(field("synth", "dim", [](RunConfig& c) -> int& { return c.synth.dim; }));
    f.push_back(field("synth", "cluster_separation", [](RunConfig& c) -> double& { return c.synth.cluster_separation; }));
    f.push_back(field("synth", "conflict_angle", [](RunConfig& c) -> double& { return c.synth.conflict_angle; }));
    f.push_back(field("synth", "samples_per_bucket", [](RunConfig& c) -> int& { return c.synth.samples_per_bucket; }));
    f.push_back(field("synth", "noise_scale", [](RunConfig& c) -> double& { return c.synth.noise_scale; }));
    f.push_back(field("synth", "seed", [](RunConfig& c) -> std::uint64_t& { return c.synth.seed; }));
    f.push_back(field("synth", "tokens_per_sequence", [](RunConfig& c) -> int& { return c.synth.tokens_per_sequence; }));
    f.push_back(field("synth", "center_radius", [](RunConfig& c) -> double& { return c.synth.center_radius; }));

    f.push_back(field("model", "vocab_size", [](RunConfig& c) -> int& { return c.toy.model.vocab_size; }));
    f.push_back(field("model", "d_model", [](RunConfig& c) -> int& { return c.toy.model.d_model; }));
    f.push_back(field("model", "n_layers", [](RunConfig& c) -> int& { return c.toy.model.n_layers; }));
    f.push_back(field("model", "n_heads", [](RunConfig& c) -> int& { return c.toy.model.n_heads; }));
    f.push_back(field("model", "max_seq_len", [](RunConfig& c) -> int& { return c.toy.model.max_seq_len; }));
    f.push_back(field("model", "seed", [](RunConfig& c) -> std::uint64_t& { return c.toy.model.seed; }));

    f.push_back(field("toy", "n_attributes", [](RunConfig& c) -> int& { return c.toy.n_attributes; }));
    f.push_back(field("toy", "sequences_per_bucket", [](RunConfig& c) -> int& { return c.toy.sequences_per_bucket; }));
    f.push_back(field("toy", "prompt_length", [](RunConfig& c) -> int& { return c.toy.prompt_length; }));
    f.push_back(field("toy", "markers_per_sequence", [](RunConfig& c) -> int& { return c.toy.markers_per_sequence; }));
    f.push_back(field("toy", "topic_tokens", [](RunConfig& c) -> int& { return c.toy.topic_tokens; }));
    f.push_back(field("toy", "seed", [](RunConfig& c) -> std::uint64_t& { return c.toy.seed; }));

    f.push_back(field("train", "batch_pos_per_attr", [](RunConfig& c) -> int& { return c.train.batch_pos_per_attr; }));
    f.push_back(field("train", "batch_neg_per_attr", [](RunConfig& c) -> int& { return c.train.batch_neg_per_attr; }));
    f.push_back(field("train", "learning_rate", [](RunConfig& c) -> double& { return c.train.learning_rate; }));
    f.push_back(field("train", "max_epochs", [](RunConfig& c) -> int& { return c.train.max_epochs; }));
    f.push_back(field("train", "seed", [](RunConfig& c) -> std::uint64_t& { return c.train.seed; }));
    f.push_back(field("train", "early_stop_patience", [](RunConfig& c) -> int& { return c.train.early_stop_patience; }));
    f.push_back(choice("train", "optimizer", [](RunConfig& c) -> Optimizer& { return c.train.optimizer; },
                       std::array<std::string_view, 2>{"sgd", "adam"}));
    f.push_back(choice("train", "theta_init", [](RunConfig& c) -> ThetaInit& { return c.train.theta_init; },
                       std::array<std::string_view, 2>{"zero", "mean_difference"}));
    f.push_back(choice("train", "gate_init", [](RunConfig& c) -> GateInit& { return c.train.gate_init; },
                       std::array<std::string_view, 2>{"zero", "logistic"}));

    f.push_back(field("loss", "bandwidth", [](RunConfig& c) -> double& { return c.train.loss.kernel.bandwidth; }));
    f.push_back(field("loss", "lambda_pos", [](RunConfig& c) -> double& { return c.train.loss.lambda_pos; }));
    f.push_back(field("loss", "lambda_sparse", [](RunConfig& c) -> double& { return c.train.loss.lambda_sparse; }));
    f.push_back(field("loss", "lambda_ortho", [](RunConfig& c) -> double& { return c.train.loss.lambda_ortho; }));
    f.push_back(field("loss", "mmd", [](RunConfig& c) -> bool& { return c.train.loss.mask.mmd; }));
    f.push_back(field("loss", "pos", [](RunConfig& c) -> bool& { return c.train.loss.mask.pos; }));
    f.push_back(field("loss", "sparse", [](RunConfig& c) -> bool& { return c.train.loss.mask.sparse; }));
    f.push_back(field("loss", "ortho", [](RunConfig& c) -> bool& { return c.train.loss.mask.ortho; }));
    f.push_back(field("loss", "normalize", [](RunConfig& c) -> bool& { return c.train.loss.mask.normalize; }));

    f.push_back(field("baseline", "alpha", [](RunConfig& c) -> double& { return c.baseline.alpha; }));
    f.push_back(field("baseline", "random_seed", [](RunConfig& c) -> std::uint64_t& { return c.baseline.random_seed; }));
    return f;
  }();
  return table;
}

}  // namespace detail

/// Unknown sections or keys are rejected so typos do not pass silently.
inline RunConfig parse_config(std::string_view text, RunConfig base = {}) {
  boost::property_tree::ptree tree;
  std::istringstream in{std::string(text)};
  try {
    boost::property_tree::ini_parser::read_ini(in, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError("malformed config (line " + std::to_string(e.line()) + "): " + e.message());
  }
  for (const auto& [section, body] : tree) {
    if (body.empty() && !body.data().empty())
      throw ConfigError("key '" + section + "' appears outside any section");
    for (const auto& [key, value] : body) {
      const auto& table = detail::fields();
      const auto it = std::find_if(table.begin(), table.end(),
                                   [&](const detail::Field& f) { return section == f.section && key == f.key; });
      if (it == table.end()) throw ConfigError("unknown config key [" + section + "] " + key);
      it->set(base, value.data());
    }
  }
  return base;
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open config file " + path);
  std::ostringstream text;
  text << in.rdbuf();
  return parse_config(text.str());
}

/// Canonical INI text for a resolved config. Paths are left out when
/// `include_paths` is false so the hash does not depend on where a run writes.
inline std::string to_ini(const RunConfig& cfg, bool include_paths = true) {
  std::ostringstream out;
  std::string_view current;
  for (const auto& f : detail::fields()) {
    if (f.is_path && !include_paths) continue;
    if (current != f.section) {
      if (!current.empty()) out << '\n';
      out << '[' << f.section << "]\n";
      current = f.section;
    }
    out << f.key << " = " << f.get(cfg) << '\n';
  }
  return out.str();
}

inline std::uint64_t config_hash(const RunConfig& cfg) {
  const std::string text = to_ini(cfg, false);
  Fnv1a h;
  h.update(text.data(), text.size());
  return h.digest();
}

inline std::string hex64(std::uint64_t x) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i, x >>= 4) s[static_cast<std::size_t>(i)] = kDigits[x & 0xF];
  return s;
}

}  // namespace matsteer
