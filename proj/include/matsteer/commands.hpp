#pragma once

// The pipeline behind each CLI subcommand. Every command reads a resolved
// RunConfig and writes its outputs under cfg.out_dir.

#include <filesystem>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "matsteer/bundle.hpp"
#include "matsteer/config.hpp"
#include "matsteer/dataset.hpp"
#include "matsteer/errors.hpp"
#include "matsteer/harness.hpp"
#include "matsteer/metrics.hpp"
#include "matsteer/toy_lm.hpp"
#include "matsteer/trainer.hpp"

namespace matsteer {

inline constexpr const char* kSplitNames[] = {"train", "dev", "test"};

/// Plain `key=value` lines; `#` starts a comment line.
class Manifest {
 public:
  void set(const std::string& key, const std::string& value) { entries_[key] = value; }

  const std::string& get(const std::string& key) const {
    const auto it = entries_.find(key);
    if (it == entries_.end()) throw FormatError("manifest is missing key '" + key + "'", 0);
    return it->second;
  }

  int get_int(const std::string& key) const { return detail::parse_number<int>(get(key), key); }

  std::string str() const {
    std::ostringstream out;
    for (const auto& [k, v] : entries_) out << k << '=' << v << '\n';
    return out.str();
  }

  static Manifest parse(std::string_view text) {
    Manifest m;
    std::istringstream in{std::string(text)};
    std::string line;
    std::size_t offset = 0;
    while (std::getline(in, line)) {
      const std::size_t here = offset;
      offset += line.size() + 1;
      if (line.empty() || line[0] == '#') continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos) throw FormatError("manifest line without '='", here);
      m.entries_[line.substr(0, eq)] = line.substr(eq + 1);
    }
    return m;
  }

  bool operator==(const Manifest&) const = default;

 private:
  std::map<std::string, std::string> entries_;
};

namespace detail {

inline void ensure_dir(const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory '" + dir + "': " + ec.message());
}

inline std::string hash_line(std::uint64_t hash) { return "# config_hash=" + hex64(hash) + "\n"; }

inline std::string bytes_checksum(std::string_view bytes) {
  Fnv1a h;
  h.update(bytes.data(), bytes.size());
  return hex64(h.digest());
}

/// Drops leading `#` comment lines so the rest parses as plain CSV.
inline std::string strip_comments(std::string_view text) {
  while (!text.empty() && text.front() == '#') {
    const auto nl = text.find('\n');
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
  }
  return std::string(text);
}

}  // namespace detail

inline SplitData make_data(const RunConfig& cfg) {
  if (cfg.source == DataSource::kSynthetic) return gen_synthetic(cfg.synth);
  return gen_toy_task(cfg.toy_task());
}

struct DataInfo {
  int d_model = 0;
  int n_attributes = 0;
  int layer = 0;
};

inline Manifest cmd_gen(const RunConfig& cfg) {
  cfg.validate();
  const SplitData data = make_data(cfg);
  detail::ensure_dir(cfg.out_dir);
  const std::uint64_t hash = config_hash(cfg);
  Manifest m;
  m.set("config_hash", hex64(hash));
  m.set("source", cfg.source == DataSource::kSynthetic ? "synthetic" : "toylm");
  m.set("d_model", std::to_string(data.dim()));
  m.set("n_attributes", std::to_string(data.n_attributes()));
  m.set("layer", std::to_string(cfg.layer));
  m.set("seed", std::to_string(cfg.source == DataSource::kSynthetic ? cfg.synth.seed : cfg.toy.seed));
  const DatasetList* parts[] = {&data.train, &data.dev, &data.test};
  for (int i = 0; i < 3; ++i) {
    const std::string name = kSplitNames[i];
    const std::string bytes = encode_activations(flatten(*parts[i]), data.dim());
    detail::write_file(cfg.out_dir + "/" + name + ".mats", bytes);
    m.set(name + ".records", std::to_string(record_count(*parts[i])));
    m.set(name + ".checksum", detail::bytes_checksum(bytes));
  }
  // The generating spec, flattened as section.key entries.
  std::istringstream spec(to_ini(cfg, false));
  std::string line, section;
  while (std::getline(spec, line)) {
    if (line.empty()) continue;
    if (line.front() == '[') {
      section = line.substr(1, line.size() - 2);
      continue;
    }
    const auto eq = line.find(" = ");
    if (section == "synth" || section == "model" || section == "toy")
      m.set("spec." + section + "." + line.substr(0, eq), line.substr(eq + 3));
  }
  detail::write_file(cfg.out_dir + "/manifest.txt", detail::hash_line(hash) + m.str());
  return m;
}

inline Manifest load_manifest(const std::string& dir) {
  return Manifest::parse(detail::read_file(dir + "/manifest.txt"));
}

inline DataInfo data_info(const Manifest& m) {
  return {m.get_int("d_model"), m.get_int("n_attributes"), m.get_int("layer")};
}

/// The run's layer must be the one the activations were taken at.
inline void check_layer(const RunConfig& cfg, const DataInfo& info) {
  if (cfg.layer != info.layer)
    throw CompatibilityError("run layer " + std::to_string(cfg.layer) + " does not match data layer " +
                             std::to_string(info.layer) + " recorded in manifest.txt");
}

/// Loads one split written by cmd_gen and checks it against the manifest.
inline DatasetList load_split(const std::string& dir, const std::string& name, const Manifest& m) {
  const std::string bytes = detail::read_file(dir + "/" + name + ".mats");
  if (detail::bytes_checksum(bytes) != m.get(name + ".checksum"))
    throw FormatError(name + ".mats does not match the checksum in manifest.txt", 0);
  const ActivationFile file = decode_activations(bytes);
  const DataInfo info = data_info(m);
  if (file.d_model != info.d_model) throw FormatError(name + ".mats d_model disagrees with manifest.txt", 8);
  return group_records(file.records, info.n_attributes);
}

struct TrainOutcome {
  SteeringBundle bundle;
  TrainTrace trace;
};

inline TrainOutcome cmd_train(const RunConfig& cfg) {
  cfg.validate();
  const std::string in = cfg.input_dir();
  const Manifest m = load_manifest(in);
  const DataInfo info = data_info(m);
  check_layer(cfg, info);
  const DatasetList train_set = load_split(in, "train", m);
  const DatasetList dev_set = load_split(in, "dev", m);

  TrainOutcome out;
  out.trace = train(train_set, cfg.train, &dev_set);
  out.bundle.d_model = info.d_model;
  out.bundle.layer = info.layer;
  out.bundle.params = out.trace.final_params;
  out.bundle.loss = cfg.train.loss;
  out.bundle.seed = cfg.train.seed;
  out.bundle.config_hash = config_hash(cfg);

  detail::ensure_dir(cfg.out_dir);
  const std::string bundle_path = cfg.bundle_path();
  const auto parent = std::filesystem::path(bundle_path).parent_path();
  if (!parent.empty()) detail::ensure_dir(parent.string());
  save_bundle(bundle_path, out.bundle);
  detail::write_file(cfg.out_dir + "/trace.csv", detail::hash_line(out.bundle.config_hash) + trace_csv(out.trace));
  return out;
}

inline void check_compatible(const SteeringBundle& b, const DataInfo& info) {
  if (b.d_model != info.d_model)
    throw CompatibilityError("bundle d_model " + std::to_string(b.d_model) + " does not match data d_model " +
                             std::to_string(info.d_model));
  if (b.n_attributes() != info.n_attributes)
    throw CompatibilityError("bundle has " + std::to_string(b.n_attributes()) + " attributes, data has " +
                             std::to_string(info.n_attributes));
  if (b.layer != info.layer)
    throw CompatibilityError("bundle layer " + std::to_string(b.layer) + " does not match data layer " +
                             std::to_string(info.layer));
}

inline SteeringReport cmd_eval(const RunConfig& cfg) {
  cfg.validate();
  const std::string in = cfg.input_dir();
  const Manifest m = load_manifest(in);
  const SteeringBundle bundle = load_bundle(cfg.bundle_path());
  check_layer(cfg, data_info(m));
  check_compatible(bundle, data_info(m));
  const DatasetList train_set = load_split(in, "train", m);
  const DatasetList test_set = load_split(in, "test", m);

  const SteeringReport report = gating_report(test_set, compute_centroids(train_set), bundle.params, cfg.threshold,
                                              bundle.loss.mask.normalize);
  detail::ensure_dir(cfg.out_dir);
  const std::string head = detail::hash_line(config_hash(cfg));
  detail::write_file(cfg.out_dir + "/report.csv", head + report_csv(report));
  detail::write_file(cfg.out_dir + "/report.txt", head + report_text(report));
  detail::write_file(cfg.out_dir + "/gates.csv", head + gate_dump_csv(test_set, bundle.params));
  return report;
}

inline std::string ablation_csv(const std::vector<AblationRow>& rows) {
  std::ostringstream out;
  out << "label,mmd,pos,sparse,ortho,normalize,dev_metric\n";
  for (const auto& r : rows)
    out << r.label << ',' << r.mask.mmd << ',' << r.mask.pos << ',' << r.mask.sparse << ',' << r.mask.ortho << ','
        << r.mask.normalize << ',' << detail::shortest(r.metric) << '\n';
  return out.str();
}

inline std::vector<AblationRow> cmd_ablate(const RunConfig& cfg) {
  cfg.validate();
  const SplitData data = make_data(cfg);
  const auto rows = run_ablation(data.train, data.dev, cfg.train, standard_ablation_masks());
  detail::ensure_dir(cfg.out_dir);
  detail::write_file(cfg.out_dir + "/ablation.csv", detail::hash_line(config_hash(cfg)) + ablation_csv(rows));
  return rows;
}

inline std::vector<MethodRow> cmd_compare(const RunConfig& cfg) {
  cfg.validate();
  const auto rows = compare_methods(make_data(cfg), cfg.methods, cfg.train, cfg.baseline);
  detail::ensure_dir(cfg.out_dir);
  detail::write_file(cfg.out_dir + "/compare.csv",
                     detail::hash_line(config_hash(cfg)) + to_csv(compare_rows(rows, true)));
  return rows;
}

inline LayerSearchResult cmd_layersearch(const RunConfig& cfg) {
  cfg.validate();
  if (cfg.source != DataSource::kToyLM) throw ConfigError("layersearch needs source = toylm");
  const ToyTaskSpec task = cfg.toy_task();
  const ToyLM model(task.model);
  std::vector<int> layers = cfg.layers;
  if (layers.empty())
    for (int l = 0; l < model.n_layers(); ++l) layers.push_back(l);
  const auto result = grid_search_layer(model, make_template_sequences(task), layers, cfg.train);
  std::ostringstream csv;
  csv << detail::hash_line(config_hash(cfg)) << "layer,dev_metric,best\n";
  for (std::size_t i = 0; i < result.layers.size(); ++i)
    csv << result.layers[i] << ',' << detail::shortest(result.metrics[i]) << ','
        << (result.layers[i] == result.best_layer) << '\n';
  detail::ensure_dir(cfg.out_dir);
  detail::write_file(cfg.out_dir + "/layersearch.csv", csv.str());
  return result;
}

}  // namespace matsteer
