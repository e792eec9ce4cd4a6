#pragma once

// Training-free steering quality measures: cosine-centroid flip rate and
// positive preservation.

#include <cmath>
#include <functional>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "matsteer/dataset.hpp"
#include "matsteer/errors.hpp"
#include "matsteer/steering.hpp"

namespace matsteer {

struct Centroids {
  std::vector<Vector> positive;
  std::vector<Vector> negative;
};

inline Vector mean_of(const std::vector<ActivationRecord>& bucket) {
  if (bucket.empty()) throw InputError("mean of an empty bucket");
  Vector m = Vector::Zero(bucket.front().vector.size());
  for (const auto& r : bucket) m += r.vector;
  return m / static_cast<double>(bucket.size());
}

/// Per-attribute centroids; pass the training split only.
inline Centroids compute_centroids(const DatasetList& train) {
  Centroids c;
  for (const auto& ds : train) {
    c.positive.push_back(mean_of(ds.positives));
    c.negative.push_back(mean_of(ds.negatives));
  }
  return c;
}

inline double cosine_distance(const Vector& x, const Vector& y) {
  const double denom = x.norm() * y.norm();
  if (denom == 0.0) return 1.0;
  return 1.0 - x.dot(y) / denom;
}

/// Maps a record to its (possibly) steered activation.
using Editor = std::function<Vector(const ActivationRecord&)>;

inline Editor identity_editor() {
  return [](const ActivationRecord& r) { return r.vector; };
}

/// Learned gated steering. Tokens at or beyond `span_end` (when set) are left
/// untouched, which restricts intervention to a prompt prefix.
inline Editor matsteer_editor(ParamList params, bool renormalize, std::optional<std::uint32_t> span_end = {}) {
  return [params = std::move(params), renormalize, span_end](const ActivationRecord& r) -> Vector {
    if (span_end && r.token_index >= *span_end) return r.vector;
    return steer(r.vector, params, renormalize);
  };
}

inline bool on_positive_side(const Vector& v, const Centroids& c, int attribute) {
  const auto t = static_cast<std::size_t>(attribute);
  return cosine_distance(v, c.positive[t]) < cosine_distance(v, c.negative[t]);
}

inline void check_centroids(const AttributeDataset& ds, const Centroids& c) {
  if (ds.attribute_id < 0 || static_cast<std::size_t>(ds.attribute_id) >= c.positive.size())
    throw InputError("no centroids for attribute " + std::to_string(ds.attribute_id));
}

/// Fraction of negatives whose edited activation is strictly nearer (cosine)
/// the positive centroid than the negative one.
inline double flip_rate(const AttributeDataset& test, const Editor& edit, const Centroids& c) {
  if (test.negatives.empty()) throw InputError("flip_rate: empty test set");
  check_centroids(test, c);
  std::size_t flipped = 0;
  for (const auto& r : test.negatives)
    if (on_positive_side(edit(r), c, test.attribute_id)) ++flipped;
  return static_cast<double>(flipped) / static_cast<double>(test.negatives.size());
}

inline double flip_rate(const AttributeDataset& test, const ParamList& params, const Centroids& c,
                        bool renormalize = true) {
  return flip_rate(test, matsteer_editor(params, renormalize), c);
}

/// Fraction of positives still on the positive side after editing.
inline double positive_preservation(const AttributeDataset& test, const Editor& edit, const Centroids& c) {
  if (test.positives.empty()) throw InputError("positive_preservation: empty test set");
  check_centroids(test, c);
  std::size_t kept = 0;
  for (const auto& r : test.positives)
    if (on_positive_side(edit(r), c, test.attribute_id)) ++kept;
  return static_cast<double>(kept) / static_cast<double>(test.positives.size());
}

inline std::vector<double> flip_rates(const DatasetList& test, const Editor& edit, const Centroids& c) {
  std::vector<double> out;
  for (const auto& ds : test) out.push_back(flip_rate(ds, edit, c));
  return out;
}

inline std::vector<double> preservation_rates(const DatasetList& test, const Editor& edit, const Centroids& c) {
  std::vector<double> out;
  for (const auto& ds : test) out.push_back(positive_preservation(ds, edit, c));
  return out;
}

inline double mean(std::span<const double> xs) {
  if (xs.empty()) return 0.0;
  return std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

}  // namespace matsteer
