#pragma once

// Persisted steering parameters. All numbers little-endian; doubles are
// stored as raw IEEE-754 bits so a save/load cycle is exact.

#include <array>
#include <cstdint>
#include <string>
#include <string_view>

#include "matsteer/dataset.hpp"
#include "matsteer/errors.hpp"
#include "matsteer/objectives.hpp"
#include "matsteer/steering.hpp"

namespace matsteer {

inline constexpr std::array<char, 4> kBundleMagic{'M', 'S', 'T', 'B'};
inline constexpr std::uint32_t kBundleFormatVersion = 1;

struct SteeringBundle {
  std::uint32_t version = kBundleFormatVersion;
  int d_model = 0;
  int layer = 0;
  ParamList params;
  LossConfig loss;
  std::uint64_t seed = 0;
  std::uint64_t config_hash = 0;

  int n_attributes() const noexcept { return static_cast<int>(params.size()); }

  bool operator==(const SteeringBundle&) const = default;
};

namespace detail {

inline std::uint8_t pack_mask(const ComponentMask& m) noexcept {
  return static_cast<std::uint8_t>((m.mmd ? 1 : 0) | (m.pos ? 2 : 0) | (m.sparse ? 4 : 0) | (m.ortho ? 8 : 0) |
                                   (m.normalize ? 16 : 0));
}

inline ComponentMask unpack_mask(std::uint8_t bits) noexcept {
  return {(bits & 1) != 0, (bits & 2) != 0, (bits & 4) != 0, (bits & 8) != 0, (bits & 16) != 0};
}

inline void put_vector(std::string& out, const Vector& v) {
  for (Eigen::Index i = 0; i < v.size(); ++i) put_le(out, v[i]);
}

inline Vector get_vector(ByteReader& in, int d, const char* what) {
  Vector v(d);
  for (int i = 0; i < d; ++i) v[i] = in.get<double>(what);
  return v;
}

}  // namespace detail

inline std::string encode_bundle(const SteeringBundle& b) {
  std::string out(kBundleMagic.begin(), kBundleMagic.end());
  detail::put_le(out, b.version);
  detail::put_le(out, static_cast<std::uint32_t>(b.d_model));
  detail::put_le(out, static_cast<std::uint32_t>(b.params.size()));
  detail::put_le(out, static_cast<std::int32_t>(b.layer));
  detail::put_le(out, b.seed);
  detail::put_le(out, b.config_hash);
  detail::put_le(out, b.loss.kernel.bandwidth);
  detail::put_le(out, b.loss.lambda_pos);
  detail::put_le(out, b.loss.lambda_sparse);
  detail::put_le(out, b.loss.lambda_ortho);
  detail::put_le(out, detail::pack_mask(b.loss.mask));
  for (const auto& p : b.params) {
    if (p.theta.size() != b.d_model || p.gate.weight.size() != b.d_model) throw InputError("bundle parameter dimension differs from d_model");
    detail::put_le(out, static_cast<std::int32_t>(p.attribute_id));
    detail::put_vector(out, p.theta);
    detail::put_vector(out, p.gate.weight);
    detail::put_le(out, p.gate.bias);
  }
  return out;
}

inline SteeringBundle decode_bundle(std::string_view bytes) {
  detail::ByteReader in(bytes);
  const auto magic = in.take(4, "magic");
  if (magic != std::string_view(kBundleMagic.data(), kBundleMagic.size()))
    throw FormatError("bad bundle magic", 0);
  SteeringBundle b;
  const std::size_t version_at = in.offset();
  b.version = in.get<std::uint32_t>("version");
  if (b.version != kBundleFormatVersion)
    throw FormatError("unsupported bundle version " + std::to_string(b.version), version_at);
  b.d_model = static_cast<int>(in.get<std::uint32_t>("d_model"));
  const auto n_attr = in.get<std::uint32_t>("attribute count");
  b.layer = in.get<std::int32_t>("layer");
  b.seed = in.get<std::uint64_t>("seed");
  b.config_hash = in.get<std::uint64_t>("config hash");
  b.loss.kernel.bandwidth = in.get<double>("bandwidth");
  b.loss.lambda_pos = in.get<double>("lambda_pos");
  b.loss.lambda_sparse = in.get<double>("lambda_sparse");
  b.loss.lambda_ortho = in.get<double>("lambda_ortho");
  b.loss.mask = detail::unpack_mask(in.get<std::uint8_t>("component mask"));
  const std::size_t per_attr = 4 + 8 * (2 * static_cast<std::size_t>(b.d_model) + 1);
  if (per_attr * n_attr != in.remaining())
    throw FormatError("bundle body size does not match its header", in.offset());
  for (std::uint32_t t = 0; t < n_attr; ++t) {
    AttributeParams p;
    p.attribute_id = in.get<std::int32_t>("attribute id");
    p.theta = detail::get_vector(in, b.d_model, "theta");
    p.gate.weight = detail::get_vector(in, b.d_model, "gate weight");
    p.gate.bias = in.get<double>("gate bias");
    b.params.push_back(std::move(p));
  }
  return b;
}

inline void save_bundle(const std::string& path, const SteeringBundle& b) { detail::write_file(path, encode_bundle(b)); }

inline SteeringBundle load_bundle(const std::string& path) { return decode_bundle(detail::read_file(path)); }

}  // namespace matsteer
