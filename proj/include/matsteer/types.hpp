#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <span>
#include <vector>

namespace matsteer {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using TokenId = std::int32_t;
using TokenSpan = std::span<const TokenId>;

/// 64-bit FNV-1a, used for parameter checksums and config hashes.
class Fnv1a {
 public:
  void update(const void* data, std::size_t size) noexcept {
    const auto* bytes = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < size; ++i) {
      hash_ ^= bytes[i];
      hash_ *= 0x100000001B3ULL;
    }
  }
  template <typename Derived>
  void update(const Eigen::DenseBase<Derived>& m) noexcept {
    for (Eigen::Index c = 0; c < m.cols(); ++c)
      for (Eigen::Index r = 0; r < m.rows(); ++r) {
        const double v = m(r, c);
        update(&v, sizeof v);
      }
  }
  std::uint64_t digest() const noexcept { return hash_; }

 private:
  std::uint64_t hash_ = 0xCBF29CE484222325ULL;
};

}  // namespace matsteer
