#pragma once

// A small pre-norm decoder-only transformer with a hook on the output of
// each self-attention sublayer (before the residual add).

#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "matsteer/errors.hpp"
#include "matsteer/rng.hpp"
#include "matsteer/types.hpp"

namespace matsteer {

struct ToyLMConfig {
  int vocab_size = 64;
  int d_model = 32;
  int n_layers = 4;
  int n_heads = 4;
  int max_seq_len = 32;
  std::uint64_t seed = 1;

  void validate() const {
    if (vocab_size <= 0 || d_model <= 0 || n_layers <= 0 || n_heads <= 0 || max_seq_len <= 0)
      throw ConfigError("toy LM dimensions must be positive");
    if (d_model % n_heads != 0)
      throw ConfigError("d_model (" + std::to_string(d_model) + ") must be divisible by n_heads (" +
                        std::to_string(n_heads) + ")");
  }
};

class ToyLM {
 public:
  /// Called with (layer, attention output rows). The hook may edit the rows;
  /// the edited values are what the residual stream receives.
  using AttentionHook = std::function<void(int, Matrix&)>;

  explicit ToyLM(const ToyLMConfig& config) : config_(config) {
    config_.validate();
    const int d = config_.d_model;
    const int ff = 4 * d;
    Rng rng(config_.seed);
    auto init = [&rng](Matrix& m, Eigen::Index rows, Eigen::Index cols, double scale) {
      m.resize(rows, cols);
      for (Eigen::Index c = 0; c < cols; ++c)
        for (Eigen::Index r = 0; r < rows; ++r) m(r, c) = rng.uniform(-scale, scale);
    };
    init(embedding_, config_.vocab_size, d, 1.0);
    init(positional_, config_.max_seq_len, d, 0.5);
    const double proj_scale = 1.0 / std::sqrt(static_cast<double>(d));
    layers_.resize(static_cast<std::size_t>(config_.n_layers));
    for (auto& layer : layers_) {
      init(layer.wq, d, d, proj_scale);
      init(layer.wk, d, d, proj_scale);
      init(layer.wv, d, d, proj_scale);
      init(layer.wo, d, d, proj_scale);
      init(layer.w1, d, ff, proj_scale);
      init(layer.w2, ff, d, 1.0 / std::sqrt(static_cast<double>(ff)));
      Matrix b1;
      init(b1, 1, ff, 0.1);
      layer.b1 = b1.row(0);
      Matrix b2;
      init(b2, 1, d, 0.1);
      layer.b2 = b2.row(0);
    }
    init(unembedding_, d, config_.vocab_size, proj_scale);
  }

  const ToyLMConfig& config() const noexcept { return config_; }
  int n_layers() const noexcept { return config_.n_layers; }
  int d_model() const noexcept { return config_.d_model; }

  /// Logits, one row per input token.
  Matrix forward(TokenSpan tokens) const { return run(tokens, nullptr, config_.n_layers); }

  Matrix forward(TokenSpan tokens, const AttentionHook& hook) const {
    return run(tokens, &hook, config_.n_layers);
  }

  /// Self-attention sublayer output at `layer`, one vector per token.
  std::vector<Vector> extract_activations(int layer, TokenSpan tokens) const {
    check_layer(layer);
    std::vector<Vector> out;
    out.reserve(tokens.size());
    AttentionHook capture = [&](int l, Matrix& attn) {
      if (l != layer) return;
      for (Eigen::Index r = 0; r < attn.rows(); ++r) out.emplace_back(attn.row(r).transpose());
    };
    run(tokens, &capture, layer + 1);
    return out;
  }

  void check_layer(int layer) const {
    if (layer < 0 || layer >= config_.n_layers)
      throw InputError("layer " + std::to_string(layer) + " outside [0, " +
                       std::to_string(config_.n_layers) + ")");
  }

  std::uint64_t checksum() const noexcept {
    Fnv1a h;
    h.update(embedding_);
    h.update(positional_);
    for (const auto& layer : layers_) {
      h.update(layer.wq);
      h.update(layer.wk);
      h.update(layer.wv);
      h.update(layer.wo);
      h.update(layer.w1);
      h.update(layer.b1);
      h.update(layer.w2);
      h.update(layer.b2);
    }
    h.update(unembedding_);
    return h.digest();
  }

 private:
  struct Layer {
    Matrix wq, wk, wv, wo, w1, w2;
    Eigen::RowVectorXd b1, b2;
  };

  static Matrix layer_norm(const Matrix& x) {
    Matrix y(x.rows(), x.cols());
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
      const double mean = x.row(r).mean();
      const double var = (x.row(r).array() - mean).square().mean();
      y.row(r) = (x.row(r).array() - mean) / std::sqrt(var + 1e-5);
    }
    return y;
  }

  Matrix attention(const Layer& layer, const Matrix& x) const {
    const Eigen::Index n = x.rows();
    const int heads = config_.n_heads;
    const int dh = config_.d_model / heads;
    const Matrix q = x * layer.wq;
    const Matrix k = x * layer.wk;
    const Matrix v = x * layer.wv;
    Matrix concat(n, config_.d_model);
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    for (int h = 0; h < heads; ++h) {
      const auto qh = q.middleCols(h * dh, dh);
      const auto kh = k.middleCols(h * dh, dh);
      const auto vh = v.middleCols(h * dh, dh);
      for (Eigen::Index i = 0; i < n; ++i) {
        Eigen::VectorXd scores = (kh.topRows(i + 1) * qh.row(i).transpose()) * scale;
        const double top = scores.maxCoeff();
        scores = (scores.array() - top).exp();
        scores /= scores.sum();
        concat.block(i, h * dh, 1, dh) = scores.transpose() * vh.topRows(i + 1);
      }
    }
    return concat * layer.wo;
  }

  Matrix run(TokenSpan tokens, const AttentionHook* hook, int layers_to_run) const {
    if (static_cast<long long>(tokens.size()) > config_.max_seq_len)
      throw InputError("sequence length " + std::to_string(tokens.size()) + " exceeds max_seq_len " +
                       std::to_string(config_.max_seq_len));
    for (std::size_t i = 0; i < tokens.size(); ++i)
      if (tokens[i] < 0 || tokens[i] >= config_.vocab_size)
        throw InputError("token id " + std::to_string(tokens[i]) + " at position " + std::to_string(i) +
                         " outside vocabulary of size " + std::to_string(config_.vocab_size));
    const auto n = static_cast<Eigen::Index>(tokens.size());
    if (n == 0) return Matrix(0, config_.vocab_size);

    Matrix x(n, config_.d_model);
    for (Eigen::Index i = 0; i < n; ++i) x.row(i) = embedding_.row(tokens[i]) + positional_.row(i);

    for (int l = 0; l < layers_to_run; ++l) {
      const Layer& layer = layers_[static_cast<std::size_t>(l)];
      Matrix attn = attention(layer, layer_norm(x));
      if (hook != nullptr && *hook) (*hook)(l, attn);
      x += attn;
      Matrix hidden = layer_norm(x) * layer.w1;
      hidden.rowwise() += layer.b1;
      hidden = hidden.unaryExpr([](double z) {
        return 0.5 * z * (1.0 + std::tanh(0.7978845608028654 * (z + 0.044715 * z * z * z)));
      });
      Matrix mlp = hidden * layer.w2;
      mlp.rowwise() += layer.b2;
      x += mlp;
    }
    if (layers_to_run < config_.n_layers) return Matrix(0, 0);
    return layer_norm(x) * unembedding_;
  }

  ToyLMConfig config_;
  Matrix embedding_;
  Matrix positional_;
  std::vector<Layer> layers_;
  Matrix unembedding_;
};

}  // namespace matsteer
