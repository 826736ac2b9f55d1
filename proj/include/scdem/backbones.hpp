#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "scdem/numerics/dense.hpp"

namespace scdem {

struct BackboneConfig {
  std::size_t input_dim = 32;
  std::size_t trunk_depth = 2;
  std::size_t trunk_width = 64;
  std::size_t tail_depth = 3;  // L
  std::size_t feature_dim = 32;  // d_z
  Activation activation = Activation::tanh;
};

/// Feed-forward feature extractor: a frozen trunk followed by L trainable
/// tail layers whose outputs are the layer-wise feature taps.
class Backbone {
 public:
  Backbone() = default;

  Backbone(std::size_t id, std::vector<Dense> trunk, std::vector<Dense> tail)
      : id_(id), trunk_(std::move(trunk)), tail_(std::move(tail)) {
    if (tail_.empty()) throw ConfigurationError("backbone needs at least one tail layer");
    std::size_t width = trunk_.empty() ? tail_.front().in_dim() : trunk_.front().in_dim();
    for (const auto* layers : {&trunk_, &tail_}) {
      for (const auto& layer : *layers) {
        if (layer.in_dim() != width) throw DimensionError("backbone layers do not chain");
        width = layer.out_dim();
      }
    }
    freeze_trunk();
  }

  /// Glorot-initialized backbone following `cfg`.
  Backbone(std::size_t id, const BackboneConfig& cfg, Rng& rng) : id_(id) {
    if (cfg.tail_depth == 0) throw ConfigurationError("tail_depth must be >= 1");
    std::size_t width = cfg.input_dim;
    for (std::size_t i = 0; i < cfg.trunk_depth; ++i) {
      trunk_.push_back(Dense::glorot(width, cfg.trunk_width, cfg.activation, rng));
      width = cfg.trunk_width;
    }
    for (std::size_t i = 0; i < cfg.tail_depth; ++i) {
      tail_.push_back(Dense::glorot(width, cfg.feature_dim, cfg.activation, rng));
      width = cfg.feature_dim;
    }
    freeze_trunk();
  }

  std::size_t id() const { return id_; }
  std::size_t input_dim() const { return trunk_.empty() ? tail_.front().in_dim() : trunk_.front().in_dim(); }
  std::size_t feature_dim() const { return tail_.back().out_dim(); }
  std::size_t tail_depth() const { return tail_.size(); }

  Tensor trunk_forward(const Tensor& x) const {
    if (x.rank() != 2 || x.dim(1) != input_dim()) {
      throw DimensionError("backbone " + std::to_string(id_) + " expects inputs of width " +
                           std::to_string(input_dim()) + ", got " + shape_string(x.shape()));
    }
    Tensor h = x;
    for (const auto& layer : trunk_) h = layer.forward(h);
    return h;
  }

  /// Outputs of tail layers 1..L in one pass.
  std::vector<Tensor> tail_features(const Tensor& x) const {
    std::vector<Tensor> out;
    out.reserve(tail_.size());
    Tensor h = trunk_forward(x);
    for (const auto& layer : tail_) {
      h = layer.forward(h);
      out.push_back(h);
    }
    return out;
  }

  /// Trunk output passed through the first k tail layers, 1 <= k <= L.
  Tensor layer_features(const Tensor& x, std::size_t k) const {
    if (k < 1 || k > tail_.size()) {
      throw IndexError("layer index " + std::to_string(k) + " outside [1," + std::to_string(tail_.size()) + "]");
    }
    Tensor h = trunk_forward(x);
    for (std::size_t i = 0; i < k; ++i) h = tail_[i].forward(h);
    return h;
  }

  /// Continues from a layer-k feature through the remaining tail layers.
  Tensor resume_from(const Tensor& feature, std::size_t k) const {
    if (k < 1 || k > tail_.size()) throw IndexError("layer index out of range");
    Tensor h = feature;
    for (std::size_t i = k; i < tail_.size(); ++i) h = tail_[i].forward(h);
    return h;
  }

  Tensor forward(const Tensor& x) const { return layer_features(x, tail_.size()); }

  void freeze_trunk() {
    for (auto& layer : trunk_) layer.set_trainable(false);
  }
  void set_trunk_trainable(bool flag) {
    for (auto& layer : trunk_) layer.set_trainable(flag);
  }
  void set_tail_trainable(bool flag) {
    for (auto& layer : tail_) layer.set_trainable(flag);
  }

  void register_tail(ParamSet& set, const std::string& prefix) const {
    for (std::size_t i = 0; i < tail_.size(); ++i) tail_[i].register_params(set, prefix + ".tail" + std::to_string(i));
  }
  void register_all(ParamSet& set, const std::string& prefix) const {
    for (std::size_t i = 0; i < trunk_.size(); ++i) trunk_[i].register_params(set, prefix + ".trunk" + std::to_string(i));
    register_tail(set, prefix);
  }

  std::uint64_t trunk_hash() const {
    std::uint64_t h = 1469598103934665603ULL;
    for (const auto& layer : trunk_) h = layer.hash(h);
    return h;
  }
  std::uint64_t param_hash() const {
    std::uint64_t h = trunk_hash();
    for (const auto& layer : tail_) h = layer.hash(h);
    return h;
  }
  std::size_t param_count() const {
    std::size_t n = 0;
    for (const auto& l : trunk_) n += l.param_count();
    for (const auto& l : tail_) n += l.param_count();
    return n;
  }

  const std::vector<Dense>& trunk() const { return trunk_; }
  const std::vector<Dense>& tail() const { return tail_; }
  std::vector<Dense>& tail() { return tail_; }

 private:
  std::size_t id_ = 0;
  std::vector<Dense> trunk_;
  std::vector<Dense> tail_;
};

/// Immutable deep copy of a backbone taken at a task boundary.
class BackboneSnapshot {
 public:
  explicit BackboneSnapshot(const Backbone& live) : frozen_(live) {
    frozen_.set_trunk_trainable(false);
    frozen_.set_tail_trainable(false);
  }

  std::size_t source_id() const { return frozen_.id(); }
  Tensor forward(const Tensor& x) const { return frozen_.forward(x); }
  Tensor layer_features(const Tensor& x, std::size_t k) const { return frozen_.layer_features(x, k); }
  std::vector<Tensor> tail_features(const Tensor& x) const { return frozen_.tail_features(x); }
  std::uint64_t param_hash() const { return frozen_.param_hash(); }
  const Backbone& backbone() const { return frozen_; }

 private:
  Backbone frozen_;
};

/// Per-backbone features and their column-wise concatenation.
struct FeatureBundle {
  std::vector<Tensor> per_backbone;
  Tensor combined;
};

inline FeatureBundle make_bundle(std::vector<Tensor> per_backbone) {
  if (per_backbone.empty()) throw ConfigurationError("feature bundle needs at least one backbone");
  FeatureBundle out;
  out.combined = concat(per_backbone);
  out.per_backbone = std::move(per_backbone);
  return out;
}

inline FeatureBundle combined_features(const std::vector<Backbone>& backbones, const Tensor& x) {
  if (backbones.empty()) throw ConfigurationError("combined_features: no backbones");
  std::vector<Tensor> parts;
  for (const auto& bb : backbones) parts.push_back(bb.forward(x));
  return make_bundle(std::move(parts));
}

inline FeatureBundle combined_features(const std::vector<BackboneSnapshot>& snapshots, const Tensor& x) {
  if (snapshots.empty()) throw ConfigurationError("combined_features: no snapshots");
  std::vector<Tensor> parts;
  for (const auto& s : snapshots) parts.push_back(s.forward(x));
  return make_bundle(std::move(parts));
}

/// One snapshot per backbone, in backbone order. Callers replace their
/// previous set with the result.
inline std::vector<BackboneSnapshot> snapshot_all(const std::vector<Backbone>& backbones) {
  std::vector<BackboneSnapshot> out;
  out.reserve(backbones.size());
  for (const auto& bb : backbones) out.emplace_back(bb);
  return out;
}

}  // namespace scdem
