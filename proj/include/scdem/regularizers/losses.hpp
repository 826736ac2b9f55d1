#pragma once

#include <span>
#include <vector>

#include "scdem/backbones.hpp"
#include "scdem/experts.hpp"
#include "scdem/regularizers/sinkhorn.hpp"

namespace scdem {

/// Layer scorer for one backbone: affine d_z -> 16, gelu, affine 16 -> 1.
class Selector {
 public:
  static constexpr std::size_t kHiddenWidth = 16;

  Selector(std::size_t backbone_id, Dense hidden, Dense out)
      : backbone_id_(backbone_id), hidden_(std::move(hidden)), out_(std::move(out)) {
    if (hidden_.out_dim() != out_.in_dim() || out_.out_dim() != 1) throw DimensionError("selector layers do not chain");
  }

  static Selector create(std::size_t backbone_id, std::size_t feature_dim, Rng& rng) {
    return Selector(backbone_id, Dense::glorot(feature_dim, kHiddenWidth, Activation::gelu, rng),
                    Dense::glorot(kHiddenWidth, 1, std::nullopt, rng));
  }

  std::size_t backbone_id() const { return backbone_id_; }

  /// Batch-mean of the per-sample score of one layer's features.
  Tensor layer_logit(const Tensor& features) const { return mean(out_.forward(hidden_.forward(features))); }

  void register_params(ParamSet& set, const std::string& prefix) const {
    hidden_.register_params(set, prefix + ".hidden");
    out_.register_params(set, prefix + ".out");
  }

  std::uint64_t param_hash() const { return out_.hash(hidden_.hash()); }
  const Dense& hidden() const { return hidden_; }
  const Dense& out() const { return out_; }

 private:
  std::size_t backbone_id_;
  Dense hidden_;
  Dense out_;
};

inline Tensor sum_scalars(const std::vector<Tensor>& terms) {
  if (terms.empty()) return Tensor::scalar(0.0);
  if (terms.size() == 1) return terms.front();
  return sum(stack_scalars(terms));
}

/// Sum over prior experts of the batch-mean KL between predictions on live
/// and on snapshot combined features. `prior` holds experts 1..t-1; empty
/// means task 1 and yields 0.
inline Tensor com_loss(std::span<const Expert> prior, const Tensor& live_combined, const Tensor& frozen_combined) {
  std::vector<Tensor> terms;
  for (const auto& e : prior) {
    terms.push_back(kl_divergence(softmax(e.logits(live_combined)), softmax(e.logits(frozen_combined))));
  }
  return sum_scalars(terms);
}

/// Softmax over per-layer selector logits; a point on the L-simplex.
inline Tensor attention_weights(const Selector& sel, const std::vector<Tensor>& layer_feats) {
  if (layer_feats.empty()) throw DimensionError("attention_weights: no layers");
  std::vector<Tensor> logits;
  logits.reserve(layer_feats.size());
  for (const auto& z : layer_feats) logits.push_back(sel.layer_logit(z));
  return softmax(stack_scalars(logits));
}

/// Row-wise sum_k alpha[k] * z_k.
inline Tensor fused_features(const Tensor& alpha, const std::vector<Tensor>& layer_feats) {
  return weighted_sum(alpha, layer_feats);
}

/// Layer features of every backbone: outer index backbone, inner index layer.
using LayerFeatures = std::vector<std::vector<Tensor>>;

inline LayerFeatures collect_layers(const std::vector<Backbone>& backbones, const Tensor& x) {
  LayerFeatures out;
  for (const auto& bb : backbones) out.push_back(bb.tail_features(x));
  return out;
}

inline LayerFeatures collect_layers(const std::vector<BackboneSnapshot>& snapshots, const Tensor& x) {
  LayerFeatures out;
  for (const auto& s : snapshots) out.push_back(s.tail_features(x));
  return out;
}

/// Per-layer distribution consistency: sum_j sum_k S(Z^{j,k}, Zhat^{j,k}).
inline Tensor fdc_loss(const LayerFeatures& live, const LayerFeatures& frozen, const OTConfig& cfg) {
  if (live.size() != frozen.size()) throw DimensionError("fdc_loss: backbone counts differ");
  std::vector<Tensor> terms;
  for (std::size_t j = 0; j < live.size(); ++j) {
    if (live[j].size() != frozen[j].size()) throw DimensionError("fdc_loss: layer counts differ");
    for (std::size_t k = 0; k < live[j].size(); ++k) terms.push_back(sinkhorn_distance(live[j][k], frozen[j][k], cfg));
  }
  return sum_scalars(terms);
}

inline Tensor fdc_loss(const std::vector<Backbone>& backbones, const std::vector<BackboneSnapshot>& snapshots,
                       const Tensor& x, const OTConfig& cfg) {
  return fdc_loss(collect_layers(backbones, x), collect_layers(snapshots, x), cfg);
}

/// Attention-fused consistency: sum_j S(Z_fused_j, Zhat_fused_j). The same
/// selector scores both the live and the snapshot layer features.
inline Tensor fused_loss(const LayerFeatures& live, const LayerFeatures& frozen, const std::vector<Selector>& selectors,
                         const OTConfig& cfg) {
  if (live.size() != frozen.size() || live.size() != selectors.size()) {
    throw DimensionError("fused_loss: need one selector and one snapshot per backbone");
  }
  std::vector<Tensor> terms;
  for (std::size_t j = 0; j < live.size(); ++j) {
    const Tensor alpha = attention_weights(selectors[j], live[j]);
    const Tensor alpha_hat = attention_weights(selectors[j], frozen[j]);
    terms.push_back(sinkhorn_distance(fused_features(alpha, live[j]), fused_features(alpha_hat, frozen[j]), cfg));
  }
  return sum_scalars(terms);
}

inline Tensor fused_loss(const std::vector<Backbone>& backbones, const std::vector<BackboneSnapshot>& snapshots,
                         const std::vector<Selector>& selectors, const Tensor& x, const OTConfig& cfg) {
  return fused_loss(collect_layers(backbones, x), collect_layers(snapshots, x), selectors, cfg);
}

}  // namespace scdem
