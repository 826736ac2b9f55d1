#pragma once

#include <numeric>
#include <string>

#include "scdem/backbones.hpp"
#include "scdem/harness/dataset.hpp"

namespace scdem {

struct PretrainConfig {
  std::size_t max_epochs = 30;
  std::size_t batch_size = 32;
  double target_accuracy = 0.95;
  AdamConfig adam{};
};

struct PretrainResult {
  Backbone backbone;
  double source_accuracy = 0.0;  // held-out accuracy of the temporary head
  std::size_t epochs_run = 0;
  bool reached_target = false;
  std::string warning;  // nonempty when the cap was hit first
};

namespace detail {

inline double head_accuracy(const Backbone& bb, const Dense& head, const Dataset& ds) {
  std::vector<std::size_t> idx(ds.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  const auto pred = argmax_rows(head.forward(bb.forward(ds.gather(idx))));
  std::size_t hits = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) hits += pred[i] == ds.labels[i];
  return static_cast<double>(hits) / static_cast<double>(pred.size());
}

}  // namespace detail

/// Trains a fresh backbone end to end (trunk included) with a temporary
/// linear head on its source task, stopping once held-out accuracy reaches
/// the target or the epoch cap is hit. The trunk is frozen on return.
inline PretrainResult pretrain_backbone(std::size_t id, const BackboneConfig& cfg, const Dataset& source_train,
                                        const Dataset& source_test, std::size_t num_classes,
                                        const PretrainConfig& pcfg, std::uint64_t seed) {
  if (source_train.size() == 0 || source_test.size() == 0) throw ConfigurationError("pretraining source is empty");
  Rng rng(seed);
  Backbone bb(id, cfg, rng);
  Dense head = Dense::glorot(cfg.feature_dim, num_classes, std::nullopt, rng);
  bb.set_trunk_trainable(true);

  ParamSet params;
  bb.register_all(params, "backbone");
  head.register_params(params, "head");
  AdamState opt(pcfg.adam);

  PretrainResult out;
  std::vector<std::size_t> order(source_train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t epoch = 0; epoch < pcfg.max_epochs; ++epoch) {
    rng.shuffle(order.begin(), order.end());
    for (std::size_t start = 0; start < order.size(); start += pcfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + pcfg.batch_size);
      std::span<const std::size_t> idx(order.data() + start, end - start);
      const Tensor x = source_train.gather(idx);
      const Tensor loss = cross_entropy(softmax(head.forward(bb.forward(x))), source_train.gather_labels(idx));
      params.zero_grad();
      backward(loss);
      adam_step(params, opt);
    }
    out.epochs_run = epoch + 1;
    out.source_accuracy = detail::head_accuracy(bb, head, source_test);
    if (out.source_accuracy >= pcfg.target_accuracy) {
      out.reached_target = true;
      break;
    }
  }
  if (pcfg.max_epochs == 0) out.source_accuracy = detail::head_accuracy(bb, head, source_test);
  if (!out.reached_target) {
    out.warning = "backbone " + std::to_string(id) + " reached source accuracy " +
                  std::to_string(out.source_accuracy) + " < target after " + std::to_string(out.epochs_run) +
                  " epochs";
  }
  bb.freeze_trunk();
  out.backbone = std::move(bb);
  return out;
}

}  // namespace scdem
