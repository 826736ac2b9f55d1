#pragma once

#include "support.hpp"

namespace scdem::testkit {

/// Small stand-in architecture: trunk 1x16, tail 3x8, tanh.
inline BackboneConfig tiny_arch(std::size_t d_x = 8) {
  BackboneConfig cfg;
  cfg.input_dim = d_x;
  cfg.trunk_depth = 1;
  cfg.trunk_width = 16;
  cfg.tail_depth = 3;
  cfg.feature_dim = 8;
  return cfg;
}

/// Backbones pretrained on their own synthetic sources (seeded per backbone).
inline std::vector<Backbone> tiny_backbones(std::size_t count, std::uint64_t seed, std::size_t d_x = 8) {
  std::vector<Backbone> out;
  PretrainConfig pcfg;
  pcfg.max_epochs = 10;
  for (std::size_t k = 1; k <= count; ++k) {
    const auto src = synth_gaussian_tasks(6, d_x, 60, 6.0, seed * 100 + k);
    out.push_back(pretrain_backbone(k, tiny_arch(d_x), src.train, src.test, 6, pcfg, seed * 100 + 50 + k).backbone);
  }
  return out;
}

inline TaskStream tiny_stream(std::size_t n_classes, std::size_t steps, std::uint64_t seed, std::size_t per_class = 40,
                              double separation = 10.0, std::size_t d_x = 8) {
  return build_class_incremental_stream(synth_gaussian_tasks(n_classes, d_x, per_class, separation, seed), steps);
}

inline TrainConfig quick_train(std::size_t epochs = 2, std::uint64_t seed = 1) {
  TrainConfig cfg;
  cfg.epochs_per_task = epochs;
  cfg.batch_size = 16;
  cfg.expert_dim = 12;
  cfg.seed = seed;
  return cfg;
}

}  // namespace scdem::testkit
