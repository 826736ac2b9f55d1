#include <gtest/gtest.h>

#include "support.hpp"

using namespace scdem;
using namespace scdem::testkit;

namespace {

Dense fixed_layer(std::vector<double> w, std::size_t in, std::size_t out, std::optional<Activation> act) {
  return Dense(Tensor::matrix(in, out, std::move(w), true), Tensor::zeros({out}, true), act);
}

// Trunk: identity. Tail: W1 = 2I (relu), W2 = [[1, -1], [0.5, 1]] (relu).
Backbone tiny_backbone(std::size_t tail_layers) {
  std::vector<Dense> trunk{fixed_layer({1, 0, 0, 1}, 2, 2, std::nullopt)};
  std::vector<Dense> tail{fixed_layer({2, 0, 0, 2}, 2, 2, Activation::relu)};
  if (tail_layers > 1) tail.push_back(fixed_layer({1, -1, 0.5, 1}, 2, 2, Activation::relu));
  return Backbone(1, std::move(trunk), std::move(tail));
}

BackboneConfig small_config() {
  BackboneConfig cfg;
  cfg.input_dim = 6;
  cfg.trunk_depth = 2;
  cfg.trunk_width = 10;
  cfg.tail_depth = 3;
  cfg.feature_dim = 8;
  return cfg;
}

std::vector<double> values_of(const Tensor& t) { return {t.values().begin(), t.values().end()}; }

TEST(Backbone, TinyOracleForward) {
  const Backbone bb = tiny_backbone(1);
  const Tensor out = bb.forward(Tensor::matrix(1, 2, {1, 1}));
  EXPECT_EQ(values_of(out), (std::vector<double>{2, 2}));
}

TEST(Backbone, TinyOracleIntermediateLayer) {
  const Backbone bb = tiny_backbone(2);
  const Tensor x = Tensor::matrix(1, 2, {1, 3});
  // Layer 1: relu(2x) = [2, 6]. Layer 2: relu([2, 6] W2) = relu([2 + 3, -2 + 6]) = [5, 4].
  EXPECT_EQ(values_of(bb.layer_features(x, 1)), (std::vector<double>{2, 6}));
  EXPECT_EQ(values_of(bb.layer_features(x, 2)), (std::vector<double>{5, 4}));
  EXPECT_EQ(values_of(bb.forward(x)), (std::vector<double>{5, 4}));
}

TEST(Backbone, LayerIndexOutOfRange) {
  Rng rng(1);
  const Backbone bb(1, small_config(), rng);
  const Tensor x = Tensor::zeros({2, 6});
  EXPECT_THROW(bb.layer_features(x, 0), IndexError);
  EXPECT_THROW(bb.layer_features(x, 4), IndexError);
}

TEST(Backbone, InputWidthMismatch) {
  Rng rng(1);
  const Backbone bb(1, small_config(), rng);
  EXPECT_THROW(bb.forward(Tensor::zeros({2, 5})), DimensionError);
}

TEST(Backbone, NonChainingLayersRejected) {
  std::vector<Dense> trunk{fixed_layer({1, 0, 0, 1}, 2, 2, std::nullopt)};
  std::vector<Dense> tail{fixed_layer({1, 2, 3}, 3, 1, std::nullopt)};
  EXPECT_THROW(Backbone(1, std::move(trunk), std::move(tail)), DimensionError);
}

TEST(Backbone, FirstLayerAndLastLayerDefinitions) {
  Rng rng(3);
  const Backbone bb(1, small_config(), rng);
  Gen gen(3);
  const Tensor x = gen.matrix(5, 6);
  EXPECT_EQ(values_of(bb.layer_features(x, 1)), values_of(bb.tail()[0].forward(bb.trunk_forward(x))));
  EXPECT_EQ(values_of(bb.layer_features(x, 3)), values_of(bb.forward(x)));
  EXPECT_EQ(bb.forward(x).dim(1), 8u);
}

TEST(Backbone, CompositionCoherenceProperty) {
  Gen gen(11);
  for (int trial = 0; trial < 40; ++trial) {
    Rng rng(gen.engine()());
    BackboneConfig cfg = small_config();
    cfg.tail_depth = gen.size(1, 4);
    cfg.activation = trial % 2 ? Activation::relu : Activation::tanh;
    const Backbone bb(1, cfg, rng);
    const Tensor x = gen.matrix(gen.size(1, 6), cfg.input_dim, false, -3, 3);
    const auto full = values_of(bb.forward(x));
    for (std::size_t k = 1; k <= cfg.tail_depth; ++k)
      EXPECT_EQ(values_of(bb.resume_from(bb.layer_features(x, k), k)), full) << "trial " << trial << " k " << k;
  }
}

TEST(Backbone, OnlyTailIsTrainable) {
  Rng rng(5);
  const Backbone bb(1, small_config(), rng);
  for (const auto& layer : bb.trunk()) EXPECT_FALSE(layer.trainable());
  for (const auto& layer : bb.tail()) EXPECT_TRUE(layer.trainable());
  ParamSet set;
  bb.register_all(set, "bb");
  std::size_t tail_params = 0;
  for (const auto& layer : bb.tail()) tail_params += layer.param_count();
  EXPECT_EQ(set.trainable_count(), tail_params);
}

TEST(Backbone, TrunkBitIdenticalAfterTraining) {
  Rng rng(5);
  Backbone bb(1, small_config(), rng);
  const auto trunk_before = bb.trunk_hash();
  const auto all_before = bb.param_hash();
  ParamSet set;
  bb.register_all(set, "bb");
  AdamState opt(AdamConfig{.lr = 1e-2});
  Gen gen(5);
  for (int step = 0; step < 25; ++step) {
    const Tensor loss = sum(bb.forward(gen.matrix(4, 6)));
    set.zero_grad();
    backward(loss);
    adam_step(set, opt);
  }
  EXPECT_EQ(bb.trunk_hash(), trunk_before);
  EXPECT_NE(bb.param_hash(), all_before);
  for (const auto& layer : bb.trunk()) {
    EXPECT_FALSE(layer.weight().has_grad() && std::any_of(layer.weight().grad().begin(), layer.weight().grad().end(),
                                                          [](double g) { return g != 0.0; }));
  }
}

TEST(Snapshot, EqualsLiveAtCopyAndStaysFixed) {
  Rng rng(9);
  std::vector<Backbone> live;
  live.emplace_back(1, small_config(), rng);
  live.emplace_back(2, small_config(), rng);
  const auto snaps = snapshot_all(live);
  ASSERT_EQ(snaps.size(), 2u);
  Gen gen(9);
  const Tensor x = gen.matrix(7, 6);
  for (std::size_t j = 0; j < 2; ++j) {
    EXPECT_EQ(values_of(snaps[j].forward(x)), values_of(live[j].forward(x)));
    EXPECT_EQ(snaps[j].source_id(), live[j].id());
  }
  const auto hash_before = snaps[0].param_hash();
  const auto out_before = values_of(snaps[0].forward(x));

  ParamSet set;
  for (const auto& bb : live) bb.register_tail(set, "bb" + std::to_string(bb.id()));
  AdamState opt(AdamConfig{.lr = 1e-2});
  for (int step = 0; step < 10; ++step) {
    const Tensor loss = sum(combined_features(live, x).combined);
    set.zero_grad();
    backward(loss);
    adam_step(set, opt);
  }
  EXPECT_NE(values_of(live[0].forward(x)), out_before);
  EXPECT_EQ(values_of(snaps[0].forward(x)), out_before);
  EXPECT_EQ(snaps[0].param_hash(), hash_before);
}

TEST(Snapshot, DirectMutationOfLiveDoesNotLeak) {
  Rng rng(4);
  std::vector<Backbone> live;
  live.emplace_back(1, small_config(), rng);
  const auto snaps = snapshot_all(live);
  const auto hash = snaps[0].param_hash();
  for (auto& v : live[0].tail()[0].weight().mutable_values()) v += 1.0;
  EXPECT_EQ(snaps[0].param_hash(), hash);
  EXPECT_NE(live[0].param_hash(), hash);
}

TEST(Snapshot, ReplacementKeepsCount) {
  Rng rng(2);
  std::vector<Backbone> live;
  for (std::size_t j = 1; j <= 3; ++j) live.emplace_back(j, small_config(), rng);
  auto snaps = snapshot_all(live);
  for (auto& v : live[1].tail()[2].bias().mutable_values()) v = 0.5;
  snaps = snapshot_all(live);
  EXPECT_EQ(snaps.size(), 3u);
  EXPECT_EQ(snaps[1].param_hash(), live[1].param_hash());
}

TEST(CombinedFeatures, ShapesAndOrder) {
  Rng rng(6);
  std::vector<Backbone> live;
  live.emplace_back(1, small_config(), rng);
  live.emplace_back(2, small_config(), rng);
  Gen gen(6);
  const Tensor x = gen.matrix(3, 6);
  const auto bundle = combined_features(live, x);
  ASSERT_EQ(bundle.combined.dim(1), 16u);
  const auto z1 = values_of(live[0].forward(x));
  const auto z2 = values_of(live[1].forward(x));
  const auto zf = values_of(bundle.combined);
  for (std::size_t r = 0; r < 3; ++r)
    for (std::size_t c = 0; c < 8; ++c) {
      EXPECT_EQ(zf[r * 16 + c], z1[r * 8 + c]);
      EXPECT_EQ(zf[r * 16 + 8 + c], z2[r * 8 + c]);
    }

  std::vector<Backbone> swapped{live[1], live[0]};
  const auto zs = values_of(combined_features(swapped, x).combined);
  for (std::size_t r = 0; r < 3; ++r)
    for (std::size_t c = 0; c < 8; ++c) EXPECT_EQ(zs[r * 16 + c], z2[r * 8 + c]);

  std::vector<Backbone> single{live[0]};
  EXPECT_EQ(values_of(combined_features(single, x).combined), z1);
  EXPECT_THROW(combined_features(std::vector<Backbone>{}, x), ConfigurationError);
}

TEST(Pretrain, ZeroEpochCapReturnsInitialization) {
  const auto src = synth_gaussian_tasks(4, 6, 40, 6.0, 77);
  PretrainConfig pcfg;
  pcfg.max_epochs = 0;
  const auto r = pretrain_backbone(1, small_config(), src.train, src.test, 4, pcfg, 123);
  Rng rng(123);
  const Backbone fresh(1, small_config(), rng);
  EXPECT_EQ(r.backbone.param_hash(), fresh.param_hash());
  EXPECT_EQ(r.epochs_run, 0u);
  EXPECT_FALSE(r.reached_target);
  EXPECT_FALSE(r.warning.empty());
}

TEST(Pretrain, DeterministicGivenSeed) {
  const auto src = synth_gaussian_tasks(4, 6, 40, 6.0, 77);
  PretrainConfig pcfg;
  pcfg.max_epochs = 3;
  const auto a = pretrain_backbone(1, small_config(), src.train, src.test, 4, pcfg, 5);
  const auto b = pretrain_backbone(1, small_config(), src.train, src.test, 4, pcfg, 5);
  const auto c = pretrain_backbone(1, small_config(), src.train, src.test, 4, pcfg, 6);
  EXPECT_EQ(a.backbone.param_hash(), b.backbone.param_hash());
  EXPECT_NE(a.backbone.param_hash(), c.backbone.param_hash());
  for (const auto& layer : a.backbone.trunk()) EXPECT_FALSE(layer.trainable());
}

TEST(Pretrain, TwoDisjointSourcesReachTarget) {
  // Default stand-in architecture on two independently drawn 8-class sources.
  BackboneConfig cfg;
  for (std::uint64_t k = 1; k <= 2; ++k) {
    const auto src = synth_gaussian_tasks(8, cfg.input_dim, 100, 6.0, 1000 + k);
    const auto r = pretrain_backbone(k, cfg, src.train, src.test, 8, PretrainConfig{}, 2000 + k);
    EXPECT_GE(r.source_accuracy, 0.95) << "backbone " << k;
    EXPECT_TRUE(r.reached_target);
    EXPECT_TRUE(r.warning.empty());
  }
}

TEST(Pretrain, EmptySourceRejected) {
  Dataset empty;
  const auto src = synth_gaussian_tasks(2, 6, 10, 6.0, 1);
  EXPECT_THROW(pretrain_backbone(1, small_config(), empty, src.test, 2, PretrainConfig{}, 1), ConfigurationError);
}

}  // namespace
