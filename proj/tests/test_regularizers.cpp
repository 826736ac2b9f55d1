#include <gtest/gtest.h>

#include "oracles.hpp"

using namespace scdem;
using namespace scdem::testkit;

namespace {

std::vector<double> values_of(const Tensor& t) { return {t.values().begin(), t.values().end()}; }

Dense fixed(std::vector<double> w, std::vector<double> b, std::size_t in, std::size_t out,
            std::optional<Activation> act) {
  return Dense(Tensor::matrix(in, out, std::move(w), true), Tensor::vector(std::move(b), true), act);
}

OTConfig tight() {
  OTConfig c;
  c.tol = 1e-12;
  c.max_iters = 500;
  return c;
}

// ---- sinkhorn_distance / exact_ot ----

TEST(Sinkhorn, IdenticalSetsGiveZero) {
  Gen gen(1);
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor x = gen.matrix(gen.size(1, 8), 3);
    EXPECT_EQ(sinkhorn_distance(x, x.clone(), OTConfig{}).item(), 0.0);
    EXPECT_EQ(exact_ot(x, x.clone()), 0.0);
  }
}

TEST(Sinkhorn, OneDimensionalExample) {
  const Tensor x = Tensor::matrix(2, 1, {0, 1});
  const Tensor y = Tensor::matrix(2, 1, {2, 3});
  EXPECT_DOUBLE_EQ(exact_ot(x, y), 4.0);
  EXPECT_DOUBLE_EQ(brute_force_ot(x, y), 4.0);
  OTConfig cfg = tight();
  cfg.epsilon = 1e-3;
  EXPECT_NEAR(sinkhorn_distance(x, y, cfg).item(), 4.0, 4.0 * 0.02);
}

TEST(Sinkhorn, SingletonsReduceToSquaredDistance) {
  const Tensor x = Tensor::matrix(1, 3, {1, 2, 3});
  const Tensor y = Tensor::matrix(1, 3, {0, 4, 3});
  EXPECT_DOUBLE_EQ(sinkhorn_distance(x, y, OTConfig{}).item(), 5.0);
}

TEST(Sinkhorn, SymmetricAndNonnegative) {
  Gen gen(2);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = gen.size(1, 7), m = trial % 3 == 0 ? n : gen.size(1, 7), d = gen.size(1, 4);
    const Tensor x = gen.matrix(n, d), y = gen.matrix(m, d, false, -1, 1.5);
    OTConfig cfg;
    cfg.epsilon = gen.uniform(0.005, 0.5);
    const double xy = sinkhorn_distance(x, y, cfg).item();
    const double yx = sinkhorn_distance(y, x, cfg).item();
    EXPECT_NEAR(xy, yx, 1e-9) << "trial " << trial;
    EXPECT_GE(xy, 0.0);
  }
}

TEST(Sinkhorn, TranslationInvariance) {
  Gen gen(3);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t b = gen.size(2, 6), d = gen.size(1, 3);
    Tensor x = gen.matrix(b, d), y = gen.matrix(b, d);
    const auto shift = gen.values(d, -5, 5);
    Tensor xs = x.clone(), ys = y.clone();
    for (std::size_t i = 0; i < b; ++i)
      for (std::size_t k = 0; k < d; ++k) {
        xs.mutable_values()[i * d + k] += shift[k];
        ys.mutable_values()[i * d + k] += shift[k];
      }
    EXPECT_NEAR(exact_ot(x, y), exact_ot(xs, ys), 1e-12);
    EXPECT_NEAR(sinkhorn_distance(x, y, tight()).item(), sinkhorn_distance(xs, ys, tight()).item(), 1e-9);
  }
}

TEST(ExactOT, MatchesPermutationOracle) {
  Gen gen(4);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t b = trial < 50 ? 3 : gen.size(1, 7), d = gen.size(1, 4);
    const Tensor x = gen.matrix(b, d, false, -2, 2), y = gen.matrix(b, d, false, -2, 2);
    EXPECT_NEAR(exact_ot(x, y), brute_force_ot(x, y), 1e-12) << "trial " << trial;
  }
}

TEST(ExactOT, Contract) {
  EXPECT_THROW(exact_ot(Tensor::zeros({17, 2}), Tensor::zeros({17, 2})), ContractError);
  EXPECT_NO_THROW(exact_ot(Tensor::zeros({16, 2}), Tensor::zeros({16, 2})));
  EXPECT_THROW(exact_ot(Tensor::zeros({3, 2}), Tensor::zeros({4, 2})), DimensionError);
}

TEST(Sinkhorn, ConvergesToExactAsEpsilonShrinks) {
  const auto sweep = sinkhorn_vs_exact(2024, 100, 1e-3, 0.02);
  EXPECT_EQ(sweep.failures, 0u) << "worst relative error " << sweep.worst_relative_error;
}

TEST(Sinkhorn, ErrorShrinksWithEpsilon) {
  const double coarse = sinkhorn_vs_exact(7, 30, 0.1, 1.0).worst_relative_error;
  const double fine = sinkhorn_vs_exact(7, 30, 1e-3, 1.0).worst_relative_error;
  EXPECT_LT(fine, coarse);
}

TEST(Sinkhorn, NonConvergenceIsReportedNotThrown) {
  Gen gen(5);
  const Tensor x = gen.matrix(6, 2), y = gen.matrix(6, 2, false, 0, 2);
  OTConfig cfg;
  cfg.max_iters = 1;
  cfg.tol = 1e-300;
  SinkhornDiagnostics diag;
  const double v = sinkhorn_distance(x, y, cfg, &diag).item();
  EXPECT_FALSE(diag.converged);
  EXPECT_TRUE(std::isfinite(v));
  EXPECT_EQ(diag.value, v);

  SinkhornDiagnostics ok;
  sinkhorn_distance(x, y, OTConfig{}, &ok);
  EXPECT_TRUE(ok.converged);
  EXPECT_LT(ok.marginal_error, OTConfig{}.tol);
}

TEST(Sinkhorn, InvalidInputs) {
  OTConfig bad;
  bad.epsilon = 0.0;
  EXPECT_THROW(sinkhorn_distance(Tensor::zeros({2, 2}), Tensor::zeros({2, 2}), bad), ConfigurationError);
  bad = OTConfig{};
  bad.max_iters = 0;
  EXPECT_THROW(bad.validate(), ConfigurationError);
  EXPECT_THROW(sinkhorn_distance(Tensor::zeros({2, 2}), Tensor::zeros({2, 3}), OTConfig{}), DimensionError);
}

// ---- com_loss ----

TEST(Com, EmptyPriorAndIdenticalInputsGiveZero) {
  Rng rng(1);
  ExpertRegistry reg;
  reg.create(1, 4, 3, {0, 1}, rng).freeze();
  Gen gen(1);
  const Tensor z = gen.matrix(5, 4);
  EXPECT_EQ(com_loss({}, z, z).item(), 0.0);
  EXPECT_EQ(com_loss(std::span<const Expert>(&reg[0], 1), z, z.clone()).item(), 0.0);
}

TEST(Com, KnownDistributionsExample) {
  // relu adapter and identity classifier pass positive inputs straight to the logits.
  ExpertRegistry reg;
  reg.add(Expert(1, fixed({1, 0, 0, 1}, {0, 0}, 2, 2, Activation::relu),
                 fixed({1, 0, 0, 1}, {0, 0}, 2, 2, std::nullopt), {0, 1}, true));
  const Tensor live = Tensor::matrix(1, 2, {std::log(7.0), std::log(3.0)});  // softmax (0.7, 0.3)
  const Tensor frozen = Tensor::matrix(1, 2, {1.0, 1.0});                   // softmax (0.5, 0.5)
  const double oracle = 0.7 * std::log(0.7 / 0.5) + 0.3 * std::log(0.3 / 0.5);
  const double v = com_loss(std::span<const Expert>(&reg[0], 1), live, frozen).item();
  EXPECT_NEAR(v, oracle, 1e-12);
  EXPECT_NEAR(v, 0.08228, 5e-6);
}

TEST(Com, SumsOverPriorExperts) {
  Rng rng(3);
  ExpertRegistry reg;
  reg.create(1, 4, 3, {0, 1}, rng).freeze();
  reg.create(2, 4, 3, {2, 3}, rng).freeze();
  Gen gen(3);
  const Tensor a = gen.matrix(6, 4), b = gen.matrix(6, 4);
  const double both = com_loss(std::span<const Expert>(&reg[0], 2), a, b).item();
  const double first = com_loss(std::span<const Expert>(&reg[0], 1), a, b).item();
  const double second = com_loss(std::span<const Expert>(&reg[1], 1), a, b).item();
  EXPECT_NEAR(both, first + second, 1e-14);
  EXPECT_GT(first, 0.0);
}

// ---- attention and fusion ----

Selector identity_selector() {
  return Selector(1, fixed({1}, {0}, 1, 1, Activation::relu), fixed({1}, {0}, 1, 1, std::nullopt));
}

TEST(Attention, KnownLogitsExample) {
  const Selector sel = identity_selector();
  const std::vector<Tensor> feats{Tensor::matrix(3, 1, std::vector<double>(3, std::log(3.0))), Tensor::zeros({3, 1})};
  const auto alpha = values_of(attention_weights(sel, feats));
  EXPECT_NEAR(alpha[0], 0.75, 1e-15);
  EXPECT_NEAR(alpha[1], 0.25, 1e-15);
}

TEST(Attention, SimplexAndSpecialCases) {
  Gen gen(6);
  for (int trial = 0; trial < 50; ++trial) {
    Rng rng(gen.engine()());
    const std::size_t d = gen.size(1, 6), L = gen.size(1, 4);
    const Selector sel = Selector::create(1, d, rng);
    std::vector<Tensor> feats;
    for (std::size_t k = 0; k < L; ++k) feats.push_back(gen.matrix(gen.size(1, 1) + 3, d, false, -2, 2));
    const auto alpha = values_of(attention_weights(sel, feats));
    ASSERT_EQ(alpha.size(), L);
    double total = 0.0;
    for (double a : alpha) {
      EXPECT_GE(a, 0.0);
      total += a;
    }
    EXPECT_NEAR(total, 1.0, 1e-12);

    // Shifting every layer logit by the same constant (output bias) leaves alpha alone.
    Selector shifted = sel;
    const double c = gen.uniform(-5, 5);
    Dense out = shifted.out();
    out.bias().mutable_values()[0] += c;
    const Selector moved(1, shifted.hidden(), out);
    const auto alpha2 = values_of(attention_weights(moved, feats));
    for (std::size_t k = 0; k < L; ++k) EXPECT_NEAR(alpha[k], alpha2[k], 1e-12);

    const std::vector<Tensor> same(L, feats[0]);
    for (double a : values_of(attention_weights(sel, same))) EXPECT_NEAR(a, 1.0 / static_cast<double>(L), 1e-15);
    EXPECT_EQ(values_of(attention_weights(sel, {feats[0]})), (std::vector<double>{1.0}));
  }
}

TEST(Fusion, WeightedSumExamples) {
  const Tensor z1 = Tensor::matrix(1, 2, {4.0, 8.0});
  const Tensor z2 = Tensor::matrix(1, 2, {0.0, -4.0});
  EXPECT_EQ(values_of(fused_features(Tensor::vector({0.75, 0.25}), {z1, z2})), (std::vector<double>{3.0, 5.0}));
  EXPECT_EQ(values_of(fused_features(Tensor::vector({0.0, 1.0}), {z1, z2})), values_of(z2));
  EXPECT_EQ(values_of(fused_features(Tensor::vector({0.5, 0.5}), {z1, z1})), values_of(z1));
  EXPECT_THROW(fused_features(Tensor::vector({1.0}), {z1, z2}), DimensionError);
}

// ---- fdc_loss and fused_loss on backbones ----

BackboneConfig small_backbone() {
  BackboneConfig cfg;
  cfg.input_dim = 5;
  cfg.trunk_depth = 1;
  cfg.trunk_width = 12;
  cfg.tail_depth = 3;
  cfg.feature_dim = 6;
  return cfg;
}

struct Fixture {
  std::vector<Backbone> live;
  std::vector<BackboneSnapshot> snaps;
  std::vector<Selector> selectors;
  Tensor x;
};

Fixture fixture(std::size_t count, BackboneConfig cfg = small_backbone(), std::uint64_t seed = 31) {
  Rng rng(seed);
  Fixture f;
  for (std::size_t j = 1; j <= count; ++j) f.live.emplace_back(j, cfg, rng);
  f.snaps = snapshot_all(f.live);
  for (const auto& bb : f.live) f.selectors.push_back(Selector::create(bb.id(), bb.feature_dim(), rng));
  Gen gen(seed);
  f.x = gen.matrix(16, cfg.input_dim, false, -2, 2);
  return f;
}

TEST(Fdc, ZeroImmediatelyAfterSnapshot) {
  auto f = fixture(2);
  EXPECT_EQ(fdc_loss(f.live, f.snaps, f.x, OTConfig{}).item(), 0.0);
  EXPECT_EQ(fused_loss(f.live, f.snaps, f.selectors, f.x, OTConfig{}).item(), 0.0);
}

TEST(Fdc, SingleBackboneSingleLayerIsOneTerm) {
  BackboneConfig cfg = small_backbone();
  cfg.tail_depth = 1;
  auto f = fixture(1, cfg);
  for (auto& v : f.live[0].tail()[0].weight().mutable_values()) v *= 1.1;
  const double direct = sinkhorn_distance(f.live[0].forward(f.x), f.snaps[0].forward(f.x), OTConfig{}).item();
  EXPECT_EQ(fdc_loss(f.live, f.snaps, f.x, OTConfig{}).item(), direct);
  // With one layer alpha = (1), so the fused term coincides.
  EXPECT_EQ(fused_loss(f.live, f.snaps, f.selectors, f.x, OTConfig{}).item(), direct);
}

TEST(Fdc, SumsOverBackbonesAndLayers) {
  auto f = fixture(2);
  for (auto& bb : f.live)
    for (auto& v : bb.tail()[1].bias().mutable_values()) v += 0.2;
  double expected = 0.0;
  std::vector<double> terms;
  for (std::size_t j = 0; j < 2; ++j)
    for (std::size_t k = 1; k <= 3; ++k)
      terms.push_back(sinkhorn_distance(f.live[j].layer_features(f.x, k), f.snaps[j].layer_features(f.x, k), OTConfig{}).item());
  for (double t : terms) expected += t;
  EXPECT_NEAR(fdc_loss(f.live, f.snaps, f.x, OTConfig{}).item(), expected, 1e-12);
  EXPECT_EQ(terms[0], 0.0);  // layer 1 is upstream of the perturbation
  EXPECT_GT(terms[1], 0.0);
}

TEST(Fdc, MismatchedInputsRejected) {
  auto f = fixture(2);
  auto g = fixture(1);
  EXPECT_THROW(fdc_loss(f.live, g.snaps, f.x, OTConfig{}), DimensionError);
  EXPECT_THROW(fused_loss(f.live, f.snaps, g.selectors, f.x, OTConfig{}), DimensionError);
}

TEST(Fdc, MonotoneInPerturbationSize) {
  for (std::uint64_t seed : {31u, 32u, 33u}) {
    std::vector<double> fdc, fused;
    for (double delta : {1e-3, 1e-2, 1e-1}) {
      auto f = fixture(2, small_backbone(), seed);
      Gen dir(seed * 7);
      for (auto& v : f.live[0].tail()[1].weight().mutable_values()) v += delta * dir.uniform(-1, 1);
      fdc.push_back(fdc_loss(f.live, f.snaps, f.x, tight()).item());
      fused.push_back(fused_loss(f.live, f.snaps, f.selectors, f.x, tight()).item());
    }
    EXPECT_GT(fdc[0], 0.0) << "seed " << seed;
    EXPECT_LT(fdc[0], fdc[1]) << "seed " << seed;
    EXPECT_LT(fdc[1], fdc[2]) << "seed " << seed;
    EXPECT_GT(fused[0], 0.0) << "seed " << seed;
    EXPECT_LT(fused[0], fused[1]) << "seed " << seed;
    EXPECT_LT(fused[1], fused[2]) << "seed " << seed;
  }
}

}  // namespace
