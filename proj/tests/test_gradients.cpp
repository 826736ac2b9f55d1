#include <gtest/gtest.h>

#include "gradient_suite.hpp"

using namespace scdem;
using namespace scdem::testkit;

namespace {

class GradientSuite : public ::testing::TestWithParam<std::size_t> {};

TEST_P(GradientSuite, MatchesCentralDifferences) {
  const auto cases = gradient_cases();
  const auto& c = cases.at(GetParam());
  Gen gen(0x9e3779b97f4a7c15ULL + GetParam());
  double worst = 0.0;
  for (int trial = 0; trial < kGradientTrials; ++trial) {
    const double err = c.trial(gen);
    worst = std::max(worst, err);
    ASSERT_LT(err, c.tolerance) << c.name << " trial " << trial;
  }
  RecordProperty("worst_relative_error", std::to_string(worst));
}

std::string case_name(const ::testing::TestParamInfo<std::size_t>& info) { return gradient_cases().at(info.param).name; }

INSTANTIATE_TEST_SUITE_P(AllOps, GradientSuite, ::testing::Range<std::size_t>(0, gradient_cases().size()), case_name);

TEST(GradientSuite, CoversEveryCompositeLoss) {
  std::vector<std::string> names;
  for (const auto& c : gradient_cases()) names.push_back(c.name);
  for (const char* required : {"cross_entropy", "com_loss", "sinkhorn_distance", "fdc_loss", "fused_loss"})
    EXPECT_NE(std::find(names.begin(), names.end(), required), names.end()) << required;
}

TEST(GradientSuite, ClampedSinkhornHasZeroGradient) {
  Tensor x = Tensor::matrix(2, 2, {0.0, 1.0, 2.0, 3.0}, true);
  Tensor y = Tensor::matrix(2, 2, {0.0, 1.0, 2.0, 3.0}, true);
  OTConfig cfg;
  Tensor s = sinkhorn_distance(x, y, cfg);
  EXPECT_EQ(s.item(), 0.0);
  backward(s);
  for (double g : x.grad()) EXPECT_EQ(g, 0.0);
}

}  // namespace
