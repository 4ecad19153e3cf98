#include <gtest/gtest.h>

#include <random>

#include "headscope/analytics.hpp"
#include "test_support.hpp"

namespace headscope {
namespace {

using testing::data_path;

const nlohmann::json& fixtures() {
  static const auto j = testing::read_json(data_path("stats_fixtures.json"));
  return j;
}

std::vector<double> values_of(const nlohmann::json& j) { return j.get<std::vector<double>>(); }

TEST(Skewness, SimpleCases) {
  EXPECT_NEAR(skewness(std::vector<double>{1, 2, 3}), 0.0, 1e-15);
  EXPECT_GT(skewness(std::vector<double>{0, 0, 0, 1}), 0.0);
  EXPECT_NEAR(skewness(std::vector<double>{0, 0, 0, 1}), 1.1547005383792515, 1e-12);
  EXPECT_ERROR_CODE(skewness(std::vector<double>{1, 2}), ErrorCode::TooFewSamples);
  EXPECT_ERROR_CODE(skewness(std::vector<double>{4, 4, 4}), ErrorCode::DegenerateVariance);
}

TEST(Skewness, MatchesReferenceFixture) {
  const auto& fx = fixtures().at("skew_50");
  EXPECT_NEAR(skewness(values_of(fx.at("values"))), fx.at("skewness").get<double>(), 1e-9);
}

TEST(Skewness, AffineInvariance) {
  std::mt19937_64 rng(8);
  std::gamma_distribution<double> g(2.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> x(40);
    for (auto& v : x) v = g(rng);
    const double c = 0.1 + static_cast<double>(trial), b = -3.0 + trial;
    std::vector<double> y;
    for (double v : x) y.push_back(c * v + b);
    EXPECT_NEAR(skewness(y), skewness(x), 1e-9);
  }
}

TEST(KsTwoSample, MatchesReferenceFixtures) {
  for (const char* name : {"ks_40_60", "ks_30_30", "ks_ties"}) {
    const auto& fx = fixtures().at(name);
    const auto r = ks_two_sample(values_of(fx.at("a")), values_of(fx.at("b")));
    EXPECT_NEAR(r.d, fx.at("d").get<double>(), 1e-12) << name;
    EXPECT_NEAR(r.p, fx.at("p").get<double>(), 0.05 * fx.at("p").get<double>()) << name;
  }
}

TEST(KsTwoSample, EdgeCases) {
  const std::vector<double> a = {0.1, 0.5, 0.3};
  const auto same = ks_two_sample(a, a);
  EXPECT_EQ(same.d, 0.0);
  EXPECT_NEAR(same.p, 1.0, 1e-12);
  const std::vector<double> lo = {0.0, 0.1, 0.2, 0.4};
  const std::vector<double> hi = {0.6, 0.7, 1.0};
  EXPECT_EQ(ks_two_sample(lo, hi).d, 1.0);
  EXPECT_ERROR_CODE(ks_two_sample(std::vector<double>{}, a), ErrorCode::EmptySample);
}

TEST(KsTwoSample, SymmetricAndBounded) {
  std::mt19937_64 rng(9);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> a(1 + rng() % 30), b(1 + rng() % 30);
    for (auto& v : a) v = n(rng);
    for (auto& v : b) v = n(rng) + 0.5;
    const auto ab = ks_two_sample(a, b);
    const auto ba = ks_two_sample(b, a);
    EXPECT_EQ(ab.d, ba.d);
    EXPECT_EQ(ab.p, ba.p);
    EXPECT_GE(ab.d, 0.0);
    EXPECT_LE(ab.d, 1.0);
    EXPECT_GT(ab.p, 0.0);
    EXPECT_LE(ab.p, 1.0);
  }
}

TEST(KolmogorovSf, MonotoneAndBounded) {
  double prev = kolmogorov_sf(0.0);
  EXPECT_EQ(prev, 1.0);
  for (double x = 0.01; x < 4.0; x += 0.01) {
    const double p = kolmogorov_sf(x);
    ASSERT_LE(p, prev);
    ASSERT_GT(p, 0.0);
    prev = p;
  }
  EXPECT_NEAR(kolmogorov_sf(1.0), 0.26999967167735456, 1e-12);
  EXPECT_NEAR(kolmogorov_sf(0.5), 0.9639452436648751, 1e-12);
}

TEST(ScoreDistribution, SummaryFields) {
  const auto d = ScoreDistribution::from_values("x", {0.2, 0.4, 0.9});
  EXPECT_NEAR(d.mean, 0.5, 1e-15);
  EXPECT_TRUE(d.skewness.has_value());
  EXPECT_FALSE(ScoreDistribution::from_values("y", {0.5, 0.5}).skewness.has_value());
  EXPECT_FALSE(ScoreDistribution::from_values("z", {0.5, 0.5, 0.5}).skewness.has_value());
}

TEST(CompareToBaseline, IdenticalDistributions) {
  const auto a = ScoreDistribution::from_values("a", {0.1, 0.5, 0.7, 0.9});
  const auto c = compare_to_baseline(a, a);
  EXPECT_EQ(c.mean_difference, 0.0);
  EXPECT_EQ(*c.skewness_difference, 0.0);
  EXPECT_NEAR(c.ks.p, 1.0, 1e-12);
}

TEST(CompareToBaseline, ShiftedPrimaryIsDetected) {
  std::mt19937_64 rng(10);
  std::uniform_real_distribution<double> u(0.0, 0.6);
  std::vector<double> base(400), primary(400);
  for (auto& v : base) v = u(rng);
  for (auto& v : primary) v = u(rng) + 0.3;
  const auto c = compare_to_baseline(ScoreDistribution::from_values("p", primary), ScoreDistribution::from_values("b", base));
  EXPECT_GT(c.mean_difference, 0.2);
  EXPECT_LT(c.ks.p, 1e-6);
  EXPECT_EQ(c.primary_label, "p");
  EXPECT_EQ(c.baseline_label, "b");
}

TEST(Histogram, FixedBinsAndClamping) {
  const std::vector<double> v = {0.0, 0.04, 0.05, 0.5, 1.0, 1.3, -0.2};
  const auto h = make_histogram(v);
  ASSERT_EQ(h.counts.size(), 20u);
  EXPECT_EQ(h.counts[0], 3u);
  EXPECT_EQ(h.counts[1], 1u);
  EXPECT_EQ(h.counts[10], 1u);
  EXPECT_EQ(h.counts[19], 2u);
  const auto csv = histogram_csv(h);
  EXPECT_TRUE(csv.starts_with("bin_start,bin_end,count\n"));
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 21);
  const auto signed_h = make_histogram(v, -1.0, 1.0, 0.1);
  EXPECT_EQ(signed_h.counts.size(), 20u);
}

}  // namespace
}  // namespace headscope
