#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "ld/boxdist.hpp"
#include "oracles.hpp"

namespace {

std::vector<double> random_logits(std::mt19937_64& rng, std::size_t n, double scale) {
  std::normal_distribution<double> d(0.0, scale);
  std::vector<double> z(n);
  for (double& v : z) v = d(rng);
  return z;
}

TEST(BinGrid, Endpoints) {
  const auto g = ld::make_grid(0.0, 8.0, 8);
  ASSERT_EQ(g.size(), 9u);
  for (std::size_t i = 0; i <= 8; ++i) EXPECT_DOUBLE_EQ(g[i], static_cast<double>(i));
  EXPECT_DOUBLE_EQ(g.step(), 1.0);
  EXPECT_THROW(ld::make_grid(0.0, 8.0, 0), std::invalid_argument);
  EXPECT_THROW(ld::make_grid(1.0, 1.0, 4), std::invalid_argument);
  EXPECT_THROW(ld::make_grid(0.0, std::numeric_limits<double>::infinity(), 4), std::invalid_argument);
}

TEST(Softmax, IsSimplexPoint) {
  std::mt19937_64 rng(1);
  for (int t = 0; t < 500; ++t) {
    const auto z = random_logits(rng, 2 + t % 17, 1 + t % 40);
    const double tau = 0.1 + 0.05 * (t % 200);
    const auto p = ld::generalized_softmax(z, tau);
    EXPECT_NEAR(std::accumulate(p.begin(), p.end(), 0.0), 1.0, 1e-12);
    for (double v : p) EXPECT_GT(v, 0.0);
  }
}

TEST(Softmax, ExtremeLogitsStayFinite) {
  const std::vector<double> z{1e300, -1e300, 0.0};
  const auto p = ld::generalized_softmax(z, 1.0);
  EXPECT_DOUBLE_EQ(p[0], 1.0);
  const auto lp = ld::log_generalized_softmax(std::vector<double>{800, 0}, 1.0);
  EXPECT_NEAR(lp[1], -800.0, 1e-9);
}

TEST(Softmax, MatchesDirectFormula) {
  std::mt19937_64 rng(2);
  for (int t = 0; t < 200; ++t) {
    const auto z = random_logits(rng, 9, 3);
    const double tau = 0.5 + 0.1 * t;
    const auto p = ld::generalized_softmax(z, tau);
    const auto q = oracle::softmax(z, tau);
    const auto lp = ld::log_generalized_softmax(z, tau);
    for (std::size_t k = 0; k < z.size(); ++k) {
      EXPECT_NEAR(p[k], q[k], 1e-14);
      EXPECT_NEAR(lp[k], std::log(q[k]), 1e-12);
    }
  }
}

TEST(Softmax, TemperatureLimits) {
  const std::vector<double> z{0.3, 2.0, -1.0, 1.9};
  const auto sharp = ld::generalized_softmax(z, 1e-3);
  EXPECT_NEAR(sharp[1], 1.0, 1e-12);
  const auto flat = ld::generalized_softmax(z, 1e6);
  for (double v : flat) EXPECT_NEAR(v, 0.25, 1e-5);
}

TEST(Softmax, RejectsBadArguments) {
  const std::vector<double> z{0.0, 1.0};
  EXPECT_THROW(ld::generalized_softmax(z, 0.0), std::invalid_argument);
  EXPECT_THROW(ld::generalized_softmax(z, -1.0), std::invalid_argument);
  EXPECT_THROW(ld::generalized_softmax(std::vector<double>{}, 1.0), std::invalid_argument);
  EXPECT_THROW(ld::generalized_softmax(std::vector<double>{0.0, std::nan("")}, 1.0),
               std::invalid_argument);
}

TEST(TwoHot, EncodeDecodeRoundTrip) {
  const auto g = ld::make_grid(0.0, 8.0, 8);
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> y(0.0, 8.0);
  for (int t = 0; t < 1000; ++t) {
    const double v = y(rng);
    const auto target = ld::encode_target(v, g);
    EXPECT_NEAR(target.u1 + target.u2, 1.0, 1e-15);
    EXPECT_GE(target.u1, 0.0);
    EXPECT_GE(target.u2, 0.0);
    EXPECT_LE(g[target.index], v);
    EXPECT_GE(g[target.index + 1], v);
    const auto dense = target.dense(g.size());
    EXPECT_NEAR(ld::decode_expectation(dense, g), v, 1e-12);
  }
}

TEST(TwoHot, EndpointsAndRangeErrors) {
  const auto g = ld::make_grid(0.0, 8.0, 8);
  const auto lo = ld::encode_target(0.0, g);
  EXPECT_EQ(lo.index, 0u);
  EXPECT_DOUBLE_EQ(lo.u1, 1.0);
  const auto hi = ld::encode_target(8.0, g);
  EXPECT_EQ(hi.index, 7u);
  EXPECT_DOUBLE_EQ(hi.u2, 1.0);
  const auto mid = ld::encode_target(3.0, g);
  EXPECT_EQ(mid.index, 3u);
  EXPECT_DOUBLE_EQ(mid.u1, 1.0);
  const auto frac = ld::encode_target(2.25, g);
  EXPECT_EQ(frac.index, 2u);
  EXPECT_DOUBLE_EQ(frac.u1, 0.75);
  EXPECT_DOUBLE_EQ(frac.u2, 0.25);
  EXPECT_THROW(ld::encode_target(-0.01, g), std::invalid_argument);
  EXPECT_THROW(ld::encode_target(8.01, g), std::invalid_argument);
}

TEST(Decode, BoundsAndValidation) {
  const auto g = ld::make_grid(-2.0, 6.0, 4);
  std::mt19937_64 rng(8);
  for (int t = 0; t < 200; ++t) {
    const auto p = ld::generalized_softmax(random_logits(rng, g.size(), 4), 1.0);
    const double y = ld::decode_expectation(p, g);
    EXPECT_GE(y, g.e_min());
    EXPECT_LE(y, g.e_max());
  }
  EXPECT_THROW(ld::decode_expectation(std::vector<double>{0.5, 0.5}, g), std::invalid_argument);
  EXPECT_THROW(ld::decode_expectation(std::vector<double>{0.5, 0.6, 0, 0, 0}, g),
               std::invalid_argument);
  EXPECT_THROW(ld::decode_expectation(std::vector<double>{1.5, -0.5, 0, 0, 0}, g),
               std::invalid_argument);
}

TEST(Flatness, UniformIsMaximal) {
  const std::vector<double> uniform(9, 1.0 / 9.0);
  EXPECT_NEAR(ld::flatness(uniform), std::log(9.0), 1e-12);
  const std::vector<double> onehot{0, 0, 1, 0};
  EXPECT_DOUBLE_EQ(ld::flatness(onehot), 0.0);
}

TEST(EdgeDistribution, ChecksShape) {
  const auto g = ld::make_grid(0.0, 4.0, 4);
  EXPECT_THROW(ld::EdgeDistribution(std::vector<double>(4, 0.0), g), std::invalid_argument);
  const ld::EdgeDistribution e(std::vector<double>(5, 0.0), g);
  EXPECT_NEAR(e.decode(), 2.0, 1e-12);
  ld::BoxDistribution box{{e, e, e, e}};
  EXPECT_EQ(box.parameter_count(), 20u);
}

}  // namespace
