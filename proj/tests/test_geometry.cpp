#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "ld/geometry.hpp"
#include "oracles.hpp"

namespace {

using ld::BoundingBox;

TEST(Geometry, HandValues) {
  const auto a = BoundingBox::make(0, 0, 2, 2);
  const auto b = BoundingBox::make(1, 1, 3, 3);
  EXPECT_NEAR(ld::iou(a, b), 1.0 / 7.0, 1e-12);

  const auto c = BoundingBox::make(0, 0, 1, 1);
  const auto d = BoundingBox::make(2, 0, 3, 1);
  EXPECT_NEAR(ld::giou(c, d), -1.0 / 3.0, 1e-12);
  EXPECT_NEAR(ld::diou(c, d), -0.4, 1e-12);
}

TEST(Geometry, IdenticalBoxesScoreOne) {
  const auto a = BoundingBox::make(-1.5, 2, 4, 7.25);
  EXPECT_DOUBLE_EQ(ld::iou(a, a), 1.0);
  EXPECT_DOUBLE_EQ(ld::giou(a, a), 1.0);
  EXPECT_DOUBLE_EQ(ld::diou(a, a), 1.0);
}

TEST(Geometry, MatchesRasterOracle) {
  std::mt19937_64 rng(11);
  for (int t = 0; t < 150; ++t) {
    const auto a = oracle::random_box(rng, 0, 10, 0.5);
    const auto b = oracle::random_box(rng, 0, 10, 0.5);
    EXPECT_NEAR(ld::iou(a, b), oracle::raster_iou(a, b, 800), 2e-3);
    EXPECT_NEAR(ld::giou(a, b), oracle::raster_giou(a, b, 800), 2e-3);
    EXPECT_NEAR(ld::diou(a, b), oracle::raster_diou(a, b, 800), 2e-3);
  }
}

TEST(Geometry, RangesAndSymmetry) {
  std::mt19937_64 rng(3);
  for (int t = 0; t < 1000; ++t) {
    const auto a = oracle::random_box(rng, -5, 5);
    const auto b = oracle::random_box(rng, -5, 5);
    const double i = ld::iou(a, b);
    const double g = ld::giou(a, b);
    const double d = ld::diou(a, b);
    EXPECT_GE(i, 0.0);
    EXPECT_LE(i, 1.0);
    EXPECT_GT(g, -1.0);
    EXPECT_LE(g, i + 1e-15);
    EXPECT_GT(d, -1.0);
    EXPECT_LE(d, i + 1e-15);
    EXPECT_DOUBLE_EQ(i, ld::iou(b, a));
    EXPECT_DOUBLE_EQ(g, ld::giou(b, a));
    EXPECT_DOUBLE_EQ(d, ld::diou(b, a));
  }
}

TEST(Geometry, TranslationAndScaleInvariance) {
  std::mt19937_64 rng(5);
  for (int t = 0; t < 200; ++t) {
    const auto a = oracle::random_box(rng, 0, 4);
    const auto b = oracle::random_box(rng, 0, 4);
    const double s = 3.0;
    const BoundingBox as{s * a.x1 + 7, s * a.y1 - 2, s * a.x2 + 7, s * a.y2 - 2};
    const BoundingBox bs{s * b.x1 + 7, s * b.y1 - 2, s * b.x2 + 7, s * b.y2 - 2};
    EXPECT_NEAR(ld::iou(a, b), ld::iou(as, bs), 1e-12);
    EXPECT_NEAR(ld::giou(a, b), ld::giou(as, bs), 1e-12);
    EXPECT_NEAR(ld::diou(a, b), ld::diou(as, bs), 1e-12);
  }
}

TEST(Geometry, DegenerateInputsThrow) {
  EXPECT_THROW(BoundingBox::make(1, 0, 0, 1), std::invalid_argument);
  const auto point = BoundingBox::make(1, 1, 1, 1);
  EXPECT_THROW(ld::iou(point, point), std::domain_error);
  EXPECT_THROW(ld::diou(point, point), std::domain_error);
  const auto line = BoundingBox::make(0, 0, 2, 0);
  EXPECT_THROW(ld::giou(line, line), std::domain_error);
  EXPECT_THROW(ld::diou_matrix({}, {point}), std::invalid_argument);
}

TEST(Geometry, DiouMatrixMatchesPairwise) {
  std::mt19937_64 rng(9);
  std::vector<BoundingBox> anchors;
  std::vector<BoundingBox> gts;
  for (int k = 0; k < 6; ++k) anchors.push_back(oracle::random_box(rng, 0, 10));
  for (int k = 0; k < 3; ++k) gts.push_back(oracle::random_box(rng, 0, 10));
  const auto m = ld::diou_matrix(anchors, gts);
  ASSERT_EQ(m.rows, 6u);
  ASSERT_EQ(m.cols, 3u);
  for (std::size_t i = 0; i < 6; ++i) {
    for (std::size_t j = 0; j < 3; ++j) EXPECT_DOUBLE_EQ(m(i, j), ld::diou(anchors[i], gts[j]));
  }
}

TEST(RotatedBox, LongEdgeConvention) {
  const ld::RotatedBox r(0, 0, 2, 5, 0.3);
  EXPECT_DOUBLE_EQ(r.w(), 5);
  EXPECT_DOUBLE_EQ(r.h(), 2);
  EXPECT_NEAR(r.theta(), ld::normalize_angle(0.3 + std::numbers::pi / 2), 1e-15);
  EXPECT_GE(r.theta(), -std::numbers::pi / 2);
  EXPECT_LT(r.theta(), std::numbers::pi / 2);
}

TEST(RotatedBox, NormalizeAngleRange) {
  for (double t = -20; t < 20; t += 0.37) {
    const double n = ld::normalize_angle(t);
    EXPECT_GE(n, -std::numbers::pi / 2);
    EXPECT_LT(n, std::numbers::pi / 2);
    const double k = (t - n) / std::numbers::pi;
    EXPECT_NEAR(k, std::round(k), 1e-9);
  }
  EXPECT_DOUBLE_EQ(ld::normalize_angle(std::numbers::pi / 2), -std::numbers::pi / 2);
}

TEST(RotatedBox, EncodeDecodeRoundTrip) {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> pos(-50, 50);
  std::uniform_real_distribution<double> size(0.5, 30);
  std::uniform_real_distribution<double> ang(-3, 3);
  for (int t = 0; t < 500; ++t) {
    const ld::RotatedBox anchor(pos(rng), pos(rng), size(rng), size(rng), ang(rng));
    const ld::RotatedBox gt(pos(rng), pos(rng), size(rng), size(rng), ang(rng));
    const auto back = ld::decode_rotated(anchor, ld::encode_rotated(anchor, gt));
    EXPECT_NEAR(back.cx(), gt.cx(), 1e-9);
    EXPECT_NEAR(back.cy(), gt.cy(), 1e-9);
    EXPECT_NEAR(back.w(), gt.w(), 1e-9);
    EXPECT_NEAR(back.h(), gt.h(), 1e-9);
    EXPECT_NEAR(std::sin(2 * (back.theta() - gt.theta())), 0.0, 1e-9);
  }
}

TEST(RotatedBox, IdentityEncodesToZero) {
  const ld::RotatedBox a(3, -4, 10, 2, 0.7);
  const auto d = ld::encode_rotated(a, a);
  EXPECT_DOUBLE_EQ(d.dx, 0);
  EXPECT_DOUBLE_EQ(d.dy, 0);
  EXPECT_DOUBLE_EQ(d.dw, 0);
  EXPECT_DOUBLE_EQ(d.dh, 0);
  EXPECT_DOUBLE_EQ(d.dtheta, 0);
}

}  // namespace
