#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "gradient_suite.hpp"
#include "ld/losses.hpp"
#include "oracles.hpp"

namespace {

TEST(GradientSuite, AllLossesMatchFiniteDifferences) {
  for (const auto& r : gradcheck::run_all(100, 40)) {
    SCOPED_TRACE(r.name);
    EXPECT_EQ(r.instances, 40);
    EXPECT_LE(r.max_rel_err, 1e-5);
  }
}

TEST(CrossEntropy, ValueMatchesDirectFormula) {
  std::mt19937_64 rng(1);
  for (int t = 0; t < 200; ++t) {
    const auto z = gradcheck::normal_vec(rng, 9, 3.0);
    const auto g = gradcheck::simplex(rng, 9);
    const double tau = gradcheck::uniform(rng, 0.5, 10);
    EXPECT_NEAR(ld::ce_loss(z, g, tau).value, oracle::cross_entropy(z, g, tau), 1e-10);
  }
}

TEST(CrossEntropy, GradientFormula) {
  const std::vector<double> z{1.0, -0.5, 2.0};
  const std::vector<double> g{0.2, 0.3, 0.5};
  const double tau = 2.0;
  const auto p = oracle::softmax(z, tau);
  const auto r = ld::ce_loss(z, g, tau);
  for (std::size_t k = 0; k < 3; ++k) EXPECT_NEAR(r.grad[k], (p[k] - g[k]) / tau, 1e-15);
}

TEST(CrossEntropy, RejectsMalformedTargets) {
  const std::vector<double> z{0.0, 1.0};
  EXPECT_THROW(ld::ce_loss(z, std::vector<double>{0.5, 0.4}), std::invalid_argument);
  EXPECT_THROW(ld::ce_loss(z, std::vector<double>{1.0}), std::invalid_argument);
  EXPECT_THROW(ld::ce_loss(z, std::vector<double>{0.5, 0.5}, 0.0), std::invalid_argument);
}

TEST(Distillation, KdEqualsCeAgainstSoftenedTeacher) {
  std::mt19937_64 rng(2);
  for (int t = 0; t < 100; ++t) {
    const auto zs = gradcheck::normal_vec(rng, 7, 2.0);
    const auto zt = gradcheck::normal_vec(rng, 7, 2.0);
    const double tau = gradcheck::uniform(rng, 0.5, 20);
    const auto kd = ld::kd_loss(zs, zt, tau);
    const auto ce = ld::ce_loss(zs, ld::generalized_softmax(zt, tau), tau);
    EXPECT_EQ(kd.value, ce.value);
    EXPECT_EQ(kd.grad, ce.grad);
  }
}

TEST(Distillation, KlVanishesAtMatch) {
  std::mt19937_64 rng(3);
  const auto z = gradcheck::normal_vec(rng, 9, 2.0);
  const auto r = ld::kd_loss(z, z, 10.0);
  EXPECT_NEAR(r.kl, 0.0, 1e-14);
  for (double g : r.grad) EXPECT_NEAR(g, 0.0, 1e-15);
  const auto other = gradcheck::normal_vec(rng, 9, 2.0);
  EXPECT_GT(ld::kd_loss(other, z, 10.0).kl, 0.0);
}

TEST(Distillation, LdIsSumOfEdgeKd) {
  std::mt19937_64 rng(4);
  const auto grid = ld::make_grid(0, 8, 8);
  const auto s = gradcheck::make_box(gradcheck::normal_vec(rng, 36, 2.0), grid);
  const auto t = gradcheck::make_box(gradcheck::normal_vec(rng, 36, 2.0), grid);
  const auto box = ld::ld_box_loss(s, t, 10.0);
  double value = 0.0;
  std::vector<double> grad;
  for (std::size_t e = 0; e < 4; ++e) {
    const auto k = ld::kd_loss(s.edges[e].logits, t.edges[e].logits, 10.0);
    value += k.value;
    grad.insert(grad.end(), k.grad.begin(), k.grad.end());
  }
  EXPECT_NEAR(box.value, value, 1e-12);
  EXPECT_EQ(box.grad, grad);
}

TEST(Distillation, GridMismatchThrows) {
  const ld::EdgeDistribution a(std::vector<double>(9, 0.0), ld::make_grid(0, 8, 8));
  const ld::EdgeDistribution b(std::vector<double>(9, 0.0), ld::make_grid(0, 16, 8));
  EXPECT_THROW(ld::ld_edge_loss(a, b, 10.0), std::invalid_argument);
  ld::BoxDistribution four{{a, a, a, a}};
  ld::BoxDistribution three{{a, a, a}};
  EXPECT_THROW(ld::ld_box_loss(four, three, 10.0), std::invalid_argument);
}

TEST(Dfl, ValueAndGradient) {
  const auto grid = ld::make_grid(0, 8, 8);
  const std::vector<double> z{0.1, 0.5, -0.2, 1.0, 0.0, 0.3, -1.0, 0.2, 0.4};
  const auto target = ld::encode_target(3.25, grid);
  const auto p = oracle::softmax(z, 1.0);
  const auto r = ld::dfl_loss(z, target);
  EXPECT_NEAR(r.value, -(0.75 * std::log(p[3]) + 0.25 * std::log(p[4])), 1e-12);
  for (std::size_t k = 0; k < z.size(); ++k) {
    const double g = k == 3 ? 0.75 : (k == 4 ? 0.25 : 0.0);
    EXPECT_NEAR(r.grad[k], p[k] - g, 1e-15);
  }
}

TEST(Giou, LossIsOneMinusGiou) {
  std::mt19937_64 rng(5);
  for (int t = 0; t < 100; ++t) {
    const auto a = oracle::random_box(rng, 0, 10, 0.5);
    const auto b = oracle::random_box(rng, 0, 10, 0.5);
    EXPECT_DOUBLE_EQ(ld::giou_regression_loss(a, b).value, 1.0 - ld::giou(a, b));
  }
  const auto a = ld::BoundingBox::make(0, 0, 2, 2);
  const auto r = ld::giou_regression_loss(a, a);
  EXPECT_DOUBLE_EQ(r.value, 0.0);
}

TEST(Tbr, GateSwitchesLossOff) {
  const auto gt = ld::BoundingBox::make(0, 0, 4, 4);
  const auto close = ld::BoundingBox::make(0.1, 0.1, 4.1, 4.1);
  const auto far = ld::BoundingBox::make(1, 1, 6, 6);
  const auto off = ld::tbr_loss(close, far, gt, 0.1);
  EXPECT_EQ(off.value, 0.0);
  for (double g : off.grad) EXPECT_EQ(g, 0.0);
  const auto on = ld::tbr_loss(far, close, gt, 0.1);
  EXPECT_DOUBLE_EQ(on.value, ld::giou_regression_loss(far, gt).value);
}

TEST(FeatureImitation, ValueAndRegion) {
  const std::vector<double> s{1, 2, 3, 4, 5, 6};
  const std::vector<double> t{1, 2, 0, 0, 5, 7};
  const auto r = ld::feature_imitation_loss(s, t, 2, {true, true, true});
  EXPECT_NEAR(r.value, (0.0 + 5.0 + 1.0) / 3.0, 1e-15);
  EXPECT_EQ(r.grad[0], 0.0);
  EXPECT_EQ(r.grad[1], 0.0);
  const auto masked = ld::feature_imitation_loss(s, t, 2, {false, true, false});
  EXPECT_NEAR(masked.value, 5.0, 1e-15);
  EXPECT_EQ(masked.grad[5], 0.0);
  EXPECT_THROW(ld::feature_imitation_loss(s, t, 2, {false, false, false}), std::invalid_argument);
  EXPECT_THROW(ld::feature_imitation_loss(s, t, 4, {true, true, true}), std::invalid_argument);
}

TEST(ChainBoxGradient, MatchesFiniteDifferenceOfDecodedBox) {
  std::mt19937_64 rng(6);
  const auto grid = ld::make_grid(0, 8, 8);
  for (int t = 0; t < 20; ++t) {
    const auto z = gradcheck::normal_vec(rng, 36, 1.5);
    const std::array<double, 4> w{gradcheck::uniform(rng, -1, 1), gradcheck::uniform(rng, -1, 1),
                                  gradcheck::uniform(rng, -1, 1), gradcheck::uniform(rng, -1, 1)};
    auto f = [&](std::span<const double> x) {
      const auto b = ld::decode_ltrb(gradcheck::make_box(x, grid), 3.0, 4.0);
      return w[0] * b.x1 + w[1] * b.y1 + w[2] * b.x2 + w[3] * b.y2;
    };
    const auto analytic = ld::chain_box_gradient(gradcheck::make_box(z, grid), w);
    const auto num = oracle::numeric_gradient(f, z);
    EXPECT_LE(gradcheck::normwise_error(analytic, num), 1e-7);
  }
}

TEST(TotalLoss, WeightedSumOfParts) {
  std::mt19937_64 rng(7);
  const auto sc = gradcheck::random_scene(rng);
  const auto r = ld::total_loss(sc.heads(sc.params), sc.teacher, sc.targets, sc.masks, sc.cfg);
  const auto parts = r.parts.as_array();
  double sum = 0.0;
  for (std::size_t k = 0; k < 7; ++k) sum += sc.cfg.lambda[k] * parts[k];
  EXPECT_NEAR(r.value, sum, 1e-12);
  EXPECT_EQ(r.grad.size(), sc.params.size());
}

TEST(TotalLoss, EmptyMasksContributeNothing) {
  std::mt19937_64 rng(8);
  auto sc = gradcheck::random_scene(rng);
  sc.masks.main.assign(sc.targets.size(), false);
  sc.masks.vlr.assign(sc.targets.size(), false);
  const auto r = ld::total_loss(sc.heads(sc.params), sc.teacher, sc.targets, sc.masks, sc.cfg);
  EXPECT_EQ(r.parts.reg, 0.0);
  EXPECT_EQ(r.parts.dfl, 0.0);
  EXPECT_EQ(r.parts.ld_main, 0.0);
  EXPECT_EQ(r.parts.ld_vlr, 0.0);
  EXPECT_EQ(r.parts.kd_main, 0.0);
  EXPECT_EQ(r.parts.kd_vlr, 0.0);
  EXPECT_NEAR(r.value, sc.cfg.lambda[0] * r.parts.cls, 1e-12);
}

TEST(TotalLoss, TeacherRequiredOnlyWhenDistilling) {
  std::mt19937_64 rng(9);
  auto sc = gradcheck::random_scene(rng);
  const auto heads = sc.heads(sc.params);
  EXPECT_THROW(ld::total_loss(heads, {}, sc.targets, sc.masks, sc.cfg), std::invalid_argument);
  sc.cfg.lambda = {1, 1, 1, 0, 0, 0, 0};
  EXPECT_NO_THROW(ld::total_loss(heads, {}, sc.targets, sc.masks, sc.cfg));
}

TEST(TotalLoss, TeacherEqualsStudentZeroesDistillationKl) {
  std::mt19937_64 rng(10);
  auto sc = gradcheck::random_scene(rng);
  const auto heads = sc.heads(sc.params);
  const auto r = ld::total_loss(heads, heads, sc.targets, sc.masks, sc.cfg);
  auto no_distill = sc.cfg;
  no_distill.lambda[3] = no_distill.lambda[4] = no_distill.lambda[5] = no_distill.lambda[6] = 0.0;
  const auto base = ld::total_loss(heads, {}, sc.targets, sc.masks, no_distill);
  for (std::size_t k = 0; k < r.grad.size(); ++k) EXPECT_NEAR(r.grad[k], base.grad[k], 1e-14);
}

TEST(DistillConfig, TiedWeightsAndValidation) {
  const auto c = ld::DistillConfig::tied(1.0, 2.0, 0.25);
  EXPECT_EQ(c.lambda, (std::array<double, 7>{1.0, 2.0, 0.25, 2.0, 2.0, 1.0, 1.0}));
  auto bad = c;
  bad.gamma_vlr = 1.5;
  EXPECT_THROW(bad.validate(), std::invalid_argument);
  bad = c;
  bad.lambda[4] = -1;
  EXPECT_THROW(bad.validate(), std::invalid_argument);
  bad = c;
  bad.tau = 0;
  EXPECT_THROW(bad.validate(), std::invalid_argument);
}

}  // namespace
