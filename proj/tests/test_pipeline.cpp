#include <gtest/gtest.h>

#include <numbers>

#include "msreg/harness.hpp"
#include "msreg/pipeline.hpp"
#include "test_util.hpp"

namespace msreg {
namespace {

TEST(Render, CheckerboardExamples) {
  const GrayImage f = testing::random_image(16, 12, 1);
  const GrayImage w = testing::random_image(16, 12, 2);
  EXPECT_EQ(render_checkerboard(f, f, 4), f);
  EXPECT_EQ(render_checkerboard(f, w, 16), f);
  const GrayImage c = render_checkerboard(f, w, 1);
  for (int y = 0; y < 12; ++y)
    for (int x = 0; x < 16; ++x) EXPECT_EQ(c.at(x, y), (x + y) % 2 == 0 ? f.at(x, y) : w.at(x, y));
  EXPECT_THROW(render_checkerboard(f, GrayImage(3, 3), 2), Error);
}

TEST(Render, FusionExamples) {
  const GrayImage f(8, 8, 0.2);
  const GrayImage w(8, 8, 0.6);
  EXPECT_EQ(render_fusion(f, w, 1.0), f);
  EXPECT_EQ(render_fusion(f, w, 0.0), w);
  const GrayImage half = render_fusion(f, w, 0.5);
  for (double v : half.data()) EXPECT_NEAR(v, 0.4, 1e-15);
  try {
    render_fusion(f, GrayImage(3, 3), 0.5);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DimensionMismatch);
  }
}

TEST(SyntheticPair, IdentityAndInvert) {
  const GrayImage src = make_texture(64, 64, 3);
  const auto id = synthetic_pair(src, TransformModel::identity(), IntensityMode::identity(), 0.0, 1);
  EXPECT_EQ(id.moving, src);
  const auto inv = synthetic_pair(src, TransformModel::identity(), IntensityMode::invert(), 0.0, 1);
  for (std::size_t i = 0; i < src.size(); ++i) EXPECT_DOUBLE_EQ(inv.moving.data()[i], 1.0 - src.data()[i]);
}

TEST(SyntheticPair, IntensityModes) {
  EXPECT_DOUBLE_EQ(IntensityMode::gamma(0.5)(0.25), 0.5);
  EXPECT_DOUBLE_EQ(IntensityMode::affine(2.0, 0.1)(0.3), 0.7);
  EXPECT_DOUBLE_EQ(IntensityMode::invert()(0.3), 0.7);
}

TEST(SyntheticPair, NoiseIsSeeded) {
  const GrayImage src = make_texture(64, 64, 4);
  const TransformModel gt = make_similarity(0.1, 1.0, 2.0, 1.0);
  const auto a = synthetic_pair(src, gt, IntensityMode::identity(), 0.05, 9);
  const auto b = synthetic_pair(src, gt, IntensityMode::identity(), 0.05, 9);
  const auto c = synthetic_pair(src, gt, IntensityMode::identity(), 0.05, 10);
  EXPECT_EQ(a.moving, b.moving);
  EXPECT_FALSE(a.moving == c.moving);
}

TEST(SyntheticPair, MovingMapsOntoSource) {
  const GrayImage src = gaussian_blur(make_texture(128, 128, 5), 1.5);
  const TransformModel gt = make_similarity(0.2, 0.9, 10.0, -4.0);
  const auto p = synthetic_pair(src, gt, IntensityMode::identity(), 0.0, 1);
  // moving(x) = source(gt(x)) at valid pixels
  for (int y = 30; y < 90; y += 7)
    for (int x = 30; x < 90; x += 7) {
      const Point2 q = apply(gt, {double(x), double(y)});
      EXPECT_NEAR(p.moving.at(x, y), sample_bilinear(src, q.x, q.y), 1e-12);
    }
}

RegistrationResult fake_result(const std::vector<PointPair>& pairs, const TransformModel& t) {
  RegistrationResult r;
  r.transform = t;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    r.fixed_keypoints.push_back({pairs[i].fixed.x, pairs[i].fixed.y, 1.0});
    r.moving_keypoints.push_back({pairs[i].moving.x, pairs[i].moving.y, 1.0});
    Match m;
    m.fixed_kp = m.moving_kp = static_cast<std::uint32_t>(i);
    r.filtered_matches.matches.push_back(m);
  }
  return r;
}

TEST(Evaluate, ExactAndShifted) {
  const TransformModel gt = make_similarity(0.3, 1.2, 4.0, 2.0);
  std::mt19937_64 rng(6);
  auto pairs = testing::make_pairs(gt.matrix, 20, rng, 0.0, 100.0);
  for (int i = 0; i < 5; ++i) pairs[static_cast<std::size_t>(i)].fixed.x += 10.0;  // five wrong matches

  const EvaluationReport exact = evaluate(fake_result(pairs, gt), gt, 100, 100);
  EXPECT_NEAR(exact.corner_rmse, 0.0, 1e-12);
  EXPECT_EQ(exact.n_correct, 15u);
  EXPECT_EQ(exact.n_filtered, 20u);
  EXPECT_TRUE(exact.success);

  const TransformModel shifted = compose(make_similarity(0.0, 1.0, 1.0, 0.0), gt);
  EXPECT_NEAR(evaluate(fake_result(pairs, shifted), gt, 100, 100).corner_rmse, 1.0, 1e-12);
}

TEST(Evaluate, CountMatchesBruteForce) {
  const TransformModel gt = make_similarity(-0.4, 0.8, -3.0, 9.0);
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0.0, 100.0);
  std::vector<PointPair> pairs;
  for (int i = 0; i < 200; ++i) {
    const Point2 m{u(rng), u(rng)};
    const Point2 g = apply(gt, m);
    // half the matches near the truth, half anywhere
    pairs.push_back({i % 2 ? Point2{g.x + u(rng) / 30.0, g.y - u(rng) / 30.0} : Point2{u(rng), u(rng)}, m});
  }
  std::size_t expected = 0;
  for (const auto& p : pairs) {
    const Point2 g = apply(gt, p.moving);
    if (std::sqrt((g.x - p.fixed.x) * (g.x - p.fixed.x) + (g.y - p.fixed.y) * (g.y - p.fixed.y)) <= 2.0) ++expected;
  }
  EXPECT_EQ(evaluate(fake_result(pairs, gt), gt, 100, 100).n_correct, expected);
}

TEST(Spearman, Basics) {
  EXPECT_NEAR(spearman({1, 2, 3, 4}, {10, 20, 30, 40}), 1.0, 1e-12);
  EXPECT_NEAR(spearman({1, 2, 3, 4}, {4, 3, 2, 1}), -1.0, 1e-12);
}

TEST(Register, SelfRegistrationIsIdentity) {
  const GrayImage img = make_texture(256, 256, 8);
  PipelineConfig cfg;
  const RegistrationResult r = register_images(img, img, cfg);
  EXPECT_LE(testing::matrix_gap(r.transform.matrix, Eigen::Matrix3d::Identity()), 1e-3);
  EXPECT_LT(r.transform.rmse, 0.5);
  EXPECT_GE(r.filtered_matches.size(), 3u);
  EXPECT_EQ(r.kept.size(), r.initial_matches.size());
}

TEST(Register, ConstantMovingFailsAtDetection) {
  try {
    register_images(make_texture(256, 256, 9), GrayImage(256, 256, 0.5));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::TooFewKeypoints);
  }
}

TEST(Register, ConcurrentBranchesMatchSequential) {
  const GrayImage src = make_texture(256, 256, 10);
  const TransformModel gt = centered_similarity(0.2, 1.1, 5.0, -3.0, 256, 256, 256, 256);
  const auto pair = synthetic_pair(src, gt, IntensityMode::invert(), 0.0, 1);
  PipelineConfig cfg;
  const RegistrationResult a = register_images(pair.fixed, pair.moving, cfg);
  cfg.concurrent_branches = true;
  const RegistrationResult b = register_images(pair.fixed, pair.moving, cfg);
  EXPECT_EQ(a.transform.matrix, b.transform.matrix);
  EXPECT_EQ(a.initial_matches.matches, b.initial_matches.matches);
  const EvaluationReport ev = evaluate(a, gt, 256, 256);
  EXPECT_TRUE(ev.success);
  EXPECT_LE(ev.corner_rmse, 2.0);
}

TEST(PipelineConfig, ModelChoiceParsing) {
  EXPECT_EQ(parse_model_choice("auto"), ModelChoice::Auto);
  EXPECT_EQ(parse_model_choice("projective"), ModelChoice::Projective);
  EXPECT_FALSE(parse_model_choice("bogus").has_value());
  PipelineConfig cfg;
  cfg.describe.window = 42;
  EXPECT_THROW(cfg.validate(), Error);
}

}  // namespace
}  // namespace msreg
