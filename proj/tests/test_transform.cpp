#include <gtest/gtest.h>

#include <numbers>

#include "msreg/harness.hpp"
#include "msreg/transform.hpp"
#include "test_util.hpp"

namespace msreg {
namespace {

using testing::make_pairs;
using testing::matrix_gap;
using testing::random_transform;

constexpr TransformKind kKinds[] = {TransformKind::Similarity, TransformKind::Affine, TransformKind::Projective};

ErrorCode estimate_error(const std::vector<PointPair>& pairs, TransformKind kind) {
  try {
    estimate(pairs, kind);
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::IoFailure;
}

TEST(Estimate, IdentityFromEqualPoints) {
  std::mt19937_64 rng(1);
  const auto pairs = make_pairs(Eigen::Matrix3d::Identity(), 10, rng);
  for (const auto kind : kKinds) {
    const TransformModel t = estimate(pairs, kind);
    EXPECT_LE(matrix_gap(t.matrix, Eigen::Matrix3d::Identity()), 1e-9);
    EXPECT_NEAR(t.rmse, 0.0, 1e-9);
    EXPECT_EQ(t.kind, kind);
    EXPECT_EQ(t.n_points, 10u);
  }
}

TEST(Estimate, RecoversKnownSimilarity) {
  const TransformModel gt = make_similarity(20.0 * std::numbers::pi / 180.0, 1.3, 5.0, -7.0);
  std::mt19937_64 rng(2);
  const auto pairs = make_pairs(gt.matrix, 10, rng);
  const TransformModel t = estimate(pairs, TransformKind::Similarity);
  const double scale = std::hypot(t.matrix(0, 0), t.matrix(1, 0));
  const double angle = std::atan2(t.matrix(1, 0), t.matrix(0, 0));
  EXPECT_NEAR(scale, 1.3, 1e-6);
  EXPECT_NEAR(angle, 20.0 * std::numbers::pi / 180.0, 1e-6);
  EXPECT_NEAR(t.matrix(0, 2), 5.0, 1e-6);
  EXPECT_NEAR(t.matrix(1, 2), -7.0, 1e-6);
}

TEST(Estimate, NoiselessMinimalAndTenPointSets) {
  std::mt19937_64 rng(3);
  for (const auto kind : kKinds) {
    for (int trial = 0; trial < 20; ++trial) {
      const Eigen::Matrix3d m = random_transform(kind, rng);
      for (const int n : {min_points(kind), 10}) {
        const auto pairs = make_pairs(m, n, rng);
        const TransformModel t = estimate(pairs, kind);
        EXPECT_LE(matrix_gap(t.matrix, m), 1e-6) << to_string(kind) << " n=" << n;
        EXPECT_LE(t.rmse, 1e-6);
      }
    }
  }
}

TEST(Estimate, DegenerateConfigurations) {
  const std::vector<PointPair> collinear{{{0, 0}, {0, 0}}, {{1, 1}, {1, 1}}, {{2, 2}, {2, 2}}};
  EXPECT_EQ(estimate_error(collinear, TransformKind::Affine), ErrorCode::DegenerateConfiguration);
  const std::vector<PointPair> coincident{{{0, 0}, {3, 3}}, {{1, 1}, {3, 3}}};
  EXPECT_EQ(estimate_error(coincident, TransformKind::Similarity), ErrorCode::DegenerateConfiguration);
  const std::vector<PointPair> three_on_line{
      {{0, 0}, {0, 0}}, {{1, 0}, {1, 0}}, {{2, 0}, {2, 0}}, {{0, 5}, {0, 5}}};
  EXPECT_EQ(estimate_error(three_on_line, TransformKind::Projective), ErrorCode::DegenerateConfiguration);
  EXPECT_EQ(estimate_error({{{0, 0}, {0, 0}}}, TransformKind::Similarity), ErrorCode::InsufficientPoints);
  EXPECT_EQ(estimate_error(collinear, TransformKind::Projective), ErrorCode::InsufficientPoints);
}

TEST(Estimate, ModelNestingOnNoisySets) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    const auto pairs = make_pairs(random_transform(TransformKind::Projective, rng), 30, rng, 1.5);
    const double rs = estimate(pairs, TransformKind::Similarity).rmse;
    const double ra = estimate(pairs, TransformKind::Affine).rmse;
    const double rp = estimate(pairs, TransformKind::Projective).rmse;
    EXPECT_LE(ra, rs * (1.0 + 1e-12)) << trial;
    EXPECT_LE(rp, ra * (1.0 + 1e-12)) << trial;
  }
}

TEST(Estimate, ProjectiveTranslationInvariance) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    auto pairs = make_pairs(random_transform(TransformKind::Projective, rng), 12, rng, 0.8);
    const Eigen::Matrix3d h = estimate(pairs, TransformKind::Projective).matrix;
    Eigen::Matrix3d tm = Eigen::Matrix3d::Identity(), tf = Eigen::Matrix3d::Identity();
    tm(0, 2) = 1000.0;
    tm(1, 2) = -250.0;
    tf(0, 2) = -300.0;
    tf(1, 2) = 777.0;
    for (auto& p : pairs) {
      p.moving = apply(tm, p.moving);
      p.fixed = apply(tf, p.fixed);
    }
    const Eigen::Matrix3d h2 = estimate(pairs, TransformKind::Projective).matrix;
    EXPECT_LE(matrix_gap(tf.inverse() * h2 * tm, h), 1e-6) << trial;
  }
}

TEST(Estimate, AutoPrefersSimplerModel) {
  std::mt19937_64 rng(6);
  const auto sim_pairs = make_pairs(random_transform(TransformKind::Similarity, rng), 40, rng, 0.5);
  EXPECT_EQ(estimate_auto(sim_pairs).kind, TransformKind::Similarity);
  const auto proj_pairs = make_pairs(random_transform(TransformKind::Projective, rng), 40, rng, 0.05);
  EXPECT_EQ(estimate_auto(proj_pairs).kind, TransformKind::Projective);
}

TEST(Apply, Examples) {
  const Point2 p = apply(TransformModel::identity(), {3, 4});
  EXPECT_EQ(p.x, 3.0);
  EXPECT_EQ(p.y, 4.0);
  const Point2 q = apply(make_similarity(0.0, 1.0, 2.0, 5.0), {0, 0});
  EXPECT_EQ(q.x, 2.0);
  EXPECT_EQ(q.y, 5.0);
  TransformModel inf = TransformModel::identity(TransformKind::Projective);
  inf.matrix(2, 0) = 1.0;
  inf.matrix(2, 2) = 0.0;
  try {
    apply(inf, {0, 7});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::PointAtInfinity);
  }
}

TEST(Inverse, RoundTrip) {
  std::mt19937_64 rng(7);
  for (int i = 0; i < 10; ++i) {
    TransformModel t{TransformKind::Projective, random_transform(TransformKind::Projective, rng), 0.0, 0};
    const TransformModel back = compose(inverse(t), t);
    EXPECT_LE(matrix_gap(back.matrix, Eigen::Matrix3d::Identity()), 1e-9);
  }
  TransformModel singular = TransformModel::identity();
  singular.matrix(1, 1) = 0.0;
  EXPECT_THROW(inverse(singular), Error);
}

TEST(ResidualRmse, Examples) {
  const std::vector<PointPair> pairs{{{3, 4}, {0, 0}}};
  EXPECT_DOUBLE_EQ(residual_rmse(TransformModel::identity(), pairs), 5.0);
  const std::vector<PointPair> exact{{{1, 2}, {1, 2}}, {{5, 6}, {5, 6}}};
  EXPECT_EQ(residual_rmse(TransformModel::identity(), exact), 0.0);
}

TEST(Warp, IdentityIsExact) {
  const GrayImage img = testing::random_image(30, 20, 8);
  EXPECT_EQ(warp(img, TransformModel::identity(), 30, 20), img);
}

TEST(Warp, IntegerShift) {
  const GrayImage img = testing::random_image(30, 20, 9);
  const GrayImage out = warp(img, make_similarity(0.0, 1.0, 3.0, -2.0), 30, 20);
  for (int y = 0; y < 20; ++y) {
    for (int x = 0; x < 30; ++x) {
      const int sx = x - 3, sy = y + 2;
      const double expected = sx >= 0 && sy < 20 ? img.at(sx, sy) : 0.0;
      EXPECT_EQ(out.at(x, y), expected) << x << "," << y;
    }
  }
}

TEST(Warp, RoundTripOnSmoothImage) {
  GrayImage img(200, 200);
  for (int y = 0; y < 200; ++y)
    for (int x = 0; x < 200; ++x) img.at(x, y) = 0.5 + 0.25 * std::sin(x / 7.0) + 0.25 * std::cos((x + 2 * y) / 11.0);
  const TransformModel t = centered_similarity(0.3, 1.1, -8.0, 15.0, 200, 200, 200, 200);
  const GrayImage there = warp(img, t, 200, 200);
  const GrayImage back = warp(there, inverse(t), 200, 200);
  double s = 0.0;
  int n = 0;
  for (int y = 50; y < 150; ++y)
    for (int x = 50; x < 150; ++x) {
      s += std::abs(back.at(x, y) - img.at(x, y));
      ++n;
    }
  EXPECT_LT(s / n, 0.01);
}

TEST(TransformFile, RoundTrip) {
  std::mt19937_64 rng(11);
  TransformModel t{TransformKind::Projective, random_transform(TransformKind::Projective, rng), 0.123, 42};
  t.matrix = detail::normalized_h(t.matrix);
  const auto dir = testing::temp_dir("tf");
  write_transform(dir / "t.txt", t);
  const TransformModel r = read_transform(dir / "t.txt");
  EXPECT_EQ(r.kind, t.kind);
  EXPECT_EQ(r.matrix, t.matrix);
  EXPECT_EQ(r.rmse, t.rmse);
  EXPECT_EQ(r.n_points, t.n_points);
}

TEST(TransformKindNames, Parse) {
  for (const auto kind : kKinds) EXPECT_EQ(parse_transform_kind(to_string(kind)), kind);
  EXPECT_FALSE(parse_transform_kind("rigid").has_value());
}

}  // namespace
}  // namespace msreg
