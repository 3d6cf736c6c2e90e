#include <gtest/gtest.h>

#include <map>
#include <set>

#include "msreg/harness.hpp"
#include "msreg/matching.hpp"
#include "test_util.hpp"

namespace msreg {
namespace {

DescriptorBundle random_bundle(std::size_t n, std::uint64_t seed, std::size_t lo = 0, std::size_t hi = 128) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  DescriptorBundle b;
  for (std::size_t i = 0; i < n; ++i) {
    Descriptor d;
    for (std::size_t k = lo; k < hi; ++k) d.values[k] = u(rng);
    detail::l2_normalize(d.values);
    d.keypoint_id = static_cast<std::uint32_t>(i);
    d.orientation = {0.0, true};
    b.descriptors.push_back(d);
  }
  b.keypoint_count = n;
  return b;
}

// Linear scan, lowest index wins ties.
std::size_t exhaustive_nn(const DescriptorVector& q, const DescriptorBundle& b) {
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < b.size(); ++i) {
    double s = 0.0;
    for (std::size_t k = 0; k < 128; ++k) s += (q[k] - b.descriptors[i].values[k]) * (q[k] - b.descriptors[i].values[k]);
    if (s < best_d) {
      best_d = s;
      best = i;
    }
  }
  return best;
}

DescriptorBundle texture_bundle(std::uint64_t seed) {
  DetectorConfig dc;
  dc.min_points = 0;
  dc.max_points = 120;
  const GrayImage img = make_texture(256, 256, seed);
  return describe_multiscale(build_pyramid(img), detect(img, dc));
}

TEST(Bbf, SelfMatchIsIdentity) {
  const DescriptorBundle b = texture_bundle(1);
  ASSERT_GT(b.size(), 100u);
  MatchConfig cfg;
  cfg.threshold = 0.99;
  const MatchSet ms = bbf_match(b, b, cfg);
  std::set<std::uint32_t> ids;
  for (const auto& d : b.descriptors) ids.insert(d.keypoint_id);
  EXPECT_EQ(ms.size(), ids.size());
  for (const auto& m : ms.matches) {
    EXPECT_EQ(m.fixed_kp, m.moving_kp);
    EXPECT_NEAR(m.similarity, 1.0, 1e-9);
  }
}

TEST(Bbf, UnboundedChecksEqualExhaustive) {
  for (std::uint64_t seed : {3u, 4u}) {
    const DescriptorBundle fixed = random_bundle(200, seed);
    const DescriptorBundle moving = random_bundle(200, seed + 100);
    std::vector<const DescriptorVector*> pts;
    for (const auto& d : moving.descriptors) pts.push_back(&d.values);
    const KdTree<kDescriptorSize> tree(pts);
    for (const auto& f : fixed.descriptors) {
      EXPECT_EQ(tree.nearest(f.values, 0).index, exhaustive_nn(f.values, moving));
      EXPECT_EQ(tree.nearest(f.values, moving.size()).index, exhaustive_nn(f.values, moving));
    }
  }
}

TEST(Bbf, RealDescriptorsUnboundedEqualExhaustive) {
  const DescriptorBundle fixed = texture_bundle(5);
  const DescriptorBundle moving = texture_bundle(6);
  std::vector<const DescriptorVector*> pts;
  for (const auto& d : moving.descriptors) pts.push_back(&d.values);
  const KdTree<kDescriptorSize> tree(pts);
  for (const auto& f : fixed.descriptors) EXPECT_EQ(tree.nearest(f.values).index, exhaustive_nn(f.values, moving));
}

TEST(Bbf, BoundedChecksHonored) {
  const DescriptorBundle fixed = random_bundle(20, 7);
  const DescriptorBundle moving = random_bundle(300, 8);
  std::vector<const DescriptorVector*> pts;
  for (const auto& d : moving.descriptors) pts.push_back(&d.values);
  const KdTree<kDescriptorSize> tree(pts);
  for (const auto& f : fixed.descriptors) EXPECT_LE(tree.nearest(f.values, 10).checks, 10u);
}

TEST(Bbf, OrthogonalSetsDoNotMatch) {
  const DescriptorBundle a = random_bundle(30, 9, 0, 64);
  const DescriptorBundle b = random_bundle(30, 10, 64, 128);
  EXPECT_TRUE(bbf_match(a, b).empty());
}

TEST(Bbf, EmptyBundleRejected) {
  try {
    bbf_match(DescriptorBundle{}, random_bundle(3, 1));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::EmptyBundle);
  }
}

TEST(Bbf, OneToOneAndAboveThreshold) {
  const DescriptorBundle a = texture_bundle(11);
  const DescriptorBundle b = texture_bundle(12);
  MatchConfig cfg;
  cfg.threshold = 0.5;
  const MatchSet ms = bbf_match(a, b, cfg);
  std::set<std::uint32_t> fixed_ids, moving_ids;
  for (const auto& m : ms.matches) {
    EXPECT_GE(m.similarity, cfg.threshold);
    EXPECT_TRUE(fixed_ids.insert(m.fixed_kp).second);
    EXPECT_TRUE(moving_ids.insert(m.moving_kp).second);
  }
}

TEST(CosineFromDistance, Identity) {
  EXPECT_DOUBLE_EQ(cosine_from_distance_sq(0.0), 1.0);
  EXPECT_DOUBLE_EQ(cosine_from_distance_sq(2.0), 0.0);
}

TEST(Mismatch, ExactSimilarityAllRetained) {
  const auto s = testing::synthetic_matches(40, 0, 13);
  const MatchSet out = remove_mismatches(s.set, s.fixed, s.moving);
  EXPECT_EQ(out.size(), 40u);
  EXPECT_EQ(out.stage, MatchStage::Filtered);
}

TEST(Mismatch, TwentyInliersTwentyOutliers) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto s = testing::synthetic_matches(20, 20, seed);
    const MismatchReport rep = mismatch_mask(s.set, s.fixed, s.moving);
    int outliers_removed = 0, inliers_kept = 0;
    for (std::size_t i = 0; i < s.inlier.size(); ++i) {
      if (s.inlier[i] && rep.kept[i]) ++inliers_kept;
      if (!s.inlier[i] && !rep.kept[i]) ++outliers_removed;
    }
    EXPECT_GE(outliers_removed, 19) << seed;
    EXPECT_GE(inliers_kept, 18) << seed;
  }
}

TEST(Mismatch, TwoMatchesInsufficient) {
  const auto s = testing::synthetic_matches(2, 0, 14);
  try {
    remove_mismatches(s.set, s.fixed, s.moving);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::InsufficientMatches);
  }
}

TEST(Mismatch, RotationEquivariant) {
  // rotating the whole fixed side shifts every orientation difference equally
  const auto s = testing::synthetic_matches(25, 15, 15);
  auto rotated = s;
  const double a = 1.1;
  for (auto& k : rotated.fixed) {
    const double x = k.x, y = k.y;
    k.x = std::cos(a) * x - std::sin(a) * y;
    k.y = std::sin(a) * x + std::cos(a) * y;
  }
  for (auto& m : rotated.set.matches) m.fixed_angle = wrap_pi(m.fixed_angle + a);
  EXPECT_EQ(mismatch_mask(s.set, s.fixed, s.moving).kept, mismatch_mask(rotated.set, rotated.fixed, rotated.moving).kept);
}

TEST(Mismatch, MovingOrientationShiftMovesMode) {
  const auto s = testing::synthetic_matches(25, 15, 18, 0.7);
  auto shifted = s;
  const double phi = 0.9;
  for (auto& m : shifted.set.matches) m.moving_angle = wrap_pi(m.moving_angle + phi);
  const MismatchReport a = mismatch_mask(s.set, s.fixed, s.moving);
  const MismatchReport b = mismatch_mask(shifted.set, shifted.fixed, shifted.moving);
  EXPECT_EQ(a.kept, b.kept);
  // delta = fixed - moving, so the mode moves by -phi
  EXPECT_LT(detail::axial_distance(b.orientation_mode, wrap_pi(a.orientation_mode - phi)), 1e-9);
}

TEST(Mismatch, OrientationModeFound) {
  const auto s = testing::synthetic_matches(30, 10, 16, 2.0);
  const MismatchReport rep = mismatch_mask(s.set, s.fixed, s.moving);
  // outliers sharing the peak bins pull the refined mode slightly
  EXPECT_LT(detail::axial_distance(rep.orientation_mode, 2.0), 0.01);
  EXPECT_NEAR(rep.median_ratio, 1.2, 1e-3);
}

TEST(Mismatch, AxialDistance) {
  EXPECT_NEAR(detail::axial_distance(0.05, std::numbers::pi - 0.05), 0.1, 1e-12);
  EXPECT_NEAR(detail::axial_distance(1.0, 1.0), 0.0, 1e-15);
}

TEST(Mismatch, CsvHasHeaderAndRows) {
  const auto s = testing::synthetic_matches(5, 0, 17);
  const auto dir = testing::temp_dir("csv");
  write_matches_csv(dir / "m.csv", s.set, std::vector<bool>(5, true), s.fixed, s.moving);
  std::ifstream in(dir / "m.csv");
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "fixed_x,fixed_y,moving_x,moving_y,similarity,kept");
  int rows = 0;
  while (std::getline(in, line)) ++rows;
  EXPECT_EQ(rows, 5);
}

}  // namespace
}  // namespace msreg
