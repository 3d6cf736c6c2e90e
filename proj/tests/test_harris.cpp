#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <set>

#include "msreg/harness.hpp"
#include "msreg/harris.hpp"
#include "test_util.hpp"

namespace msreg {
namespace {

ErrorCode detect_error(const GrayImage& img, const DetectorConfig& cfg = {}) {
  try {
    detect(img, cfg);
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::IoFailure;
}

// Rank every pixel (response descending, row-major among equals); a pixel
// survives when it holds the best rank in its window. Independent of the
// library's direct comparison scan.
std::vector<Keypoint> rank_oracle(const GrayImage& r, int radius) {
  const int w = r.width(), h = r.height();
  std::vector<std::size_t> order(r.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return r.data()[a] > r.data()[b]; });
  std::vector<std::size_t> rank(r.size());
  for (std::size_t i = 0; i < order.size(); ++i) rank[order[i]] = i;
  std::vector<Keypoint> out;
  for (std::size_t i : order) {
    const int x = static_cast<int>(i % static_cast<std::size_t>(w));
    const int y = static_cast<int>(i / static_cast<std::size_t>(w));
    if (!(r.data()[i] > 0.0)) continue;
    bool best = true;
    for (int qy = std::max(0, y - radius); qy <= std::min(h - 1, y + radius) && best; ++qy)
      for (int qx = std::max(0, x - radius); qx <= std::min(w - 1, x + radius); ++qx)
        if (rank[static_cast<std::size_t>(qy * w + qx)] < rank[i]) {
          best = false;
          break;
        }
    if (best) out.push_back({double(x), double(y), r.data()[i]});
  }
  return out;  // already strongest first
}

TEST(CornerResponse, ConstantIsZero) {
  const GrayImage r = corner_response(GrayImage(20, 20, 0.3));
  for (double v : r.data()) EXPECT_EQ(v, 0.0);
}

TEST(CornerResponse, VerticalStepEdgeIsZero) {
  GrayImage img(40, 40, 0.0);
  for (int y = 0; y < 40; ++y)
    for (int x = 20; x < 40; ++x) img.at(x, y) = 1.0;
  const GrayImage r = corner_response(img);
  for (int y = 0; y < 40; ++y)
    for (int x = 0; x < 40; ++x) EXPECT_NEAR(r.at(x, y), 0.0, 1e-12);
}

TEST(CornerResponse, SquareCornersAreTopMaxima) {
  GrayImage img(64, 64, 0.0);
  for (int y = 22; y < 42; ++y)
    for (int x = 22; x < 42; ++x) img.at(x, y) = 1.0;
  DetectorConfig cfg;
  cfg.min_points = 0;
  cfg.max_points = 4;
  const auto kps = detect(img, cfg);
  ASSERT_EQ(kps.size(), 4u);
  const double corners[4][2] = {{21.5, 21.5}, {41.5, 21.5}, {21.5, 41.5}, {41.5, 41.5}};
  for (const auto& c : corners) {
    const bool hit = std::any_of(kps.begin(), kps.end(), [&](const Keypoint& k) {
      return std::abs(k.x - c[0]) <= 2.0 && std::abs(k.y - c[1]) <= 2.0;
    });
    EXPECT_TRUE(hit) << c[0] << "," << c[1];
  }
}

TEST(CornerResponse, AdditiveOffsetInvariant) {
  // integer-valued images keep every intermediate exact
  GrayImage a(48, 48);
  std::mt19937_64 rng(8);
  std::uniform_int_distribution<int> u(0, 200);
  for (double& v : a.data()) v = u(rng);
  GrayImage b = a;
  for (double& v : b.data()) v += 37.0;
  EXPECT_EQ(corner_response(a), corner_response(b));
}

TEST(CornerResponse, RotationBy90Covariant) {
  const GrayImage a = testing::random_image(40, 30, 9);
  GrayImage rot(30, 40);  // rot(x', y') = a(y', 29 - x')
  for (int y = 0; y < 40; ++y)
    for (int x = 0; x < 30; ++x) rot.at(x, y) = a.at(y, 29 - x);
  const GrayImage ra = corner_response(a);
  const GrayImage rr = corner_response(rot);
  for (int y = 0; y < 40; ++y)
    for (int x = 0; x < 30; ++x) EXPECT_NEAR(rr.at(x, y), ra.at(y, 29 - x), 1e-12);
}

TEST(LnmsRatio, Examples) {
  EXPECT_DOUBLE_EQ(lnms_ratio({512, 512}, {512, 512}), 1.0);
  EXPECT_DOUBLE_EQ(lnms_ratio({1000, 1000}, {500, 500}), 2.0);
  EXPECT_DOUBLE_EQ(lnms_ratio({800, 600}, {400, 300}), 2.0);
}

TEST(PairedRadii, Examples) {
  EXPECT_EQ(paired_lnms_radii(5, {512, 512}, {512, 512}), std::make_pair(5, 5));
  EXPECT_EQ(paired_lnms_radii(5, {1000, 1000}, {500, 500}), std::make_pair(10, 5));
  EXPECT_EQ(paired_lnms_radii(5, {500, 500}, {1000, 1000}), std::make_pair(5, 10));
}

TEST(Detect, ConstantImageTooFewKeypoints) {
  EXPECT_EQ(detect_error(GrayImage(128, 128, 0.5)), ErrorCode::TooFewKeypoints);
  DetectorConfig lax;
  lax.min_points = 0;
  EXPECT_EQ(detect_error(GrayImage(128, 128, 0.5), lax), ErrorCode::TooFewKeypoints);
}

TEST(Detect, CheckerboardSeparation) {
  GrayImage img(256, 256);
  for (int y = 0; y < 256; ++y)
    for (int x = 0; x < 256; ++x) img.at(x, y) = ((x / 32 + y / 32) % 2) ? 1.0 : 0.0;
  DetectorConfig cfg;
  cfg.min_points = 0;
  const auto kps = detect(img, cfg);
  ASSERT_FALSE(kps.empty());
  for (std::size_t i = 0; i < kps.size(); ++i)
    for (std::size_t j = i + 1; j < kps.size(); ++j)
      EXPECT_GT(std::max(std::abs(kps[i].x - kps[j].x), std::abs(kps[i].y - kps[j].y)), 5.0);
}

TEST(Detect, TopHundredMatchesExhaustiveOracle) {
  const GrayImage img = gaussian_blur(testing::random_image(256, 256, 12), 1.0);
  DetectorConfig cfg;
  cfg.max_points = 100;
  cfg.min_points = 0;
  const auto kps = detect(img, cfg);
  ASSERT_EQ(kps.size(), 100u);
  auto oracle = rank_oracle(corner_response(img, cfg.tensor_sigma), cfg.lnms_radius);
  ASSERT_GE(oracle.size(), 100u);
  oracle.resize(100);
  EXPECT_EQ(kps, oracle);
}

TEST(Lnms, SurvivorSetsMatchOracle) {
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    // quantized responses force plenty of ties
    GrayImage r = testing::random_image(60, 45, seed);
    for (double& v : r.data()) v = std::floor(v * 6.0) / 6.0;
    for (int radius : {1, 5, 8}) {
      auto a = lnms_survivors(r, radius);
      sort_by_response(a);
      EXPECT_EQ(a, rank_oracle(r, radius)) << seed << " r=" << radius;
    }
  }
}

TEST(Detect, DeterministicAndSorted) {
  const GrayImage img = make_texture(200, 200, 5);
  DetectorConfig cfg;
  cfg.min_points = 0;
  const auto a = detect(img, cfg);
  const auto b = detect(img, cfg);
  EXPECT_EQ(a, b);
  EXPECT_TRUE(std::is_sorted(a.begin(), a.end(),
                             [](const Keypoint& p, const Keypoint& q) { return p.response > q.response; }));
  EXPECT_LE(a.size(), static_cast<std::size_t>(cfg.max_points));
}

TEST(Detect, FloorScalesWithLnmsCapacity) {
  DetectorConfig cfg;  // min_points 500
  EXPECT_EQ(cfg.effective_min_points(512, 512), 500);
  cfg.lnms_radius = 10;
  EXPECT_EQ(cfg.effective_min_points(512, 512), 144);
  cfg.lnms_radius = 5;
  EXPECT_EQ(cfg.effective_min_points(256, 256), 132);
}

TEST(Detect, ConfigValidation) {
  DetectorConfig cfg;
  cfg.lnms_radius = 4;
  EXPECT_EQ(detect_error(testing::random_image(64, 64, 1), cfg), ErrorCode::InvalidConfig);
}

}  // namespace
}  // namespace msreg
