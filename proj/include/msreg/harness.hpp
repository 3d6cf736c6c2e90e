#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <numeric>
#include <random>
#include <variant>
#include <vector>

#include "msreg/error.hpp"
#include "msreg/image.hpp"
#include "msreg/pipeline.hpp"
#include "msreg/transform.hpp"

namespace msreg {

/// Radiometric distortion applied to the moving image of a synthetic pair.
struct IntensityMode {
  enum class Kind { Identity, Invert, Gamma, Affine };
  Kind kind = Kind::Identity;
  double a = 1.0;  // gamma exponent, or affine gain
  double b = 0.0;  // affine offset

  static IntensityMode identity() { return {}; }
  static IntensityMode invert() { return {Kind::Invert}; }
  static IntensityMode gamma(double g) { return {Kind::Gamma, g, 0.0}; }
  static IntensityMode affine(double gain, double offset) { return {Kind::Affine, gain, offset}; }

  double operator()(double v) const {
    switch (kind) {
      case Kind::Identity: return v;
      case Kind::Invert: return 1.0 - v;
      case Kind::Gamma: return std::pow(std::max(v, 0.0), a);
      case Kind::Affine: return a * v + b;
    }
    return v;
  }
};

struct SyntheticPair {
  GrayImage fixed;
  GrayImage moving;
  TransformModel gt;        // moving -> fixed
  std::vector<bool> valid;  // moving pixels that saw the source
};

/// fixed = source; moving(p) = intensity(source(gt(p))) + N(0, noise_sigma^2).
/// When gt magnifies (moving pixels cover more than one source pixel) the
/// source is low-passed first to avoid aliasing.
inline SyntheticPair synthetic_pair(const GrayImage& source, const TransformModel& gt, IntensityMode intensity,
                                    double noise_sigma, std::uint64_t seed, int out_w = 0, int out_h = 0) {
  if (!detail::invertible(gt.matrix)) throw Error(ErrorCode::SingularTransform, "ground truth is singular");
  if (out_w <= 0) out_w = source.width();
  if (out_h <= 0) out_h = source.height();

  const double scale = std::sqrt(std::abs(gt.matrix.topLeftCorner<2, 2>().determinant()));
  const GrayImage src = scale > 1.0 ? gaussian_blur(source, 0.5 * std::sqrt(scale * scale - 1.0)) : source;

  WarpResult w = warp_with_mask(src, inverse(gt), out_w, out_h);
  auto px = w.image.data();
  for (std::size_t i = 0; i < px.size(); ++i) {
    if (w.valid[i]) px[i] = intensity(px[i]);
  }
  if (noise_sigma > 0.0) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> noise(0.0, noise_sigma);
    for (double& v : px) v += noise(rng);
  }
  return {source, std::move(w.image), gt, std::move(w.valid)};
}

/// Structured test scene: smooth multi-scale background plus random
/// polygons and ellipses, values in [0, 1].
inline GrayImage make_texture(int width, int height, std::uint64_t seed, int shapes = 0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  if (shapes <= 0) shapes = std::max(20, width * height / 1200);

  GrayImage img(width, height, 0.0);
  for (const double sigma : {24.0, 8.0}) {
    GrayImage noise(width, height);
    for (double& v : noise.data()) v = uni(rng) - 0.5;
    noise = gaussian_blur(noise, sigma);
    const double gain = 0.35 / std::sqrt(std::max(image_variance(noise), 1e-30)) * (sigma > 10 ? 0.25 : 0.12);
    auto dst = img.data();
    auto src = noise.data();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += gain * src[i];
  }

  for (int s = 0; s < shapes; ++s) {
    const double cx = uni(rng) * width;
    const double cy = uni(rng) * height;
    const double size = 4.0 + std::pow(uni(rng), 2.0) * 36.0;
    const double aspect = 0.4 + 0.6 * uni(rng);
    const double angle = uni(rng) * std::numbers::pi;
    const double value = uni(rng) - 0.5;
    const int type = static_cast<int>(uni(rng) * 3.0);
    const double c = std::cos(angle);
    const double sn = std::sin(angle);
    const double hx = size;
    const double hy = size * aspect;
    const int r = static_cast<int>(std::ceil(size)) + 1;
    for (int y = std::max(0, static_cast<int>(cy) - r); y <= std::min(height - 1, static_cast<int>(cy) + r); ++y) {
      for (int x = std::max(0, static_cast<int>(cx) - r); x <= std::min(width - 1, static_cast<int>(cx) + r); ++x) {
        const double dx = x - cx;
        const double dy = y - cy;
        const double u = (dx * c + dy * sn) / hx;
        const double v = (-dx * sn + dy * c) / hy;
        bool inside = false;
        switch (type) {
          case 0: inside = std::abs(u) <= 1.0 && std::abs(v) <= 1.0; break;       // rectangle
          case 1: inside = u * u + v * v <= 1.0; break;                             // ellipse
          default: inside = v >= -1.0 && std::abs(u) <= (1.0 - v) / 2.0; break;     // triangle
        }
        if (inside) img.at(x, y) = 0.4 * img.at(x, y) + value;
      }
    }
  }
  return normalize(gaussian_blur(img, 0.8));
}

/// Similarity about the image centers: moving center maps to fixed center
/// shifted by (tx, ty).
inline TransformModel centered_similarity(double angle_rad, double scale, double tx, double ty, int moving_w,
                                          int moving_h, int fixed_w, int fixed_h) {
  const double mcx = (moving_w - 1) / 2.0, mcy = (moving_h - 1) / 2.0;
  const double fcx = (fixed_w - 1) / 2.0, fcy = (fixed_h - 1) / 2.0;
  const double c = scale * std::cos(angle_rad);
  const double s = scale * std::sin(angle_rad);
  TransformModel t = TransformModel::identity(TransformKind::Similarity);
  t.matrix << c, -s, fcx + tx - (c * mcx - s * mcy), s, c, fcy + ty - (s * mcx + c * mcy), 0, 0, 1;
  return t;
}

struct EvaluationReport {
  std::size_t n_filtered = 0;
  std::size_t n_correct = 0;
  double corner_rmse = 0.0;
  bool success = false;
};

/// A filtered match is correct when gt maps its moving point within eps of
/// its fixed point. corner_rmse compares estimated and true mappings of the
/// four moving-image corners.
inline EvaluationReport evaluate(const RegistrationResult& result, const TransformModel& gt, int moving_w,
                                 int moving_h, double eps = 2.0) {
  EvaluationReport rep;
  rep.n_filtered = result.filtered_matches.size();
  for (const auto& p : result.filtered_pairs()) {
    const Point2 q = apply(gt, p.moving);
    if (std::hypot(q.x - p.fixed.x, q.y - p.fixed.y) <= eps) ++rep.n_correct;
  }
  const double xs[2] = {0.0, static_cast<double>(moving_w - 1)};
  const double ys[2] = {0.0, static_cast<double>(moving_h - 1)};
  double ss = 0.0;
  for (double y : ys) {
    for (double x : xs) {
      const Point2 e = apply(result.transform, {x, y});
      const Point2 g = apply(gt, {x, y});
      ss += (e.x - g.x) * (e.x - g.x) + (e.y - g.y) * (e.y - g.y);
    }
  }
  rep.corner_rmse = std::sqrt(ss / 4.0);
  rep.success = rep.n_correct >= 3;
  return rep;
}

/// Spearman rank correlation with average ranks for ties.
inline double spearman(const std::vector<double>& a, const std::vector<double>& b) {
  auto ranks = [](const std::vector<double>& v) {
    std::vector<std::size_t> idx(v.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](std::size_t i, std::size_t j) { return v[i] < v[j]; });
    std::vector<double> r(v.size());
    for (std::size_t i = 0; i < idx.size();) {
      std::size_t j = i;
      while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
      const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
      for (std::size_t k = i; k <= j; ++k) r[idx[k]] = avg;
      i = j + 1;
    }
    return r;
  };
  const auto ra = ranks(a);
  const auto rb = ranks(b);
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / n;
  const double mb = std::accumulate(rb.begin(), rb.end(), 0.0) / n;
  double num = 0.0, da = 0.0, db = 0.0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    num += (ra[i] - ma) * (rb[i] - mb);
    da += (ra[i] - ma) * (ra[i] - ma);
    db += (rb[i] - mb) * (rb[i] - mb);
  }
  return da > 0.0 && db > 0.0 ? num / std::sqrt(da * db) : 0.0;
}

}  // namespace msreg
