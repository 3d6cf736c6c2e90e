#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "msreg/error.hpp"
#include "msreg/image.hpp"

namespace msreg {

struct Keypoint {
  double x = 0.0;
  double y = 0.0;
  double response = 0.0;

  friend bool operator==(const Keypoint&, const Keypoint&) = default;
};

struct DetectorConfig {
  double tensor_sigma = 1.5;
  int lnms_radius = 5;
  int max_points = 1000;
  int min_points = 500;

  void validate() const {
    if (lnms_radius < 5) {
      throw Error(ErrorCode::InvalidConfig, "lnms_radius must be >= 5 (10x10 window minimum)");
    }
    if (min_points > max_points || max_points < 1 || min_points < 0) {
      throw Error(ErrorCode::InvalidConfig, "need 0 <= min_points <= max_points, max_points >= 1");
    }
    if (!(tensor_sigma > 0.0)) throw Error(ErrorCode::NonPositiveSigma, "tensor_sigma must be > 0");
  }

  /// Failure floor for a width x height image: min_points, capped at a
  /// quarter of the number of disjoint LNMS windows the image can hold.
  int effective_min_points(int width, int height) const {
    const int side = 2 * lnms_radius + 1;
    const long capacity = static_cast<long>(width / side) * (height / side);
    return static_cast<int>(std::min<long>(min_points, capacity / 4));
  }
};

inline constexpr double kTraceEpsilon = 1e-12;

/// Harris cornerness det(M)/tr(M) with M the Gaussian-windowed structure tensor.
inline GrayImage corner_response(const GrayImage& img, double tensor_sigma = 1.5) {
  const GradientField g = gradient(img);
  const int w = img.width();
  const int h = img.height();
  GrayImage xx(w, h), xy(w, h), yy(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double ix = g.gx.at(x, y);
      const double iy = g.gy.at(x, y);
      xx.at(x, y) = ix * ix;
      xy.at(x, y) = ix * iy;
      yy.at(x, y) = iy * iy;
    }
  }
  const Kernel window = gaussian_kernel(tensor_sigma);
  const GrayImage sxx = convolve(xx, window);
  const GrayImage sxy = convolve(xy, window);
  const GrayImage syy = convolve(yy, window);

  GrayImage r(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double a = sxx.at(x, y);
      const double b = sxy.at(x, y);
      const double c = syy.at(x, y);
      const double tr = a + c;
      // M is PSD so det >= 0 up to rounding
      r.at(x, y) = tr < kTraceEpsilon ? 0.0 : std::max(0.0, (a * c - b * b) / tr);
    }
  }
  return r;
}

/// sqrt((M*N)/(m*n)): side-length ratio that equalizes point density across a pair.
inline double lnms_ratio(std::pair<int, int> fixed_dims, std::pair<int, int> moving_dims) {
  const double a = static_cast<double>(fixed_dims.first) * fixed_dims.second;
  const double b = static_cast<double>(moving_dims.first) * moving_dims.second;
  return std::sqrt(a / b);
}

/// The larger-area image gets its LNMS radius scaled by the area ratio.
inline std::pair<int, int> paired_lnms_radii(int base_radius, std::pair<int, int> fixed_dims,
                                             std::pair<int, int> moving_dims) {
  const double ratio = lnms_ratio(fixed_dims, moving_dims);
  int rf = base_radius;
  int rm = base_radius;
  if (ratio > 1.0) {
    rf = static_cast<int>(std::lround(base_radius * ratio));
  } else if (ratio < 1.0) {
    rm = static_cast<int>(std::lround(base_radius / ratio));
  }
  return {std::max(rf, 5), std::max(rm, 5)};
}

/// Pixels that beat every other pixel in their (2r+1)^2 window. Equal
/// responses go to the earlier pixel in row-major order. Output is in
/// row-major order; only strictly positive responses qualify.
inline std::vector<Keypoint> lnms_survivors(const GrayImage& response, int radius) {
  const int w = response.width();
  const int h = response.height();
  std::vector<Keypoint> out;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double v = response.at(x, y);
      if (!(v > 0.0)) continue;
      const long self = static_cast<long>(y) * w + x;
      bool keep = true;
      const int y0 = std::max(0, y - radius), y1 = std::min(h - 1, y + radius);
      const int x0 = std::max(0, x - radius), x1 = std::min(w - 1, x + radius);
      for (int qy = y0; qy <= y1 && keep; ++qy) {
        for (int qx = x0; qx <= x1; ++qx) {
          const double q = response.at(qx, qy);
          if (q > v || (q == v && static_cast<long>(qy) * w + qx < self)) {
            keep = false;
            break;
          }
        }
      }
      if (keep) out.push_back({static_cast<double>(x), static_cast<double>(y), v});
    }
  }
  return out;
}

/// Sort by response, strongest first; equal responses keep row-major order.
inline void sort_by_response(std::vector<Keypoint>& kps) {
  std::stable_sort(kps.begin(), kps.end(),
                   [](const Keypoint& a, const Keypoint& b) { return a.response > b.response; });
}

/// Harris corners thinned by LNMS, strongest first, at most max_points.
inline std::vector<Keypoint> detect(const GrayImage& img, const DetectorConfig& cfg = {}) {
  cfg.validate();
  const GrayImage response = corner_response(img, cfg.tensor_sigma);
  std::vector<Keypoint> kps = lnms_survivors(response, cfg.lnms_radius);
  sort_by_response(kps);
  if (kps.size() > static_cast<std::size_t>(cfg.max_points)) {
    kps.resize(static_cast<std::size_t>(cfg.max_points));
  }
  const int floor = cfg.effective_min_points(img.width(), img.height());
  if (kps.size() < static_cast<std::size_t>(floor) || kps.empty()) {
    throw Error(ErrorCode::TooFewKeypoints, "found " + std::to_string(kps.size()) +
                                                " keypoints, need " + std::to_string(std::max(floor, 1)));
  }
  return kps;
}

inline void write_keypoints_csv(const std::filesystem::path& path, const std::vector<Keypoint>& kps) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::IoFailure, "cannot create " + path.string());
  char line[128];
  for (const auto& k : kps) {
    std::snprintf(line, sizeof line, "%.17g,%.17g,%.17g\n", k.x, k.y, k.response);
    out << line;
  }
}

}  // namespace msreg
