#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "msreg/error.hpp"
#include "msreg/harris.hpp"
#include "msreg/image.hpp"
#include "msreg/scale_space.hpp"

namespace msreg {

inline constexpr int kDescriptorSize = 128;
inline constexpr int kDefaultWindow = 40;

/// Dominant gradient axis in [0, pi). Invalid on structureless neighborhoods.
struct MainOrientation {
  double angle = 0.0;
  bool valid = false;
};

using DescriptorVector = std::array<double, kDescriptorSize>;

struct Descriptor {
  DescriptorVector values{};
  int octave = 0;
  int layer = 0;
  std::uint32_t keypoint_id = 0;
  MainOrientation orientation;
};

struct SkippedLevel {
  std::uint32_t keypoint_id = 0;
  int octave = 0;
  int layer = 0;
  ErrorCode reason = ErrorCode::WindowOutOfBounds;
};

/// All descriptors of one image's keypoints across the pyramid, level-major.
struct DescriptorBundle {
  std::vector<Descriptor> descriptors;
  std::vector<SkippedLevel> skipped;
  std::size_t keypoint_count = 0;

  bool empty() const noexcept { return descriptors.empty(); }
  std::size_t size() const noexcept { return descriptors.size(); }

  std::vector<const Descriptor*> of_keypoint(std::uint32_t id) const {
    std::vector<const Descriptor*> out;
    for (const auto& d : descriptors) {
      if (d.keypoint_id == id) out.push_back(&d);
    }
    return out;
  }
};

inline double wrap_pi(double angle) {
  constexpr double pi = std::numbers::pi;
  double a = std::fmod(angle, pi);
  if (a < 0.0) a += pi;
  return a >= pi ? a - pi : a;
}

/// Averaged squared-gradient orientation over a Gaussian-weighted window of
/// side 2*radius+1 centered on `pt`. The window may be clipped by the image
/// border as long as 75% of it stays inside.
inline MainOrientation main_orientation(const GradientField& grad, Point2 pt, int radius) {
  const int w = grad.width();
  const int h = grad.height();
  const int cx = static_cast<int>(std::lround(pt.x));
  const int cy = static_cast<int>(std::lround(pt.y));
  const int x0 = std::max(0, cx - radius), x1 = std::min(w - 1, cx + radius);
  const int y0 = std::max(0, cy - radius), y1 = std::min(h - 1, cy + radius);
  const long side = 2L * radius + 1;
  const long inside = x1 < x0 || y1 < y0 ? 0 : static_cast<long>(x1 - x0 + 1) * (y1 - y0 + 1);
  if (4 * inside < 3 * side * side) {
    throw Error(ErrorCode::WindowOutOfBounds, "orientation window leaves the image");
  }

  const double sigma = std::max(1.0, radius / 2.0);
  const double inv2s2 = 1.0 / (2.0 * sigma * sigma);
  double a = 0.0;
  double b = 0.0;
  double wsum = 0.0;
  for (int y = y0; y <= y1; ++y) {
    for (int x = x0; x <= x1; ++x) {
      const double dx = x - pt.x;
      const double dy = y - pt.y;
      const double wt = std::exp(-(dx * dx + dy * dy) * inv2s2);
      const double gx = grad.gx.at(x, y);
      const double gy = grad.gy.at(x, y);
      a += wt * (gx * gx - gy * gy);
      b += wt * (2.0 * gx * gy);
      wsum += wt;
    }
  }
  if (std::hypot(a, b) < 1e-9 * wsum) return {0.0, false};
  return {wrap_pi(0.5 * std::atan2(b, a)), true};
}

inline MainOrientation main_orientation(const GrayImage& level_img, Point2 pt, int radius) {
  return main_orientation(gradient(level_img), pt, radius);
}

/// True when the rotated S x S sampling grid (plus a one-pixel gradient
/// margin) lies inside the image.
inline bool descriptor_window_fits(int width, int height, Point2 pt, double angle, int window) {
  const double half = window / 2.0 + 0.5;
  const double c = std::cos(angle);
  const double s = std::sin(angle);
  for (const double u : {-half, half}) {
    for (const double v : {-half, half}) {
      const double x = pt.x + u * c - v * s;
      const double y = pt.y + u * s + v * c;
      if (!(x >= 0.0 && y >= 0.0 && x <= width - 1 && y <= height - 1)) return false;
    }
  }
  return true;
}

namespace detail {

inline void l2_normalize(DescriptorVector& v) {
  double n = 0.0;
  for (double x : v) n += x * x;
  n = std::sqrt(n);
  for (double& x : v) x /= n;
}

}  // namespace detail

/// Partial-intensity-invariant descriptor.
///
/// The S x S neighborhood is resampled in the frame of the main orientation
/// and split into a 4x4 grid of cells. Each cell accumulates a 16-bin
/// histogram of gradient direction over [0, 2pi), magnitude-weighted and
/// softly assigned to neighboring bins and cells. Opposite bins are summed,
/// which makes the histogram blind to contrast inversion. The grid is then
/// paired with its 180-degree rotation; the first eight cells of the sum and
/// of the absolute difference form the 128 components, which removes the
/// pi ambiguity of the orientation.
inline Descriptor describe(const GrayImage& level_img, Point2 pt, MainOrientation ori,
                           int window = kDefaultWindow) {
  if (!ori.valid) throw Error(ErrorCode::InvalidOrientation, "orientation is not valid");
  if (window < 4 || window % 4 != 0) {
    throw Error(ErrorCode::InvalidConfig, "descriptor window must be a positive multiple of 4");
  }
  if (!descriptor_window_fits(level_img.width(), level_img.height(), pt, ori.angle, window)) {
    throw Error(ErrorCode::WindowOutOfBounds, "descriptor window leaves the image");
  }

  constexpr double two_pi = 2.0 * std::numbers::pi;
  constexpr int kCells = 4;
  constexpr int kBins = 16;
  const int n = window + 2;
  const double half = window / 2.0;
  const double c = std::cos(ori.angle);
  const double s = std::sin(ori.angle);

  // Patch sample (i, j) sits at offset (u, v) = (i - half - 0.5, j - half - 0.5)
  // in the rotated frame; rows/cols 0 and n-1 are gradient margin.
  std::vector<double> patch(static_cast<std::size_t>(n * n));
  for (int j = 0; j < n; ++j) {
    const double v = j - half - 0.5;
    for (int i = 0; i < n; ++i) {
      const double u = i - half - 0.5;
      patch[static_cast<std::size_t>(j * n + i)] =
          sample_bilinear(level_img, pt.x + u * c - v * s, pt.y + u * s + v * c);
    }
  }

  std::array<double, kCells * kCells * kBins> hist{};
  const double cell = static_cast<double>(window) / kCells;
  const double sigma = window / 2.0;
  const double inv2s2 = 1.0 / (2.0 * sigma * sigma);
  for (int j = 1; j <= window; ++j) {
    for (int i = 1; i <= window; ++i) {
      const auto at = [&](int ii, int jj) { return patch[static_cast<std::size_t>(jj * n + ii)]; };
      const double gx = (at(i + 1, j) - at(i - 1, j)) / 2.0;
      const double gy = (at(i, j + 1) - at(i, j - 1)) / 2.0;
      const double mag = std::hypot(gx, gy);
      if (mag == 0.0) continue;
      const double u = i - half - 0.5;
      const double v = j - half - 0.5;
      const double wmag = mag * std::exp(-(u * u + v * v) * inv2s2);

      double theta = std::atan2(gy, gx);
      if (theta < 0.0) theta += two_pi;
      const double fb = theta / two_pi * kBins;
      const int b0 = static_cast<int>(std::floor(fb)) % kBins;
      const int b1 = (b0 + 1) % kBins;
      const double wb1 = fb - std::floor(fb);

      // cell coordinates with cell centers at integer positions
      const double fc = (i - 0.5) / cell - 0.5;
      const double fr = (j - 0.5) / cell - 0.5;
      const int c0 = static_cast<int>(std::floor(fc));
      const int r0 = static_cast<int>(std::floor(fr));
      const double wc1 = fc - c0;
      const double wr1 = fr - r0;
      for (int dr = 0; dr < 2; ++dr) {
        const int r = r0 + dr;
        if (r < 0 || r >= kCells) continue;
        const double wr = dr == 0 ? 1.0 - wr1 : wr1;
        for (int dc = 0; dc < 2; ++dc) {
          const int cc = c0 + dc;
          if (cc < 0 || cc >= kCells) continue;
          const double wcell = wr * (dc == 0 ? 1.0 - wc1 : wc1) * wmag;
          double* h = &hist[static_cast<std::size_t>((r * kCells + cc) * kBins)];
          h[b0] += wcell * (1.0 - wb1);
          h[b1] += wcell * wb1;
        }
      }
    }
  }

  constexpr int kHalfBins = kBins / 2;
  std::array<double, kCells * kCells * kHalfBins> folded{};
  for (int k = 0; k < kCells * kCells; ++k) {
    for (int b = 0; b < kHalfBins; ++b) {
      folded[static_cast<std::size_t>(k * kHalfBins + b)] =
          hist[static_cast<std::size_t>(k * kBins + b)] +
          hist[static_cast<std::size_t>(k * kBins + b + kHalfBins)];
    }
  }

  Descriptor d;
  d.orientation = ori;
  constexpr int kHalfCells = kCells * kCells / 2;
  for (int k = 0; k < kHalfCells; ++k) {
    const int r = k / kCells;
    const int cc = k % kCells;
    const int opposite = (kCells - 1 - r) * kCells + (kCells - 1 - cc);
    for (int b = 0; b < kHalfBins; ++b) {
      const double x = folded[static_cast<std::size_t>(k * kHalfBins + b)];
      const double y = folded[static_cast<std::size_t>(opposite * kHalfBins + b)];
      d.values[static_cast<std::size_t>(k * kHalfBins + b)] = x + y;
      d.values[static_cast<std::size_t>(kDescriptorSize / 2 + k * kHalfBins + b)] = std::abs(x - y);
    }
  }

  double norm = 0.0;
  for (double x : d.values) norm += x * x;
  if (!(norm > 0.0)) throw Error(ErrorCode::DegeneratePatch, "patch has no gradient energy");
  detail::l2_normalize(d.values);
  for (double& x : d.values) x = std::min(x, 0.2);
  detail::l2_normalize(d.values);
  return d;
}

struct DescribeOptions {
  int window = kDefaultWindow;
  /// Orientation window radius; <= 0 means window / 2.
  int orientation_radius = 0;
  int threads = 1;
};

namespace detail {

inline void describe_level(const GrayImage& level, int octave, int layer,
                           const std::vector<Keypoint>& keypoints, int num_octaves,
                           const DescribeOptions& opt, std::vector<Descriptor>& out,
                           std::vector<SkippedLevel>& skipped) {
  const GradientField grad = gradient(level);
  const int radius = opt.orientation_radius > 0 ? opt.orientation_radius : opt.window / 2;
  for (std::size_t id = 0; id < keypoints.size(); ++id) {
    const auto kid = static_cast<std::uint32_t>(id);
    const Point2 p = map_to_level({keypoints[id].x, keypoints[id].y}, octave, num_octaves);
    try {
      const MainOrientation ori = main_orientation(grad, p, radius);
      if (!ori.valid) {
        skipped.push_back({kid, octave, layer, ErrorCode::InvalidOrientation});
        continue;
      }
      Descriptor d = describe(level, p, ori, opt.window);
      d.octave = octave;
      d.layer = layer;
      d.keypoint_id = kid;
      out.push_back(d);
    } catch (const Error& e) {
      skipped.push_back({kid, octave, layer, e.code()});
    }
  }
}

}  // namespace detail

/// Describe every keypoint at every pyramid level where its window fits.
/// Level work can be spread over threads; the result is identical to a
/// sequential run.
inline DescriptorBundle describe_multiscale(const Pyramid& pyr, const std::vector<Keypoint>& keypoints,
                                            const DescribeOptions& opt = {}) {
  const int levels = pyr.num_octaves() * pyr.num_layers();
  std::vector<std::vector<Descriptor>> per_level(static_cast<std::size_t>(levels));
  std::vector<std::vector<SkippedLevel>> skipped(static_cast<std::size_t>(levels));

  auto run = [&](int idx) {
    const int o = idx / pyr.num_layers();
    const int l = idx % pyr.num_layers();
    detail::describe_level(pyr.level(o, l), o, l, keypoints, pyr.num_octaves(), opt,
                           per_level[static_cast<std::size_t>(idx)],
                           skipped[static_cast<std::size_t>(idx)]);
  };

  const int workers = std::clamp(opt.threads, 1, std::max(1, levels));
  if (workers == 1) {
    for (int i = 0; i < levels; ++i) run(i);
  } else {
    std::vector<std::jthread> pool;
    for (int t = 0; t < workers; ++t) {
      pool.emplace_back([&, t] {
        for (int i = t; i < levels; i += workers) run(i);
      });
    }
  }

  DescriptorBundle bundle;
  bundle.keypoint_count = keypoints.size();
  for (int i = 0; i < levels; ++i) {
    auto& d = per_level[static_cast<std::size_t>(i)];
    auto& s = skipped[static_cast<std::size_t>(i)];
    bundle.descriptors.insert(bundle.descriptors.end(), d.begin(), d.end());
    bundle.skipped.insert(bundle.skipped.end(), s.begin(), s.end());
  }
  return bundle;
}

/// Little-endian records: u32 keypoint_id, u8 octave, u8 layer, f32
/// orientation, 128 x f32 components.
inline void write_descriptors_binary(const std::filesystem::path& path, const DescriptorBundle& bundle) {
  std::vector<std::uint8_t> out;
  out.reserve(bundle.size() * (4 + 2 + 4 + 4 * kDescriptorSize));
  auto put32 = [&](std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
  };
  auto put_f32 = [&](double v) {
    const float f = static_cast<float>(v);
    std::uint32_t u;
    std::memcpy(&u, &f, 4);
    put32(u);
  };
  for (const auto& d : bundle.descriptors) {
    put32(d.keypoint_id);
    out.push_back(static_cast<std::uint8_t>(d.octave));
    out.push_back(static_cast<std::uint8_t>(d.layer));
    put_f32(d.orientation.angle);
    for (double v : d.values) put_f32(v);
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorCode::IoFailure, "cannot create " + path.string());
  f.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
}

}  // namespace msreg
