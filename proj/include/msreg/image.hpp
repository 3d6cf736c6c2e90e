#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "msreg/error.hpp"

namespace msreg {

/// Single-band raster of real intensities, row-major.
class GrayImage {
 public:
  GrayImage() = default;

  GrayImage(int width, int height, double fill = 0.0)
      : width_(width), height_(height) {
    if (width < 1 || height < 1) {
      throw Error(ErrorCode::ImageTooSmall,
                  "image dimensions must be >= 1, got " + std::to_string(width) + "x" +
                      std::to_string(height));
    }
    data_.assign(static_cast<std::size_t>(width) * static_cast<std::size_t>(height), fill);
  }

  GrayImage(int width, int height, std::vector<double> data)
      : width_(width), height_(height), data_(std::move(data)) {
    if (width < 1 || height < 1 ||
        data_.size() != static_cast<std::size_t>(width) * static_cast<std::size_t>(height)) {
      throw Error(ErrorCode::DimensionMismatch, "data length does not match width*height");
    }
  }

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& at(int x, int y) { return data_[index(x, y)]; }
  double at(int x, int y) const { return data_[index(x, y)]; }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }

  bool same_shape(const GrayImage& other) const noexcept {
    return width_ == other.width_ && height_ == other.height_;
  }

  friend bool operator==(const GrayImage&, const GrayImage&) = default;

 private:
  std::size_t index(int x, int y) const noexcept {
    return static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) +
           static_cast<std::size_t>(x);
  }

  int width_ = 0;
  int height_ = 0;
  std::vector<double> data_;
};

/// Per-pixel horizontal and vertical derivatives of a GrayImage.
struct GradientField {
  GrayImage gx;
  GrayImage gy;

  int width() const noexcept { return gx.width(); }
  int height() const noexcept { return gx.height(); }
};

/// Square 2-D convolution kernel. Gaussian kernels also carry their 1-D
/// factor so convolve() can run two separable passes.
struct Kernel {
  int radius = 0;
  double sigma = 0.0;
  std::vector<double> weights;    // (2r+1)^2, row-major, offset (dx,dy) at [(dy+r)*(2r+1) + dx+r]
  std::vector<double> separable;  // 2r+1 entries, empty if not separable

  int side() const noexcept { return 2 * radius + 1; }
  double weight(int dx, int dy) const {
    return weights[static_cast<std::size_t>((dy + radius) * side() + (dx + radius))];
  }
};

namespace detail {

/// Whole-sample mirror reflection (-1 -> 0, n -> n-1), valid for any offset.
inline int reflect_index(int i, int n) noexcept {
  if (n == 1) return 0;
  const int period = 2 * n;
  int m = i % period;
  if (m < 0) m += period;
  return m < n ? m : period - 1 - m;
}

}  // namespace detail

/// Min-max rescale into [0, 1]; a constant image maps to all zeros.
inline GrayImage normalize(const GrayImage& img) {
  const auto values = img.data();
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  const double min_v = *lo;
  const double range = *hi - *lo;
  GrayImage out(img.width(), img.height(), 0.0);
  if (range <= 0.0) return out;
  auto dst = out.data();
  for (std::size_t i = 0; i < values.size(); ++i) dst[i] = (values[i] - min_v) / range;
  return out;
}

/// Discrete Gaussian of radius ceil(3*sigma), renormalized to unit sum.
inline Kernel gaussian_kernel(double sigma) {
  if (!(sigma > 0.0)) {
    throw Error(ErrorCode::NonPositiveSigma, "sigma must be > 0, got " + std::to_string(sigma));
  }
  Kernel k;
  k.sigma = sigma;
  k.radius = static_cast<int>(std::ceil(3.0 * sigma));
  const int side = k.side();

  std::vector<double> g1(static_cast<std::size_t>(side));
  double sum1 = 0.0;
  for (int i = -k.radius; i <= k.radius; ++i) {
    const double v = std::exp(-(i * i) / (2.0 * sigma * sigma));
    g1[static_cast<std::size_t>(i + k.radius)] = v;
    sum1 += v;
  }
  for (double& v : g1) v /= sum1;
  k.separable = g1;

  k.weights.resize(static_cast<std::size_t>(side * side));
  double sum2 = 0.0;
  for (int dy = -k.radius; dy <= k.radius; ++dy) {
    for (int dx = -k.radius; dx <= k.radius; ++dx) {
      const double v = std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
      k.weights[static_cast<std::size_t>((dy + k.radius) * side + dx + k.radius)] = v;
      sum2 += v;
    }
  }
  for (double& v : k.weights) v /= sum2;
  return k;
}

namespace detail {

inline GrayImage convolve_separable(const GrayImage& img, const std::vector<double>& taps,
                                    int radius) {
  const int w = img.width();
  const int h = img.height();
  GrayImage tmp(w, h);
  std::vector<double> line(static_cast<std::size_t>(std::max(w, h) + 2 * radius));

  for (int y = 0; y < h; ++y) {
    for (int i = -radius; i < w + radius; ++i) {
      line[static_cast<std::size_t>(i + radius)] = img.at(reflect_index(i, w), y);
    }
    for (int x = 0; x < w; ++x) {
      // out(x) = sum_o k(o) * in(x - o); taps are symmetric
      double acc = 0.0;
      for (int o = -radius; o <= radius; ++o) {
        acc += taps[static_cast<std::size_t>(o + radius)] *
               line[static_cast<std::size_t>(x - o + radius)];
      }
      tmp.at(x, y) = acc;
    }
  }

  GrayImage out(w, h);
  for (int x = 0; x < w; ++x) {
    for (int i = -radius; i < h + radius; ++i) {
      line[static_cast<std::size_t>(i + radius)] = tmp.at(x, reflect_index(i, h));
    }
    for (int y = 0; y < h; ++y) {
      double acc = 0.0;
      for (int o = -radius; o <= radius; ++o) {
        acc += taps[static_cast<std::size_t>(o + radius)] *
               line[static_cast<std::size_t>(y - o + radius)];
      }
      out.at(x, y) = acc;
    }
  }
  return out;
}

inline GrayImage convolve_direct(const GrayImage& img, const Kernel& k) {
  const int w = img.width();
  const int h = img.height();
  GrayImage out(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int dy = -k.radius; dy <= k.radius; ++dy) {
        const int sy = reflect_index(y - dy, h);
        for (int dx = -k.radius; dx <= k.radius; ++dx) {
          acc += k.weight(dx, dy) * img.at(reflect_index(x - dx, w), sy);
        }
      }
      out.at(x, y) = acc;
    }
  }
  return out;
}

}  // namespace detail

/// output(p) = sum_o k(o) * img(p - o), mirror-reflected borders.
inline GrayImage convolve(const GrayImage& img, const Kernel& k) {
  if (!k.separable.empty()) return detail::convolve_separable(img, k.separable, k.radius);
  return detail::convolve_direct(img, k);
}

inline GrayImage gaussian_blur(const GrayImage& img, double sigma) {
  return convolve(img, gaussian_kernel(sigma));
}

/// Gaussian pre-smoothing; sigma == 0 is the identity.
inline GrayImage denoise(const GrayImage& img, double sigma = 0.5) {
  if (sigma < 0.0) {
    throw Error(ErrorCode::NonPositiveSigma, "denoise sigma must be >= 0");
  }
  if (sigma == 0.0) return img;
  return gaussian_blur(img, sigma);
}

/// Central differences in the interior, one-sided differences on the border.
inline GradientField gradient(const GrayImage& img) {
  const int w = img.width();
  const int h = img.height();
  if (w < 3 || h < 3) {
    throw Error(ErrorCode::ImageTooSmall, "gradient needs at least 3x3 pixels");
  }
  GradientField g{GrayImage(w, h), GrayImage(w, h)};
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double dx;
      if (x == 0) {
        dx = img.at(1, y) - img.at(0, y);
      } else if (x == w - 1) {
        dx = img.at(w - 1, y) - img.at(w - 2, y);
      } else {
        dx = (img.at(x + 1, y) - img.at(x - 1, y)) / 2.0;
      }
      double dy;
      if (y == 0) {
        dy = img.at(x, 1) - img.at(x, 0);
      } else if (y == h - 1) {
        dy = img.at(x, h - 1) - img.at(x, h - 2);
      } else {
        dy = (img.at(x, y + 1) - img.at(x, y - 1)) / 2.0;
      }
      g.gx.at(x, y) = dx;
      g.gy.at(x, y) = dy;
    }
  }
  return g;
}

/// Bilinear sample at real coordinates; returns `outside` beyond [0,w-1]x[0,h-1].
inline double sample_bilinear(const GrayImage& img, double x, double y, double outside = 0.0) {
  const int w = img.width();
  const int h = img.height();
  if (!(x >= 0.0 && y >= 0.0 && x <= w - 1 && y <= h - 1)) return outside;
  const int x0 = static_cast<int>(x);
  const int y0 = static_cast<int>(y);
  const double fx = x - x0;
  const double fy = y - y0;
  const int x1 = fx > 0.0 ? x0 + 1 : x0;
  const int y1 = fy > 0.0 ? y0 + 1 : y0;
  const double top = img.at(x0, y0) * (1.0 - fx) + img.at(x1, y0) * fx;
  const double bottom = img.at(x0, y1) * (1.0 - fx) + img.at(x1, y1) * fx;
  return top * (1.0 - fy) + bottom * fy;
}

inline double image_mean(const GrayImage& img) {
  double s = 0.0;
  for (double v : img.data()) s += v;
  return s / static_cast<double>(img.size());
}

inline double image_variance(const GrayImage& img) {
  const double m = image_mean(img);
  double s = 0.0;
  for (double v : img.data()) s += (v - m) * (v - m);
  return s / static_cast<double>(img.size());
}

}  // namespace msreg
