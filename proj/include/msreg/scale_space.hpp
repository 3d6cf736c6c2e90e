#pragma once

#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include "msreg/error.hpp"
#include "msreg/image.hpp"
#include "msreg/image_io.hpp"

namespace msreg {

struct Point2 {
  double x = 0.0;
  double y = 0.0;

  friend bool operator==(const Point2&, const Point2&) = default;
};

struct PyramidConfig {
  int num_octaves = 3;
  int num_layers = 4;
  double base_sigma = 1.6;
  /// Per-layer sigma multiplier; <= 0 selects 2^(1/(num_layers-1)).
  double sigma_ratio = 0.0;
  /// Anti-alias blur applied before taking every other pixel.
  double downsample_sigma = 1.0;

  double effective_ratio() const {
    if (sigma_ratio > 0.0) return sigma_ratio;
    return num_layers > 1 ? std::pow(2.0, 1.0 / (num_layers - 1)) : 2.0;
  }

  void validate() const {
    if (num_octaves < 1 || num_layers < 1 || !(base_sigma > 0.0) || !(effective_ratio() > 1.0)) {
      throw Error(ErrorCode::InvalidConfig,
                  "pyramid needs octaves >= 1, layers >= 1, base_sigma > 0, sigma_ratio > 1");
    }
  }
};

struct PyramidLayer {
  GrayImage image;
  double sigma = 0.0;  // in the octave's own pixel units
};

struct Octave {
  int downsample_factor = 1;
  std::vector<PyramidLayer> layers;
};

/// Gaussian scale space: octaves by 2x decimation, layers by progressive blur.
struct Pyramid {
  std::vector<Octave> octaves;

  int num_octaves() const noexcept { return static_cast<int>(octaves.size()); }
  int num_layers() const noexcept {
    return octaves.empty() ? 0 : static_cast<int>(octaves.front().layers.size());
  }
  const GrayImage& level(int octave, int layer) const {
    return octaves.at(static_cast<std::size_t>(octave)).layers.at(static_cast<std::size_t>(layer)).image;
  }
};

/// Smallest base dimension that still leaves every octave at least 16 px wide.
inline int min_pyramid_extent(int num_octaves) { return (1 << (num_octaves - 1)) * 16; }

inline GrayImage downsample2(const GrayImage& img, double antialias_sigma) {
  const GrayImage smooth = antialias_sigma > 0.0 ? gaussian_blur(img, antialias_sigma) : img;
  const int w = (img.width() + 1) / 2;
  const int h = (img.height() + 1) / 2;
  GrayImage out(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) out.at(x, y) = smooth.at(2 * x, 2 * y);
  }
  return out;
}

inline Pyramid build_pyramid(const GrayImage& img, const PyramidConfig& cfg = {}) {
  cfg.validate();
  const int required = min_pyramid_extent(cfg.num_octaves);
  if (img.width() < required || img.height() < required) {
    throw Error(ErrorCode::ImageTooSmallForOctaves,
                "need " + std::to_string(required) + "px per side, got " +
                    std::to_string(img.width()) + "x" + std::to_string(img.height()));
  }

  const double ratio = cfg.effective_ratio();
  std::vector<double> sigmas(static_cast<std::size_t>(cfg.num_layers));
  for (int j = 0; j < cfg.num_layers; ++j) sigmas[static_cast<std::size_t>(j)] = cfg.base_sigma * std::pow(ratio, j);

  Pyramid pyr;
  pyr.octaves.resize(static_cast<std::size_t>(cfg.num_octaves));
  GrayImage base = gaussian_blur(img, cfg.base_sigma);
  for (int o = 0; o < cfg.num_octaves; ++o) {
    if (o > 0) base = downsample2(base, cfg.downsample_sigma);
    Octave& oct = pyr.octaves[static_cast<std::size_t>(o)];
    oct.downsample_factor = 1 << o;
    oct.layers.reserve(sigmas.size());
    oct.layers.push_back({base, sigmas[0]});
    for (std::size_t j = 1; j < sigmas.size(); ++j) {
      const double inc = std::sqrt(sigmas[j] * sigmas[j] - sigmas[0] * sigmas[0]);
      oct.layers.push_back({gaussian_blur(base, inc), sigmas[j]});
    }
  }
  return pyr;
}

/// Base-image coordinates to the pixel grid of `octave`.
inline Point2 map_to_level(Point2 pt, int octave, int num_octaves) {
  if (octave < 0 || octave >= num_octaves) {
    throw Error(ErrorCode::OctaveOutOfRange,
                "octave " + std::to_string(octave) + " not in [0, " + std::to_string(num_octaves) + ")");
  }
  const double f = std::ldexp(1.0, octave);
  return {pt.x / f, pt.y / f};
}

inline Point2 map_to_level(Point2 pt, int octave, const Pyramid& pyr) {
  return map_to_level(pt, octave, pyr.num_octaves());
}

inline Point2 map_from_level(Point2 pt, int octave) {
  const double f = std::ldexp(1.0, octave);
  return {pt.x * f, pt.y * f};
}

/// Writes pyr_o<octave>_l<layer>.pgm for every level into `dir`.
inline void dump_pyramid(const Pyramid& pyr, const std::filesystem::path& dir) {
  for (int o = 0; o < pyr.num_octaves(); ++o) {
    for (int l = 0; l < pyr.num_layers(); ++l) {
      const auto name = "pyr_o" + std::to_string(o) + "_l" + std::to_string(l) + ".pgm";
      write_pgm(dir / name, to_display(pyr.level(o, l)));
    }
  }
}

}  // namespace msreg
