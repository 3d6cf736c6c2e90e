#pragma once

#include <chrono>
#include <future>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "msreg/error.hpp"
#include "msreg/harris.hpp"
#include "msreg/image.hpp"
#include "msreg/matching.hpp"
#include "msreg/piifd.hpp"
#include "msreg/scale_space.hpp"
#include "msreg/transform.hpp"

namespace msreg {

enum class ModelChoice { Similarity, Affine, Projective, Auto };

inline std::optional<ModelChoice> parse_model_choice(const std::string& s) {
  if (s == "auto") return ModelChoice::Auto;
  if (const auto k = parse_transform_kind(s)) return static_cast<ModelChoice>(*k);
  return std::nullopt;
}

struct PipelineConfig {
  DetectorConfig detector;
  PyramidConfig pyramid;
  DescribeOptions describe;
  MatchConfig matching;
  MismatchConfig mismatch;
  ModelChoice model = ModelChoice::Affine;
  double denoise_sigma = 0.5;
  int fixed_band = 0;
  int moving_band = 0;
  /// Run the fixed and moving feature branches concurrently.
  bool concurrent_branches = false;

  void validate() const {
    detector.validate();
    pyramid.validate();
    if (describe.window < 4 || describe.window % 4 != 0) {
      throw Error(ErrorCode::InvalidConfig, "descriptor window must be a positive multiple of 4");
    }
    if (denoise_sigma < 0.0) throw Error(ErrorCode::InvalidConfig, "denoise sigma must be >= 0");
  }
};

/// Per-image products of the detection and description stages.
struct FeatureSet {
  GrayImage prepared;
  std::vector<Keypoint> keypoints;
  DescriptorBundle bundle;
  double detect_ms = 0.0;
  double pyramid_ms = 0.0;
  double describe_ms = 0.0;
};

struct RegistrationResult {
  TransformModel transform;
  MatchSet initial_matches;
  MatchSet filtered_matches;
  std::vector<bool> kept;  // parallel to initial_matches
  std::vector<Keypoint> fixed_keypoints;
  std::vector<Keypoint> moving_keypoints;
  std::size_t fixed_descriptors = 0;
  std::size_t moving_descriptors = 0;
  std::pair<int, int> lnms_radii{5, 5};
  std::map<std::string, double> timings_ms;

  std::vector<PointPair> filtered_pairs() const {
    std::vector<PointPair> out;
    out.reserve(filtered_matches.size());
    for (const auto& m : filtered_matches.matches) {
      const Keypoint& f = fixed_keypoints.at(m.fixed_kp);
      const Keypoint& v = moving_keypoints.at(m.moving_kp);
      out.push_back({{f.x, f.y}, {v.x, v.y}});
    }
    return out;
  }
};

namespace detail {

inline double elapsed_ms(std::chrono::steady_clock::time_point since) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - since).count();
}

inline GrayImage preprocess(const GrayImage& img, double denoise_sigma) {
  return denoise(normalize(img), denoise_sigma);
}

inline FeatureSet extract_features(const GrayImage& raw, const PipelineConfig& cfg, int lnms_radius) {
  using clock = std::chrono::steady_clock;
  FeatureSet fs;
  auto t0 = clock::now();
  fs.prepared = preprocess(raw, cfg.denoise_sigma);
  DetectorConfig det = cfg.detector;
  det.lnms_radius = lnms_radius;
  fs.keypoints = detect(fs.prepared, det);
  fs.detect_ms = elapsed_ms(t0);

  t0 = clock::now();
  const Pyramid pyr = build_pyramid(fs.prepared, cfg.pyramid);
  fs.pyramid_ms = elapsed_ms(t0);

  t0 = clock::now();
  fs.bundle = describe_multiscale(pyr, fs.keypoints, cfg.describe);
  fs.describe_ms = elapsed_ms(t0);
  return fs;
}

inline TransformModel fit_model(const std::vector<PointPair>& pairs, ModelChoice model) {
  if (model == ModelChoice::Auto) return estimate_auto(pairs);
  const auto kind = static_cast<TransformKind>(model);
  if (static_cast<int>(pairs.size()) < min_points(kind)) {
    throw Error(ErrorCode::InsufficientMatches,
                std::to_string(pairs.size()) + " filtered matches cannot determine a " + to_string(kind) +
                    " transform");
  }
  return estimate(pairs, kind);
}

}  // namespace detail

/// Full registration of `moving` onto `fixed`:
/// normalize, denoise, Harris + LNMS, scale space, multi-scale descriptors,
/// BBF matching, mismatch removal, least-squares model fit.
inline RegistrationResult register_images(const GrayImage& fixed, const GrayImage& moving,
                                          const PipelineConfig& cfg = {}) {
  using clock = std::chrono::steady_clock;
  cfg.validate();
  const auto total_start = clock::now();

  RegistrationResult res;
  res.lnms_radii = paired_lnms_radii(cfg.detector.lnms_radius, {fixed.width(), fixed.height()},
                                     {moving.width(), moving.height()});

  FeatureSet fx;
  FeatureSet mv;
  if (cfg.concurrent_branches) {
    auto fut = std::async(std::launch::async, [&] {
      return detail::extract_features(moving, cfg, res.lnms_radii.second);
    });
    std::optional<Error> fixed_error;
    try {
      fx = detail::extract_features(fixed, cfg, res.lnms_radii.first);
    } catch (const Error& e) {
      fixed_error = e;
    }
    // always join before reporting so a failure is attributed deterministically
    try {
      mv = fut.get();
    } catch (const Error&) {
      if (!fixed_error) throw;
    }
    if (fixed_error) throw *fixed_error;
  } else {
    fx = detail::extract_features(fixed, cfg, res.lnms_radii.first);
    mv = detail::extract_features(moving, cfg, res.lnms_radii.second);
  }

  res.timings_ms["detect"] = fx.detect_ms + mv.detect_ms;
  res.timings_ms["pyramid"] = fx.pyramid_ms + mv.pyramid_ms;
  res.timings_ms["describe"] = fx.describe_ms + mv.describe_ms;
  res.fixed_keypoints = std::move(fx.keypoints);
  res.moving_keypoints = std::move(mv.keypoints);
  res.fixed_descriptors = fx.bundle.size();
  res.moving_descriptors = mv.bundle.size();

  auto t0 = clock::now();
  if (fx.bundle.empty() || mv.bundle.empty()) {
    throw Error(ErrorCode::InsufficientMatches, "no descriptors could be computed");
  }
  res.initial_matches = bbf_match(fx.bundle, mv.bundle, cfg.matching);
  res.timings_ms["match"] = detail::elapsed_ms(t0);

  t0 = clock::now();
  const MismatchReport rep =
      mismatch_mask(res.initial_matches, res.fixed_keypoints, res.moving_keypoints, cfg.mismatch);
  res.kept = rep.kept;
  if (res.initial_matches.empty()) throw Error(ErrorCode::InsufficientMatches, "no initial matches");
  res.filtered_matches = apply_mask(res.initial_matches, rep, cfg.mismatch);
  res.timings_ms["filter"] = detail::elapsed_ms(t0);

  t0 = clock::now();
  res.transform = detail::fit_model(res.filtered_pairs(), cfg.model);
  res.timings_ms["estimate"] = detail::elapsed_ms(t0);
  res.timings_ms["total"] = detail::elapsed_ms(total_start);
  return res;
}

/// Tiles alternate between fixed (even tile parity) and warped.
inline GrayImage render_checkerboard(const GrayImage& fixed, const GrayImage& warped, int tile) {
  if (!fixed.same_shape(warped)) throw Error(ErrorCode::DimensionMismatch, "checkerboard inputs differ in size");
  if (tile < 1) throw Error(ErrorCode::InvalidConfig, "tile must be >= 1");
  GrayImage out(fixed.width(), fixed.height());
  for (int y = 0; y < fixed.height(); ++y) {
    for (int x = 0; x < fixed.width(); ++x) {
      out.at(x, y) = (x / tile + y / tile) % 2 == 0 ? fixed.at(x, y) : warped.at(x, y);
    }
  }
  return out;
}

/// alpha * fixed + (1 - alpha) * warped.
inline GrayImage render_fusion(const GrayImage& fixed, const GrayImage& warped, double alpha) {
  if (!fixed.same_shape(warped)) throw Error(ErrorCode::DimensionMismatch, "fusion inputs differ in size");
  if (alpha < 0.0 || alpha > 1.0) throw Error(ErrorCode::InvalidConfig, "alpha must lie in [0, 1]");
  GrayImage out(fixed.width(), fixed.height());
  auto f = fixed.data();
  auto w = warped.data();
  auto o = out.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = alpha * f[i] + (1.0 - alpha) * w[i];
  return out;
}

}  // namespace msreg
