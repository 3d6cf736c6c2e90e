// msreg: register two images, or benchmark the pipeline on synthetic pairs.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "msreg/msreg.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitIo = 1;
constexpr int kExitFewKeypoints = 2;
constexpr int kExitFewMatches = 3;
constexpr int kExitDegenerate = 4;

int exit_code_for(msreg::ErrorCode code) {
  switch (code) {
    case msreg::ErrorCode::TooFewKeypoints: return kExitFewKeypoints;
    case msreg::ErrorCode::InsufficientMatches:
    case msreg::ErrorCode::InsufficientPoints:
    case msreg::ErrorCode::EmptyBundle: return kExitFewMatches;
    case msreg::ErrorCode::DegenerateConfiguration:
    case msreg::ErrorCode::SingularTransform: return kExitDegenerate;
    default: return kExitIo;
  }
}

struct RegisterArgs {
  std::string fixed;
  std::string moving;
  int fixed_band = 0;
  int moving_band = 0;
  std::string out;
  std::string model = "affine";
  int octaves = 3;
  int layers = 4;
  int max_points = 1000;
  int min_points = 500;
  int lnms_radius = 5;
  int window = 40;
  double match_threshold = 0.85;
  std::uint64_t seed = 0;
  int threads = 1;
  bool dump_pyramid = false;
  bool dump_keypoints = false;
  bool dump_descriptors = false;
};

struct BenchArgs {
  std::string source;
  int size = 512;
  int trials = 20;
  double rotation_range = 30.0;
  std::string scale_range = "0.7:1.4";
  double translation_range = 20.0;
  std::string intensity = "identity";
  double gamma = 0.5;
  double noise = 0.0;
  std::uint64_t seed = 0;
  std::string model = "similarity";
  int moving_size = 0;
};

msreg::PipelineConfig make_config(const std::string& model, int octaves, int layers, int max_points,
                                  int min_points, int lnms_radius, int window, double threshold,
                                  int threads) {
  msreg::PipelineConfig cfg;
  const auto choice = msreg::parse_model_choice(model);
  if (!choice) throw CLI::ValidationError("--model", "unknown model '" + model + "'");
  cfg.model = *choice;
  cfg.pyramid.num_octaves = octaves;
  cfg.pyramid.num_layers = layers;
  cfg.detector.max_points = max_points;
  cfg.detector.min_points = std::min(min_points, max_points);
  cfg.detector.lnms_radius = lnms_radius;
  cfg.describe.window = window;
  cfg.describe.threads = threads;
  cfg.matching.threshold = threshold;
  return cfg;
}

void write_png_display(const fs::path& p, const msreg::GrayImage& img) {
  msreg::write_png(p, msreg::to_display(img), 8);
}

// Re-derive the per-image intermediates for optional dumps.
void dump_intermediates(const RegisterArgs& a, const msreg::PipelineConfig& cfg, const msreg::GrayImage& img,
                        const std::vector<msreg::Keypoint>& kps, const std::string& tag) {
  const fs::path out(a.out);
  if (a.dump_keypoints) msreg::write_keypoints_csv(out / (tag + "_keypoints.csv"), kps);
  if (!a.dump_pyramid && !a.dump_descriptors) return;
  const msreg::GrayImage prepared = msreg::detail::preprocess(img, cfg.denoise_sigma);
  const msreg::Pyramid pyr = msreg::build_pyramid(prepared, cfg.pyramid);
  if (a.dump_pyramid) {
    const fs::path dir = out / (tag + "_pyramid");
    fs::create_directories(dir);
    msreg::dump_pyramid(pyr, dir);
  }
  if (a.dump_descriptors) {
    msreg::write_descriptors_binary(out / (tag + "_descriptors.bin"),
                                    msreg::describe_multiscale(pyr, kps, cfg.describe));
  }
}

json stage_report(const msreg::RegistrationResult& r) {
  json j;
  j["keypoints"] = {{"fixed", r.fixed_keypoints.size()}, {"moving", r.moving_keypoints.size()}};
  j["descriptors"] = {{"fixed", r.fixed_descriptors}, {"moving", r.moving_descriptors}};
  j["lnms_radius"] = {{"fixed", r.lnms_radii.first}, {"moving", r.lnms_radii.second}};
  j["initial_matches"] = r.initial_matches.size();
  j["filtered_matches"] = r.filtered_matches.size();
  return j;
}

int run_register(const RegisterArgs& a) {
  const msreg::PipelineConfig cfg = make_config(a.model, a.octaves, a.layers, a.max_points, a.min_points,
                                                a.lnms_radius, a.window, a.match_threshold, a.threads);
  const msreg::GrayImage fixed = msreg::load_image(a.fixed, a.fixed_band);
  const msreg::GrayImage moving = msreg::load_image(a.moving, a.moving_band);
  const fs::path out(a.out);
  fs::create_directories(out);

  json report;
  report["fixed"] = {{"path", a.fixed}, {"band", a.fixed_band}, {"width", fixed.width()}, {"height", fixed.height()}};
  report["moving"] = {
      {"path", a.moving}, {"band", a.moving_band}, {"width", moving.width()}, {"height", moving.height()}};
  report["seed"] = a.seed;

  msreg::RegistrationResult res;
  try {
    res = msreg::register_images(fixed, moving, cfg);
  } catch (const msreg::Error& e) {
    report["status"] = msreg::to_string(e.code());
    report["message"] = e.what();
    std::ofstream(out / "report.json") << report.dump(2) << '\n';
    throw;
  }

  msreg::write_transform(out / "transform.txt", res.transform);
  msreg::write_matches_csv(out / "matches.csv", res.initial_matches, res.kept, res.fixed_keypoints,
                           res.moving_keypoints);
  const msreg::GrayImage fixed_n = msreg::normalize(fixed);
  const msreg::GrayImage warped =
      msreg::warp(msreg::normalize(moving), res.transform, fixed.width(), fixed.height());
  write_png_display(out / "warped.png", warped);
  const int tile = std::max(8, std::min(fixed.width(), fixed.height()) / 8);
  write_png_display(out / "checkerboard.png", msreg::render_checkerboard(fixed_n, warped, tile));
  write_png_display(out / "fusion.png", msreg::render_fusion(fixed_n, warped, 0.5));
  dump_intermediates(a, cfg, fixed, res.fixed_keypoints, "fixed");
  dump_intermediates(a, cfg, moving, res.moving_keypoints, "moving");

  report["status"] = "ok";
  report["model"] = msreg::to_string(res.transform.kind);
  report["rmse"] = res.transform.rmse;
  report["stages"] = stage_report(res);
  json t = json::object();
  for (const auto& [k, v] : res.timings_ms) t[k] = v;
  report["timings_ms"] = t;
  std::ofstream(out / "report.json") << report.dump(2) << '\n';

  std::printf("%s transform, %zu/%zu matches kept, rmse %.3f px\n", msreg::to_string(res.transform.kind),
              res.filtered_matches.size(), res.initial_matches.size(), res.transform.rmse);
  return kExitOk;
}

std::pair<double, double> parse_range(const std::string& s) {
  const auto colon = s.find(':');
  try {
    if (colon == std::string::npos) {
      const double v = std::stod(s);
      return {v, v};
    }
    const double lo = std::stod(s.substr(0, colon));
    const double hi = std::stod(s.substr(colon + 1));
    if (lo > 0.0 && hi >= lo) return {lo, hi};
  } catch (const std::exception&) {
  }
  throw CLI::ValidationError("--scale-range", "expected LO:HI with 0 < LO <= HI, got '" + s + "'");
}

msreg::IntensityMode parse_intensity(const std::string& s, double gamma) {
  if (s == "identity") return msreg::IntensityMode::identity();
  if (s == "invert") return msreg::IntensityMode::invert();
  if (s == "gamma") return msreg::IntensityMode::gamma(gamma);
  if (s == "affine") return msreg::IntensityMode::affine(0.6, 0.2);
  throw CLI::ValidationError("--intensity", "unknown mode '" + s + "'");
}

int run_bench(const BenchArgs& a) {
  const auto [scale_lo, scale_hi] = parse_range(a.scale_range);
  const msreg::IntensityMode intensity = parse_intensity(a.intensity, a.gamma);
  msreg::PipelineConfig cfg = make_config(a.model, 3, 4, 1000, 500, 5, 40, 0.85, 1);

  std::mt19937_64 rng(a.seed);
  const msreg::GrayImage source = a.source.empty() ? msreg::make_texture(a.size, a.size, rng())
                                                   : msreg::normalize(msreg::load_image(a.source));
  const int mw = a.moving_size > 0 ? a.moving_size : source.width();
  const int mh = a.moving_size > 0 ? a.moving_size : source.height();

  std::printf("# synthetic ground truth: moving = %s(source warped by a random similarity) + N(0, %g^2)\n",
              a.intensity.c_str(), a.noise);
  std::printf("# source %s (%dx%d), moving %dx%d, seed %llu\n", a.source.empty() ? "<texture>" : a.source.c_str(),
              source.width(), source.height(), mw, mh, static_cast<unsigned long long>(a.seed));
  std::printf("%5s %8s %7s %8s %8s %9s %9s %11s %7s %s\n", "trial", "rot_deg", "scale", "tx", "ty", "n_filt",
              "n_correct", "corner_rmse", "success", "status");

  std::uniform_real_distribution<double> rot(-a.rotation_range, a.rotation_range);
  std::uniform_real_distribution<double> scale(scale_lo, scale_hi);
  std::uniform_real_distribution<double> shift(-a.translation_range, a.translation_range);
  int successes = 0;
  double rmse_sum = 0.0;
  for (int t = 0; t < a.trials; ++t) {
    const double deg = rot(rng);
    const double s = scale(rng);
    const double tx = shift(rng);
    const double ty = shift(rng);
    const std::uint64_t noise_seed = rng();
    const msreg::TransformModel gt = msreg::centered_similarity(deg * std::numbers::pi / 180.0, s, tx, ty, mw, mh,
                                                                source.width(), source.height());
    const msreg::SyntheticPair pair = msreg::synthetic_pair(source, gt, intensity, a.noise, noise_seed, mw, mh);
    std::string status = "ok";
    msreg::EvaluationReport ev;
    try {
      const msreg::RegistrationResult res = msreg::register_images(pair.fixed, pair.moving, cfg);
      ev = msreg::evaluate(res, gt, mw, mh);
    } catch (const msreg::Error& e) {
      status = msreg::to_string(e.code());
    }
    if (ev.success) {
      ++successes;
      rmse_sum += ev.corner_rmse;
    }
    std::printf("%5d %8.2f %7.3f %8.2f %8.2f %9zu %9zu %11.3f %7s %s\n", t, deg, s, tx, ty, ev.n_filtered,
                ev.n_correct, ev.success ? ev.corner_rmse : NAN, ev.success ? "yes" : "no", status.c_str());
  }
  std::printf("%5s success %d/%d (%.1f%%), mean corner_rmse %.3f px\n", "all", successes, a.trials,
              a.trials > 0 ? 100.0 * successes / a.trials : 0.0, successes > 0 ? rmse_sum / successes : NAN);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-source image registration"};
  app.require_subcommand(1);

  RegisterArgs ra;
  auto* reg = app.add_subcommand("register", "Register a moving image onto a fixed image");
  reg->add_option("--fixed", ra.fixed, "Fixed (reference) image")->required()->check(CLI::ExistingFile);
  reg->add_option("--moving", ra.moving, "Moving image")->required()->check(CLI::ExistingFile);
  reg->add_option("--fixed-band", ra.fixed_band, "Band index of the fixed image")->check(CLI::NonNegativeNumber);
  reg->add_option("--moving-band", ra.moving_band, "Band index of the moving image")->check(CLI::NonNegativeNumber);
  reg->add_option("--out", ra.out, "Output directory")->required();
  reg->add_option("--model", ra.model, "similarity|affine|projective|auto")->capture_default_str();
  reg->add_option("--octaves", ra.octaves)->capture_default_str()->check(CLI::PositiveNumber);
  reg->add_option("--layers", ra.layers)->capture_default_str()->check(CLI::PositiveNumber);
  reg->add_option("--max-points", ra.max_points)->capture_default_str()->check(CLI::PositiveNumber);
  reg->add_option("--min-points", ra.min_points)->capture_default_str()->check(CLI::NonNegativeNumber);
  reg->add_option("--lnms-radius", ra.lnms_radius)->capture_default_str();
  reg->add_option("--window", ra.window, "Descriptor window side")->capture_default_str();
  reg->add_option("--match-threshold", ra.match_threshold)->capture_default_str();
  reg->add_option("--seed", ra.seed, "Recorded in report.json; registration itself is deterministic");
  reg->add_option("--threads", ra.threads, "Descriptor worker threads")->capture_default_str()
      ->check(CLI::PositiveNumber);
  reg->add_flag("--dump-pyramid", ra.dump_pyramid, "Write every pyramid level as PGM");
  reg->add_flag("--dump-keypoints", ra.dump_keypoints, "Write keypoints as CSV");
  reg->add_flag("--dump-descriptors", ra.dump_descriptors, "Write descriptors as binary records");

  BenchArgs ba;
  auto* bench = app.add_subcommand("bench", "Evaluate on synthetic pairs with known ground truth");
  bench->add_option("--source", ba.source, "Source image (default: generated texture)")->check(CLI::ExistingFile);
  bench->add_option("--size", ba.size, "Side of the generated texture")->capture_default_str();
  bench->add_option("--trials", ba.trials)->capture_default_str()->check(CLI::NonNegativeNumber);
  bench->add_option("--rotation-range", ba.rotation_range, "Max |rotation| in degrees")->capture_default_str();
  bench->add_option("--scale-range", ba.scale_range, "LO:HI")->capture_default_str();
  bench->add_option("--translation-range", ba.translation_range, "Max |shift| in pixels")->capture_default_str();
  bench->add_option("--intensity", ba.intensity, "identity|invert|gamma|affine")->capture_default_str();
  bench->add_option("--gamma", ba.gamma, "Exponent for --intensity gamma")->capture_default_str();
  bench->add_option("--noise", ba.noise, "Gaussian noise sigma")->capture_default_str();
  bench->add_option("--seed", ba.seed)->capture_default_str();
  bench->add_option("--model", ba.model)->capture_default_str();
  bench->add_option("--moving-size", ba.moving_size, "Side of the moving image (default: source size)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitIo;
  }

  try {
    if (*reg) return run_register(ra);
    return run_bench(ba);
  } catch (const msreg::Error& e) {
    std::cerr << "msreg: " << e.what() << '\n';
    return exit_code_for(e.code());
  } catch (const CLI::Error& e) {
    std::cerr << "msreg: " << e.what() << '\n';
    return kExitIo;
  } catch (const std::exception& e) {
    std::cerr << "msreg: " << e.what() << '\n';
    return kExitIo;
  }
}
