#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <numbers>
#include <string>
#include <vector>

#include "msreg/error.hpp"
#include "msreg/harris.hpp"
#include "msreg/kdtree.hpp"
#include "msreg/piifd.hpp"

namespace msreg {

struct Level {
  int octave = 0;
  int layer = 0;

  friend bool operator==(const Level&, const Level&) = default;
};

struct Match {
  std::uint32_t fixed_kp = 0;
  std::uint32_t moving_kp = 0;
  double similarity = 0.0;
  Level fixed_level;
  Level moving_level;
  // main orientations of the winning descriptor pair
  double fixed_angle = 0.0;
  double moving_angle = 0.0;

  friend bool operator==(const Match&, const Match&) = default;
};

enum class MatchStage { Initial, Filtered };

struct MatchSet {
  std::vector<Match> matches;
  MatchStage stage = MatchStage::Initial;

  std::size_t size() const noexcept { return matches.size(); }
  bool empty() const noexcept { return matches.empty(); }
};

struct MatchConfig {
  std::size_t max_checks = 200;
  double threshold = 0.85;
};

/// Unit vectors: |a-b|^2 = 2 - 2cos, so the nearest neighbor is the most similar.
inline double cosine_from_distance_sq(double d2) { return 1.0 - d2 / 2.0; }

/// Best-bin-first matching of every fixed descriptor against all moving
/// descriptors. Each fixed keypoint keeps its most similar partner over all
/// its levels; a moving keypoint claimed twice goes to the stronger match.
inline MatchSet bbf_match(const DescriptorBundle& fixed, const DescriptorBundle& moving,
                          const MatchConfig& cfg = {}) {
  if (fixed.empty() || moving.empty()) {
    throw Error(ErrorCode::EmptyBundle, "cannot match an empty descriptor bundle");
  }
  std::vector<const DescriptorVector*> pts;
  pts.reserve(moving.size());
  for (const auto& d : moving.descriptors) pts.push_back(&d.values);
  const KdTree<kDescriptorSize> tree(pts);

  std::map<std::uint32_t, Match> best_per_fixed;
  for (const auto& fd : fixed.descriptors) {
    const auto nn = tree.nearest(fd.values, cfg.max_checks);
    if (nn.index >= moving.size()) continue;
    const Descriptor& md = moving.descriptors[nn.index];
    const double sim = cosine_from_distance_sq(nn.distance_sq);
    auto it = best_per_fixed.find(fd.keypoint_id);
    if (it == best_per_fixed.end() || sim > it->second.similarity) {
      best_per_fixed[fd.keypoint_id] =
          Match{fd.keypoint_id, md.keypoint_id, sim, {fd.octave, fd.layer},
                {md.octave, md.layer}, fd.orientation.angle, md.orientation.angle};
    }
  }

  std::map<std::uint32_t, Match> best_per_moving;
  for (const auto& [fid, m] : best_per_fixed) {
    if (m.similarity < cfg.threshold) continue;
    auto it = best_per_moving.find(m.moving_kp);
    if (it == best_per_moving.end() || m.similarity > it->second.similarity) {
      best_per_moving[m.moving_kp] = m;
    }
  }

  MatchSet out;
  for (const auto& [mid, m] : best_per_moving) out.matches.push_back(m);
  std::sort(out.matches.begin(), out.matches.end(),
            [](const Match& a, const Match& b) { return a.fixed_kp < b.fixed_kp; });
  return out;
}

struct MismatchConfig {
  double angle_tol = std::numbers::pi / 18.0;
  double ratio_tol = 0.05;
  int histogram_bins = 36;
  double min_pair_distance = 5.0;
  double score_floor = 0.7;
  std::size_t min_matches = 3;
};

struct MismatchReport {
  std::vector<bool> kept;          // parallel to the input matches
  double orientation_mode = 0.0;   // radians in [0, pi)
  double median_ratio = 0.0;       // fixed / moving distance ratio
  std::size_t after_orientation = 0;
  std::size_t after_spatial = 0;
};

namespace detail {

/// Distance between two angles on the circle of period pi.
inline double axial_distance(double a, double b) {
  const double d = wrap_pi(a - b);
  return std::min(d, std::numbers::pi - d);
}

inline double orientation_mode(const std::vector<double>& deltas, int bins) {
  constexpr double pi = std::numbers::pi;
  std::vector<int> hist(static_cast<std::size_t>(bins), 0);
  auto bin_of = [&](double a) {
    return std::min(bins - 1, static_cast<int>(a / pi * bins));
  };
  for (double d : deltas) ++hist[static_cast<std::size_t>(bin_of(d))];
  const int peak = static_cast<int>(std::max_element(hist.begin(), hist.end()) - hist.begin());

  // refine with the axial mean of samples in the peak bin and its neighbors
  double sx = 0.0;
  double sy = 0.0;
  for (double d : deltas) {
    const int b = bin_of(d);
    const int dist = std::min((b - peak + bins) % bins, (peak - b + bins) % bins);
    if (dist <= 1) {
      sx += std::cos(2.0 * d);
      sy += std::sin(2.0 * d);
    }
  }
  return wrap_pi(0.5 * std::atan2(sy, sx));
}

}  // namespace detail

/// Orientation-consistency then spatial-consistency filtering. The kept
/// mask is returned even when fewer than min_matches survive.
inline MismatchReport mismatch_mask(const MatchSet& ms, const std::vector<Keypoint>& fixed_kps,
                                    const std::vector<Keypoint>& moving_kps,
                                    const MismatchConfig& cfg = {}) {
  const std::size_t n = ms.size();
  MismatchReport rep;
  rep.kept.assign(n, false);
  if (n == 0) return rep;

  // Stage 1: main-orientation consistency
  std::vector<double> deltas(n);
  for (std::size_t i = 0; i < n; ++i) {
    deltas[i] = wrap_pi(ms.matches[i].fixed_angle - ms.matches[i].moving_angle);
  }
  rep.orientation_mode = detail::orientation_mode(deltas, cfg.histogram_bins);
  std::vector<std::size_t> active;
  for (std::size_t i = 0; i < n; ++i) {
    if (detail::axial_distance(deltas[i], rep.orientation_mode) <= cfg.angle_tol) {
      active.push_back(i);
    }
  }
  rep.after_orientation = active.size();

  // Stage 2: pairwise distance-ratio consistency
  const std::size_t m = active.size();
  constexpr float kInvalid = std::numeric_limits<float>::quiet_NaN();
  std::vector<float> ratio(m * m, kInvalid);
  for (std::size_t a = 0; a < m; ++a) {
    const Match& ma = ms.matches[active[a]];
    const Keypoint& fa = fixed_kps.at(ma.fixed_kp);
    const Keypoint& va = moving_kps.at(ma.moving_kp);
    for (std::size_t b = a + 1; b < m; ++b) {
      const Match& mb = ms.matches[active[b]];
      const Keypoint& fb = fixed_kps.at(mb.fixed_kp);
      const Keypoint& vb = moving_kps.at(mb.moving_kp);
      const double dfix = std::hypot(fa.x - fb.x, fa.y - fb.y);
      const double dmov = std::hypot(va.x - vb.x, va.y - vb.y);
      if (dfix < cfg.min_pair_distance || dmov < cfg.min_pair_distance) continue;
      const auto r = static_cast<float>(dfix / dmov);
      ratio[a * m + b] = r;
      ratio[b * m + a] = r;
    }
  }

  std::vector<bool> alive(m, true);
  std::size_t alive_count = m;
  std::vector<float> pool;
  while (alive_count > cfg.min_matches) {
    pool.clear();
    for (std::size_t a = 0; a < m; ++a) {
      if (!alive[a]) continue;
      for (std::size_t b = a + 1; b < m; ++b) {
        if (alive[b] && !std::isnan(ratio[a * m + b])) pool.push_back(ratio[a * m + b]);
      }
    }
    if (pool.empty()) break;
    auto mid = pool.begin() + static_cast<std::ptrdiff_t>(pool.size() / 2);
    std::nth_element(pool.begin(), mid, pool.end());
    const double median = *mid;
    rep.median_ratio = median;

    std::size_t worst = m;
    double worst_score = std::numeric_limits<double>::infinity();
    for (std::size_t a = 0; a < m; ++a) {
      if (!alive[a]) continue;
      std::size_t total = 0;
      std::size_t good = 0;
      for (std::size_t b = 0; b < m; ++b) {
        if (b == a || !alive[b]) continue;
        const float r = ratio[a * m + b];
        if (std::isnan(r)) continue;
        ++total;
        if (std::abs(r - median) <= cfg.ratio_tol * median) ++good;
      }
      const double score = total == 0 ? 0.0 : static_cast<double>(good) / total;
      const bool weaker = worst < m && score == worst_score &&
                          ms.matches[active[a]].similarity < ms.matches[active[worst]].similarity;
      if (score < worst_score || weaker) {
        worst_score = score;
        worst = a;
      }
    }
    if (worst_score >= cfg.score_floor) break;
    alive[worst] = false;
    --alive_count;
  }

  for (std::size_t a = 0; a < m; ++a) {
    if (alive[a]) rep.kept[active[a]] = true;
  }
  rep.after_spatial = alive_count;
  return rep;
}

/// Matches whose mask entry is set; throws InsufficientMatches below
/// cfg.min_matches.
inline MatchSet apply_mask(const MatchSet& ms, const MismatchReport& rep, const MismatchConfig& cfg = {}) {
  MatchSet out;
  out.stage = MatchStage::Filtered;
  for (std::size_t i = 0; i < ms.size(); ++i) {
    if (rep.kept[i]) out.matches.push_back(ms.matches[i]);
  }
  if (out.size() < cfg.min_matches) {
    throw Error(ErrorCode::InsufficientMatches,
                std::to_string(out.size()) + " matches survive filtering, need " +
                    std::to_string(cfg.min_matches));
  }
  return out;
}

/// Filtered, one-to-one match set; throws InsufficientMatches below three pairs.
inline MatchSet remove_mismatches(const MatchSet& ms, const std::vector<Keypoint>& fixed_kps,
                                  const std::vector<Keypoint>& moving_kps,
                                  const MismatchConfig& cfg = {}) {
  if (ms.empty()) throw Error(ErrorCode::InsufficientMatches, "no initial matches");
  return apply_mask(ms, mismatch_mask(ms, fixed_kps, moving_kps, cfg), cfg);
}

/// CSV rows: fixed_x,fixed_y,moving_x,moving_y,similarity,kept
inline void write_matches_csv(const std::filesystem::path& path, const MatchSet& initial,
                              const std::vector<bool>& kept, const std::vector<Keypoint>& fixed_kps,
                              const std::vector<Keypoint>& moving_kps) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::IoFailure, "cannot create " + path.string());
  out << "fixed_x,fixed_y,moving_x,moving_y,similarity,kept\n";
  char line[256];
  for (std::size_t i = 0; i < initial.size(); ++i) {
    const Match& m = initial.matches[i];
    const Keypoint& f = fixed_kps.at(m.fixed_kp);
    const Keypoint& v = moving_kps.at(m.moving_kp);
    std::snprintf(line, sizeof line, "%.17g,%.17g,%.17g,%.17g,%.17g,%d\n", f.x, f.y, v.x, v.y,
                  m.similarity, i < kept.size() && kept[i] ? 1 : 0);
    out << line;
  }
}

}  // namespace msreg
