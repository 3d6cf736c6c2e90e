#pragma once

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "msreg/error.hpp"
#include "msreg/image.hpp"
#include "msreg/scale_space.hpp"

namespace msreg {

enum class TransformKind { Similarity, Affine, Projective };

inline const char* to_string(TransformKind k) {
  switch (k) {
    case TransformKind::Similarity: return "similarity";
    case TransformKind::Affine: return "affine";
    case TransformKind::Projective: return "projective";
  }
  return "unknown";
}

inline std::optional<TransformKind> parse_transform_kind(const std::string& s) {
  if (s == "similarity") return TransformKind::Similarity;
  if (s == "affine") return TransformKind::Affine;
  if (s == "projective") return TransformKind::Projective;
  return std::nullopt;
}

inline int min_points(TransformKind k) {
  switch (k) {
    case TransformKind::Similarity: return 2;
    case TransformKind::Affine: return 3;
    case TransformKind::Projective: return 4;
  }
  return 4;
}

/// Homogeneous 3x3 mapping of moving-image coordinates onto the fixed image,
/// normalized so that matrix(2,2) == 1.
struct TransformModel {
  TransformKind kind = TransformKind::Affine;
  Eigen::Matrix3d matrix = Eigen::Matrix3d::Identity();
  double rmse = 0.0;
  std::size_t n_points = 0;

  static TransformModel identity(TransformKind kind = TransformKind::Similarity) {
    return {kind, Eigen::Matrix3d::Identity(), 0.0, 0};
  }
};

struct PointPair {
  Point2 fixed;
  Point2 moving;
};

inline Point2 apply(const Eigen::Matrix3d& m, Point2 p) {
  const double w = m(2, 0) * p.x + m(2, 1) * p.y + m(2, 2);
  if (std::abs(w) <= 1e-12) {
    throw Error(ErrorCode::PointAtInfinity, "point maps to infinity");
  }
  return {(m(0, 0) * p.x + m(0, 1) * p.y + m(0, 2)) / w,
          (m(1, 0) * p.x + m(1, 1) * p.y + m(1, 2)) / w};
}

inline Point2 apply(const TransformModel& t, Point2 p) { return apply(t.matrix, p); }

namespace detail {

inline Eigen::Matrix3d normalized_h(const Eigen::Matrix3d& m) {
  return std::abs(m(2, 2)) > 1e-300 ? Eigen::Matrix3d(m / m(2, 2)) : m;
}

inline bool invertible(const Eigen::Matrix3d& m) {
  if (!m.allFinite()) return false;
  const Eigen::JacobiSVD<Eigen::Matrix3d> svd(m);
  const auto s = svd.singularValues();
  return s(0) > 0.0 && s(2) / s(0) > 1e-12;
}

/// Similarity that moves the centroid to the origin and the RMS radius to sqrt(2).
inline Eigen::Matrix3d conditioning(const std::vector<Point2>& pts) {
  double cx = 0.0;
  double cy = 0.0;
  for (const auto& p : pts) {
    cx += p.x;
    cy += p.y;
  }
  cx /= static_cast<double>(pts.size());
  cy /= static_cast<double>(pts.size());
  double ss = 0.0;
  for (const auto& p : pts) ss += (p.x - cx) * (p.x - cx) + (p.y - cy) * (p.y - cy);
  const double rms = std::sqrt(ss / static_cast<double>(pts.size()));
  const double s = rms > 0.0 ? std::sqrt(2.0) / rms : 1.0;
  Eigen::Matrix3d t;
  t << s, 0, -s * cx, 0, s, -s * cy, 0, 0, 1;
  return t;
}

inline std::vector<Point2> transformed(const Eigen::Matrix3d& t, const std::vector<Point2>& pts) {
  std::vector<Point2> out;
  out.reserve(pts.size());
  for (const auto& p : pts) out.push_back(apply(t, p));
  return out;
}

inline double spread_ratio(const std::vector<Point2>& pts) {
  // ratio of smallest to largest principal spread
  Eigen::Vector2d mean = Eigen::Vector2d::Zero();
  for (const auto& p : pts) mean += Eigen::Vector2d(p.x, p.y);
  mean /= static_cast<double>(pts.size());
  Eigen::Matrix2d cov = Eigen::Matrix2d::Zero();
  for (const auto& p : pts) {
    const Eigen::Vector2d d = Eigen::Vector2d(p.x, p.y) - mean;
    cov += d * d.transpose();
  }
  const Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(cov);
  const double hi = es.eigenvalues()(1);
  return hi > 0.0 ? es.eigenvalues()(0) / hi : 0.0;
}

inline bool collinear(Point2 a, Point2 b, Point2 c) {
  const double cross = (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x);
  const double scale = std::max({std::hypot(b.x - a.x, b.y - a.y), std::hypot(c.x - a.x, c.y - a.y),
                                 std::hypot(c.x - b.x, c.y - b.y)});
  return std::abs(cross) <= 1e-9 * scale * scale;
}

inline double sum_sq_residual(const Eigen::Matrix3d& h, const std::vector<Point2>& mov,
                              const std::vector<Point2>& fix) {
  double s = 0.0;
  for (std::size_t i = 0; i < mov.size(); ++i) {
    const Eigen::Vector3d q = h * Eigen::Vector3d(mov[i].x, mov[i].y, 1.0);
    if (std::abs(q(2)) <= 1e-12) return std::numeric_limits<double>::infinity();
    const double dx = fix[i].x - q(0) / q(2);
    const double dy = fix[i].y - q(1) / q(2);
    s += dx * dx + dy * dy;
  }
  return s;
}

inline Eigen::Matrix3d fit_similarity(const std::vector<Point2>& mov, const std::vector<Point2>& fix) {
  // x' = a x - b y + tx ; y' = b x + a y + ty
  Eigen::Matrix4d ata = Eigen::Matrix4d::Zero();
  Eigen::Vector4d atb = Eigen::Vector4d::Zero();
  for (std::size_t i = 0; i < mov.size(); ++i) {
    const Eigen::Vector4d rx(mov[i].x, -mov[i].y, 1.0, 0.0);
    const Eigen::Vector4d ry(mov[i].y, mov[i].x, 0.0, 1.0);
    ata += rx * rx.transpose() + ry * ry.transpose();
    atb += rx * fix[i].x + ry * fix[i].y;
  }
  const Eigen::Vector4d p = ata.ldlt().solve(atb);
  Eigen::Matrix3d h;
  h << p(0), -p(1), p(2), p(1), p(0), p(3), 0, 0, 1;
  return h;
}

inline Eigen::Matrix3d fit_affine(const std::vector<Point2>& mov, const std::vector<Point2>& fix) {
  Eigen::Matrix3d ata = Eigen::Matrix3d::Zero();
  Eigen::Vector3d atx = Eigen::Vector3d::Zero();
  Eigen::Vector3d aty = Eigen::Vector3d::Zero();
  for (std::size_t i = 0; i < mov.size(); ++i) {
    const Eigen::Vector3d r(mov[i].x, mov[i].y, 1.0);
    ata += r * r.transpose();
    atx += r * fix[i].x;
    aty += r * fix[i].y;
  }
  const auto ldlt = ata.ldlt();
  const Eigen::Vector3d px = ldlt.solve(atx);
  const Eigen::Vector3d py = ldlt.solve(aty);
  Eigen::Matrix3d h;
  h << px(0), px(1), px(2), py(0), py(1), py(2), 0, 0, 1;
  return h;
}

inline std::optional<Eigen::Matrix3d> fit_dlt(const std::vector<Point2>& mov, const std::vector<Point2>& fix) {
  const auto n = static_cast<Eigen::Index>(mov.size());
  Eigen::MatrixXd a(2 * n, 9);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double x = mov[static_cast<std::size_t>(i)].x, y = mov[static_cast<std::size_t>(i)].y;
    const double u = fix[static_cast<std::size_t>(i)].x, v = fix[static_cast<std::size_t>(i)].y;
    a.row(2 * i) << -x, -y, -1, 0, 0, 0, u * x, u * y, u;
    a.row(2 * i + 1) << 0, 0, 0, -x, -y, -1, v * x, v * y, v;
  }
  const Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeFullV);
  const auto s = svd.singularValues();
  // rank must be at least 8 for a unique solution
  if (s(0) <= 0.0 || s(7) / s(0) < 1e-12) return std::nullopt;
  const Eigen::VectorXd h = svd.matrixV().col(8);
  Eigen::Matrix3d m;
  m << h(0), h(1), h(2), h(3), h(4), h(5), h(6), h(7), h(8);
  if (std::abs(m(2, 2)) < 1e-10) return std::nullopt;
  return Eigen::Matrix3d(m / m(2, 2));
}

/// Levenberg-Marquardt on the 8 free entries of h (h33 = 1), minimizing the
/// transfer error in the fixed image. Never returns a worse matrix.
inline Eigen::Matrix3d refine_projective(Eigen::Matrix3d h, const std::vector<Point2>& mov,
                                         const std::vector<Point2>& fix) {
  h = normalized_h(h);
  double cost = sum_sq_residual(h, mov, fix);
  if (!std::isfinite(cost)) return h;
  double lambda = 1e-3;
  bool converged = false;
  for (int iter = 0; iter < 200 && cost > 0.0 && !converged; ++iter) {
    Eigen::Matrix<double, 8, 8> jtj = Eigen::Matrix<double, 8, 8>::Zero();
    Eigen::Matrix<double, 8, 1> jtr = Eigen::Matrix<double, 8, 1>::Zero();
    for (std::size_t i = 0; i < mov.size(); ++i) {
      const double x = mov[i].x, y = mov[i].y;
      const double w = h(2, 0) * x + h(2, 1) * y + 1.0;
      const double px = (h(0, 0) * x + h(0, 1) * y + h(0, 2)) / w;
      const double py = (h(1, 0) * x + h(1, 1) * y + h(1, 2)) / w;
      Eigen::Matrix<double, 8, 1> jx, jy;
      jx << x / w, y / w, 1 / w, 0, 0, 0, -px * x / w, -px * y / w;
      jy << 0, 0, 0, x / w, y / w, 1 / w, -py * x / w, -py * y / w;
      const double rx = fix[i].x - px;
      const double ry = fix[i].y - py;
      jtj += jx * jx.transpose() + jy * jy.transpose();
      jtr += jx * rx + jy * ry;
    }
    bool improved = false;
    while (lambda < 1e12) {
      Eigen::Matrix<double, 8, 8> lhs = jtj;
      lhs.diagonal() += lambda * (jtj.diagonal().array() + 1e-12).matrix();
      const Eigen::Matrix<double, 8, 1> step = lhs.ldlt().solve(jtr);
      Eigen::Matrix3d cand = h;
      cand(0, 0) += step(0); cand(0, 1) += step(1); cand(0, 2) += step(2);
      cand(1, 0) += step(3); cand(1, 1) += step(4); cand(1, 2) += step(5);
      cand(2, 0) += step(6); cand(2, 1) += step(7);
      const double c = sum_sq_residual(cand, mov, fix);
      if (c < cost) {
        const double gain = cost - c;
        h = cand;
        cost = c;
        lambda = std::max(lambda * 0.1, 1e-12);
        improved = true;
        converged = gain <= 1e-15 * cost || step.norm() < 1e-15;
        break;
      }
      lambda *= 10.0;
    }
    if (!improved) break;
  }
  return h;
}

}  // namespace detail

/// Root mean squared transfer error of `m` over the pairs.
inline double residual_rmse(const Eigen::Matrix3d& m, const std::vector<PointPair>& pairs) {
  if (pairs.empty()) return 0.0;
  double s = 0.0;
  for (const auto& p : pairs) {
    const Point2 q = apply(m, p.moving);
    const double dx = p.fixed.x - q.x;
    const double dy = p.fixed.y - q.y;
    s += dx * dx + dy * dy;
  }
  return std::sqrt(s / static_cast<double>(pairs.size()));
}

inline double residual_rmse(const TransformModel& t, const std::vector<PointPair>& pairs) {
  return residual_rmse(t.matrix, pairs);
}

/// Least-squares fit of a moving -> fixed transform of the requested kind.
inline TransformModel estimate(const std::vector<PointPair>& pairs, TransformKind kind) {
  const int need = min_points(kind);
  if (static_cast<int>(pairs.size()) < need) {
    throw Error(ErrorCode::InsufficientPoints, std::string(to_string(kind)) + " needs " +
                                                   std::to_string(need) + " pairs, got " +
                                                   std::to_string(pairs.size()));
  }
  std::vector<Point2> mov, fix;
  mov.reserve(pairs.size());
  fix.reserve(pairs.size());
  for (const auto& p : pairs) {
    mov.push_back(p.moving);
    fix.push_back(p.fixed);
  }

  const Eigen::Matrix3d tm = detail::conditioning(mov);
  const Eigen::Matrix3d tf = detail::conditioning(fix);
  const std::vector<Point2> nm = detail::transformed(tm, mov);
  const std::vector<Point2> nf = detail::transformed(tf, fix);

  const double mov_spread = detail::spread_ratio(nm);
  double mov_extent = 0.0;
  for (const auto& p : nm) mov_extent = std::max(mov_extent, std::hypot(p.x, p.y));
  if (mov_extent < 1e-12) {
    throw Error(ErrorCode::DegenerateConfiguration, "moving points coincide");
  }

  Eigen::Matrix3d hn;
  switch (kind) {
    case TransformKind::Similarity:
      hn = detail::fit_similarity(nm, nf);
      break;
    case TransformKind::Affine:
      if (mov_spread < 1e-12) throw Error(ErrorCode::DegenerateConfiguration, "moving points are collinear");
      hn = detail::fit_affine(nm, nf);
      break;
    case TransformKind::Projective: {
      if (mov_spread < 1e-12 || detail::spread_ratio(nf) < 1e-12) {
        throw Error(ErrorCode::DegenerateConfiguration, "points are collinear");
      }
      if (pairs.size() == 4) {
        for (std::size_t i = 0; i < 4; ++i) {
          std::vector<std::size_t> o;
          for (std::size_t j = 0; j < 4; ++j) {
            if (j != i) o.push_back(j);
          }
          if (detail::collinear(nm[o[0]], nm[o[1]], nm[o[2]]) ||
              detail::collinear(nf[o[0]], nf[o[1]], nf[o[2]])) {
            throw Error(ErrorCode::DegenerateConfiguration, "three of four points are collinear");
          }
        }
      }
      const Eigen::Matrix3d affine = detail::fit_affine(nm, nf);
      hn = detail::refine_projective(affine, nm, nf);
      if (const auto dlt = detail::fit_dlt(nm, nf)) {
        const Eigen::Matrix3d from_dlt = detail::refine_projective(*dlt, nm, nf);
        if (detail::sum_sq_residual(from_dlt, nm, nf) < detail::sum_sq_residual(hn, nm, nf)) {
          hn = from_dlt;
        }
      }
      break;
    }
  }

  Eigen::Matrix3d h = detail::normalized_h(tf.inverse() * hn * tm);
  if (kind != TransformKind::Projective) h.row(2) << 0.0, 0.0, 1.0;
  if (!detail::invertible(h)) {
    throw Error(ErrorCode::DegenerateConfiguration, "estimated transform is singular");
  }
  TransformModel t{kind, h, 0.0, pairs.size()};
  t.rmse = residual_rmse(t, pairs);
  return t;
}

/// Lowest-rmse model, preferring the simpler one unless the richer model
/// improves rmse by more than `hysteresis` (fraction).
inline TransformModel estimate_auto(const std::vector<PointPair>& pairs, double hysteresis = 0.10) {
  TransformModel best = estimate(pairs, TransformKind::Similarity);
  for (const auto kind : {TransformKind::Affine, TransformKind::Projective}) {
    if (static_cast<int>(pairs.size()) < min_points(kind)) break;
    try {
      TransformModel cand = estimate(pairs, kind);
      if (cand.rmse < (1.0 - hysteresis) * best.rmse) best = cand;
    } catch (const Error& e) {
      if (e.code() != ErrorCode::DegenerateConfiguration) throw;
    }
  }
  return best;
}

inline TransformModel inverse(const TransformModel& t) {
  if (!detail::invertible(t.matrix)) {
    throw Error(ErrorCode::SingularTransform, "transform is not invertible");
  }
  TransformModel inv = t;
  inv.matrix = detail::normalized_h(t.matrix.inverse());
  inv.rmse = 0.0;
  return inv;
}

/// Composition: (a * b)(p) = a(b(p)).
inline TransformModel compose(const TransformModel& a, const TransformModel& b) {
  TransformModel out = a;
  out.kind = static_cast<int>(a.kind) >= static_cast<int>(b.kind) ? a.kind : b.kind;
  out.matrix = detail::normalized_h(a.matrix * b.matrix);
  out.rmse = 0.0;
  out.n_points = 0;
  return out;
}

inline TransformModel make_similarity(double angle_rad, double scale, double tx, double ty) {
  TransformModel t = TransformModel::identity(TransformKind::Similarity);
  const double c = scale * std::cos(angle_rad);
  const double s = scale * std::sin(angle_rad);
  t.matrix << c, -s, tx, s, c, ty, 0, 0, 1;
  return t;
}

struct WarpResult {
  GrayImage image;
  std::vector<bool> valid;  // true where the source was sampled
};

/// Inverse-mapping warp of `moving` into an out_w x out_h frame, bilinear,
/// zero outside the source.
inline WarpResult warp_with_mask(const GrayImage& moving, const TransformModel& t, int out_w, int out_h) {
  const Eigen::Matrix3d inv = inverse(t).matrix;
  WarpResult r{GrayImage(out_w, out_h, 0.0),
               std::vector<bool>(static_cast<std::size_t>(out_w) * static_cast<std::size_t>(out_h), false)};
  const double max_x = moving.width() - 1;
  const double max_y = moving.height() - 1;
  for (int y = 0; y < out_h; ++y) {
    for (int x = 0; x < out_w; ++x) {
      const double w = inv(2, 0) * x + inv(2, 1) * y + inv(2, 2);
      if (std::abs(w) <= 1e-12) continue;
      const double sx = (inv(0, 0) * x + inv(0, 1) * y + inv(0, 2)) / w;
      const double sy = (inv(1, 0) * x + inv(1, 1) * y + inv(1, 2)) / w;
      if (sx >= 0.0 && sy >= 0.0 && sx <= max_x && sy <= max_y) {
        r.image.at(x, y) = sample_bilinear(moving, sx, sy);
        r.valid[static_cast<std::size_t>(y) * static_cast<std::size_t>(out_w) + static_cast<std::size_t>(x)] = true;
      }
    }
  }
  return r;
}

inline GrayImage warp(const GrayImage& moving, const TransformModel& t, int out_w, int out_h) {
  return warp_with_mask(moving, t, out_w, out_h).image;
}

/// Three rows of three numbers plus `#` comment lines for kind and rmse.
inline std::string format_transform(const TransformModel& t) {
  std::ostringstream out;
  char buf[128];
  out << "# kind: " << to_string(t.kind) << "\n";
  std::snprintf(buf, sizeof buf, "# rmse: %.17g\n", t.rmse);
  out << buf;
  out << "# n_points: " << t.n_points << "\n";
  for (int r = 0; r < 3; ++r) {
    std::snprintf(buf, sizeof buf, "%.17g %.17g %.17g\n", t.matrix(r, 0), t.matrix(r, 1), t.matrix(r, 2));
    out << buf;
  }
  return out.str();
}

inline void write_transform(const std::filesystem::path& path, const TransformModel& t) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::IoFailure, "cannot create " + path.string());
  out << format_transform(t);
}

inline TransformModel read_transform(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoFailure, "cannot open " + path.string());
  TransformModel t;
  std::vector<double> values;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (line[0] == '#') {
      std::istringstream ls(line.substr(1));
      std::string key, value;
      ls >> key >> value;
      if (key == "kind:") {
        if (const auto k = parse_transform_kind(value)) t.kind = *k;
      } else if (key == "rmse:") {
        t.rmse = std::stod(value);
      } else if (key == "n_points:") {
        t.n_points = std::stoul(value);
      }
      continue;
    }
    std::istringstream ls(line);
    double v;
    while (ls >> v) values.push_back(v);
  }
  if (values.size() != 9) throw Error(ErrorCode::UnsupportedFormat, "transform file needs 9 numbers");
  for (int i = 0; i < 9; ++i) t.matrix(i / 3, i % 3) = values[static_cast<std::size_t>(i)];
  return t;
}

}  // namespace msreg
