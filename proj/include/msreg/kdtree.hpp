#pragma once

#include <algorithm>
#include <array>
#include <functional>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <queue>
#include <span>
#include <vector>

namespace msreg {

/// k-d tree over fixed-dimension points with best-bin-first queries.
///
/// Points are referenced, not copied; the caller keeps them alive. Each
/// leaf holds one point, so `max_checks` bounds the number of candidate
/// distance evaluations. A query with max_checks == 0 explores until the
/// priority queue can no longer beat the current best, i.e. exact search.
template <std::size_t Dim>
class KdTree {
 public:
  using Point = std::array<double, Dim>;

  struct Neighbor {
    std::size_t index = std::numeric_limits<std::size_t>::max();
    double distance_sq = std::numeric_limits<double>::infinity();
    std::size_t checks = 0;
  };

  explicit KdTree(std::span<const Point* const> points) : points_(points.begin(), points.end()) {
    if (points_.empty()) return;
    std::vector<std::uint32_t> idx(points_.size());
    std::iota(idx.begin(), idx.end(), 0u);
    nodes_.reserve(2 * points_.size());
    root_ = build(idx, 0, idx.size());
  }

  std::size_t size() const noexcept { return points_.size(); }

  Neighbor nearest(const Point& q, std::size_t max_checks = 0) const {
    Neighbor best;
    if (nodes_.empty()) return best;

    struct Branch {
      double bound;
      std::uint32_t node;
      bool operator>(const Branch& o) const {
        return bound > o.bound || (bound == o.bound && node > o.node);
      }
    };
    std::priority_queue<Branch, std::vector<Branch>, std::greater<>> queue;
    queue.push({0.0, root_});

    while (!queue.empty()) {
      const Branch br = queue.top();
      queue.pop();
      if (br.bound > best.distance_sq) break;
      if (max_checks != 0 && best.checks >= max_checks) break;

      // descend to a leaf, queueing the far side of every split
      std::uint32_t n = br.node;
      while (!nodes_[n].leaf) {
        const Node& node = nodes_[n];
        const double diff = q[node.dim] - node.split;
        const std::uint32_t near = diff < 0.0 ? node.left : node.right;
        const std::uint32_t far = diff < 0.0 ? node.right : node.left;
        const double far_bound = std::max(br.bound, diff * diff);
        if (far_bound <= best.distance_sq) queue.push({far_bound, far});
        n = near;
      }
      const std::uint32_t pi = nodes_[n].point;
      ++best.checks;
      const double d = distance_sq(q, *points_[pi], best.distance_sq);
      if (d < best.distance_sq || (d == best.distance_sq && pi < best.index)) {
        best.distance_sq = d;
        best.index = pi;
      }
    }
    return best;
  }

  /// Squared distance; stops early (returning a value > limit) once the
  /// partial sum exceeds `limit`.
  static double distance_sq(const Point& a, const Point& b,
                            double limit = std::numeric_limits<double>::infinity()) {
    double s = 0.0;
    for (std::size_t i = 0; i < Dim; i += 8) {
      for (std::size_t k = i; k < std::min(Dim, i + 8); ++k) {
        const double d = a[k] - b[k];
        s += d * d;
      }
      if (s > limit) return s;
    }
    return s;
  }

 private:
  struct Node {
    bool leaf = false;
    std::uint32_t dim = 0;
    double split = 0.0;
    std::uint32_t left = 0;
    std::uint32_t right = 0;
    std::uint32_t point = 0;
  };

  std::uint32_t build(std::vector<std::uint32_t>& idx, std::size_t lo, std::size_t hi) {
    const auto id = static_cast<std::uint32_t>(nodes_.size());
    nodes_.emplace_back();
    if (hi - lo == 1) {
      nodes_[id].leaf = true;
      nodes_[id].point = idx[lo];
      return id;
    }

    // split on the highest-variance dimension at the median
    std::size_t best_dim = 0;
    double best_var = -1.0;
    const double count = static_cast<double>(hi - lo);
    for (std::size_t d = 0; d < Dim; ++d) {
      double mean = 0.0;
      for (std::size_t i = lo; i < hi; ++i) mean += (*points_[idx[i]])[d];
      mean /= count;
      double var = 0.0;
      for (std::size_t i = lo; i < hi; ++i) {
        const double t = (*points_[idx[i]])[d] - mean;
        var += t * t;
      }
      if (var > best_var) {
        best_var = var;
        best_dim = d;
      }
    }
    const std::size_t mid = lo + (hi - lo) / 2;
    const auto key = [&](std::uint32_t i) { return (*points_[i])[best_dim]; };
    std::nth_element(idx.begin() + static_cast<std::ptrdiff_t>(lo),
                     idx.begin() + static_cast<std::ptrdiff_t>(mid),
                     idx.begin() + static_cast<std::ptrdiff_t>(hi),
                     [&](std::uint32_t a, std::uint32_t b) {
                       return key(a) < key(b) || (key(a) == key(b) && a < b);
                     });
    const double split = key(idx[mid]);

    const std::uint32_t left = build(idx, lo, mid);
    const std::uint32_t right = build(idx, mid, hi);
    Node& node = nodes_[id];
    node.dim = static_cast<std::uint32_t>(best_dim);
    node.split = split;
    node.left = left;
    node.right = right;
    return id;
  }

  std::vector<const Point*> points_;
  std::vector<Node> nodes_;
  std::uint32_t root_ = 0;
};

}  // namespace msreg
