#pragma once

// Exact nearest-neighbor index over a point cloud. Median-split kd-tree,
// read-only after construction and shareable across threads. Queries return
// the exact nearest point under squared Euclidean distance; ties resolve to
// the lowest point index so results are deterministic.

#include <algorithm>
#include <cstdint>
#include <limits>
#include <numeric>
#include <vector>

#include "asfm/core.hpp"

namespace asfm::geom {

struct NNResult {
  std::size_t index = 0;
  double sqdist = std::numeric_limits<double>::infinity();
};

class NNIndex {
 public:
  explicit NNIndex(const PointCloud& cloud) : pts_(cloud.points) {
    require_valid(cloud, "NNIndex");
    order_.resize(pts_.size());
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    nodes_.reserve(pts_.size());
    root_ = build(0, pts_.size());
  }

  std::size_t size() const { return pts_.size(); }
  const Vec3& point(std::size_t i) const { return pts_[i]; }

  NNResult nearest(const Vec3& q) const {
    NNResult best;
    search(root_, q, best);
    return best;
  }

 private:
  struct Node {
    std::size_t point = 0;  // index into pts_
    int axis = 0;
    std::int32_t left = -1, right = -1;
  };

  std::int32_t build(std::size_t lo, std::size_t hi) {
    if (lo >= hi) return -1;
    // Split along the axis of largest extent for balanced pruning.
    Vec3 mn = pts_[order_[lo]], mx = mn;
    for (std::size_t i = lo + 1; i < hi; ++i) {
      const Vec3& p = pts_[order_[i]];
      for (int a = 0; a < 3; ++a) {
        mn[a] = std::min(mn[a], p[a]);
        mx[a] = std::max(mx[a], p[a]);
      }
    }
    int axis = 0;
    double extent = mx[0] - mn[0];
    for (int a = 1; a < 3; ++a) {
      if (mx[a] - mn[a] > extent) {
        extent = mx[a] - mn[a];
        axis = a;
      }
    }
    const std::size_t mid = lo + (hi - lo) / 2;
    std::nth_element(order_.begin() + lo, order_.begin() + mid, order_.begin() + hi,
                     [&](std::size_t a, std::size_t b) {
                       if (pts_[a][axis] != pts_[b][axis]) return pts_[a][axis] < pts_[b][axis];
                       return a < b;
                     });
    Node n;
    n.point = order_[mid];
    n.axis = axis;
    const std::int32_t self = static_cast<std::int32_t>(nodes_.size());
    nodes_.push_back(n);
    const std::int32_t l = build(lo, mid);
    const std::int32_t r = build(mid + 1, hi);
    nodes_[self].left = l;
    nodes_[self].right = r;
    return self;
  }

  void search(std::int32_t ni, const Vec3& q, NNResult& best) const {
    if (ni < 0) return;
    const Node& n = nodes_[ni];
    const double d2 = sqdist(q, pts_[n.point]);
    if (d2 < best.sqdist || (d2 == best.sqdist && n.point < best.index)) {
      best.sqdist = d2;
      best.index = n.point;
    }
    const double delta = q[n.axis] - pts_[n.point][n.axis];
    const std::int32_t near = delta < 0.0 ? n.left : n.right;
    const std::int32_t far = delta < 0.0 ? n.right : n.left;
    search(near, q, best);
    // <= keeps equidistant candidates reachable so the lowest-index tie wins.
    if (delta * delta <= best.sqdist) search(far, q, best);
  }

  std::vector<Vec3> pts_;
  std::vector<std::size_t> order_;
  std::vector<Node> nodes_;
  std::int32_t root_ = -1;
};

}  // namespace asfm::geom
