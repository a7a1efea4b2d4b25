#pragma once

// Non-differentiable geometric kernels: farthest point sampling, symmetry
// transforms, folding grids and synthetic-cloud assembly. All functions are
// pure over immutable inputs and safe to call concurrently.

#include <algorithm>
#include <array>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "asfm/core.hpp"
#include "asfm/kdtree.hpp"

namespace asfm::geom {

enum class SymmetryPlane { XY, YZ, XZ };

inline SymmetryPlane plane_from_string(const std::string& s) {
  if (s == "xy" || s == "XY") return SymmetryPlane::XY;
  if (s == "yz" || s == "YZ") return SymmetryPlane::YZ;
  if (s == "xz" || s == "XZ") return SymmetryPlane::XZ;
  throw std::invalid_argument("unknown symmetry plane: " + s);
}

// Greedy max-min subset selection. Selection starts at start_index and each
// following pick maximizes its minimum distance to the already-selected set;
// ties break to the lowest index. Output order is selection order.
inline std::vector<std::size_t> fps_indices(const PointCloud& cloud, std::size_t k,
                                            std::size_t start_index = 0) {
  require_valid(cloud, "fps");
  const std::size_t n = cloud.size();
  if (k < 1 || k > n) throw std::invalid_argument("fps: k out of range [1, " + std::to_string(n) + "]");
  if (start_index >= n) throw std::invalid_argument("fps: start index out of range");

  std::vector<std::size_t> selected;
  selected.reserve(k);
  std::vector<double> mind(n);
  std::vector<char> taken(n, 0);

  selected.push_back(start_index);
  taken[start_index] = 1;
  for (std::size_t i = 0; i < n; ++i) mind[i] = sqdist(cloud[i], cloud[start_index]);

  while (selected.size() < k) {
    std::size_t best = n;
    double bestd = -1.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (taken[i]) continue;
      if (mind[i] > bestd) {
        bestd = mind[i];
        best = i;
      }
    }
    selected.push_back(best);
    taken[best] = 1;
    for (std::size_t i = 0; i < n; ++i) {
      if (taken[i]) continue;
      mind[i] = std::min(mind[i], sqdist(cloud[i], cloud[best]));
    }
  }
  return selected;
}

inline PointCloud fps(const PointCloud& cloud, std::size_t k, std::size_t start_index = 0) {
  const std::vector<std::size_t> idx = fps_indices(cloud, k, start_index);
  PointCloud out;
  out.points.reserve(k);
  for (std::size_t i : idx) out.points.push_back(cloud[i]);
  out.category = cloud.category;
  out.frame_id = cloud.frame_id;
  return out;
}

// Reflects the cloud about a coordinate plane by negating the axis normal to
// it. Exact involution: mirror(mirror(c)) == c bitwise.
inline PointCloud mirror(const PointCloud& cloud, SymmetryPlane plane = SymmetryPlane::XY) {
  PointCloud out = cloud;
  switch (plane) {
    case SymmetryPlane::XY:
      for (Vec3& p : out.points) p.z = -p.z;
      break;
    case SymmetryPlane::YZ:
      for (Vec3& p : out.points) p.x = -p.x;
      break;
    case SymmetryPlane::XZ:
      for (Vec3& p : out.points) p.y = -p.y;
      break;
  }
  return out;
}

// rows x cols points uniformly spanning [-extent, extent]^2, row-major.
// A degenerate axis (size 1) collapses to coordinate 0.
inline std::vector<std::array<double, 2>> grid2d(std::size_t rows, std::size_t cols,
                                                 double extent) {
  if (rows < 1 || cols < 1) throw std::invalid_argument("grid2d: rows and cols must be >= 1");
  if (!(extent > 0.0)) throw std::invalid_argument("grid2d: extent must be positive");
  auto coord = [extent](std::size_t i, std::size_t n) {
    if (n == 1) return 0.0;
    return -extent + 2.0 * extent * static_cast<double>(i) / static_cast<double>(n - 1);
  };
  std::vector<std::array<double, 2>> out;
  out.reserve(rows * cols);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) out.push_back({coord(r, rows), coord(c, cols)});
  return out;
}

inline std::pair<Vec3, double> nearest(const NNIndex& index, const Vec3& p) {
  const NNResult r = index.nearest(p);
  return {index.point(r.index), r.sqdist};
}

// Rows [0, n_partial) of `unioned` are the partial cloud, the next n_partial
// rows its mirror, and the remainder the coarse cloud; `selected` indexes
// into that layout (selection order).
struct SynthesisPlan {
  PointCloud unioned;
  std::vector<std::size_t> selected;
  std::size_t n_partial = 0;
};

inline SynthesisPlan synthesize_plan(const PointCloud& partial, const PointCloud& coarse,
                                     std::size_t target_n,
                                     SymmetryPlane plane = SymmetryPlane::XY) {
  require_valid(partial, "synthesize(partial)");
  require_valid(coarse, "synthesize(coarse)");
  if (target_n < 1) throw std::invalid_argument("synthesize: target_n must be >= 1");
  SynthesisPlan plan;
  plan.n_partial = partial.size();
  plan.unioned.points.reserve(2 * partial.size() + coarse.size());
  plan.unioned.points.insert(plan.unioned.points.end(), partial.points.begin(),
                             partial.points.end());
  const PointCloud m = mirror(partial, plane);
  plan.unioned.points.insert(plan.unioned.points.end(), m.points.begin(), m.points.end());
  plan.unioned.points.insert(plan.unioned.points.end(), coarse.points.begin(),
                             coarse.points.end());
  if (target_n > plan.unioned.size())
    throw std::invalid_argument("synthesize: target_n exceeds union size " +
                                std::to_string(plan.unioned.size()));
  plan.selected = fps_indices(plan.unioned, target_n, 0);
  return plan;
}

// Concatenates partial, mirror(partial) and coarse, then farthest-point
// samples down to exactly target_n points (selection starts at index 0, i.e.
// the first partial point).
inline PointCloud synthesize(const PointCloud& partial, const PointCloud& coarse,
                             std::size_t target_n,
                             SymmetryPlane plane = SymmetryPlane::XY) {
  const SynthesisPlan plan = synthesize_plan(partial, coarse, target_n, plane);
  PointCloud out;
  out.points.reserve(plan.selected.size());
  for (std::size_t i : plan.selected) out.points.push_back(plan.unioned[i]);
  return out;
}

}  // namespace asfm::geom
