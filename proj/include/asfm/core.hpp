#pragma once

// Core value types shared by every module: 3D vectors, point clouds and the
// exception types thrown across the library.

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace asfm {

struct Vec3 {
  double x = 0.0, y = 0.0, z = 0.0;

  double& operator[](int i) { return i == 0 ? x : (i == 1 ? y : z); }
  double operator[](int i) const { return i == 0 ? x : (i == 1 ? y : z); }

  Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
  Vec3& operator+=(const Vec3& o) {
    x += o.x;
    y += o.y;
    z += o.z;
    return *this;
  }
  bool operator==(const Vec3& o) const { return x == o.x && y == o.y && z == o.z; }
};

inline double dot(const Vec3& a, const Vec3& b) { return a.x * b.x + a.y * b.y + a.z * b.z; }

inline double sqdist(const Vec3& a, const Vec3& b) {
  const double dx = a.x - b.x, dy = a.y - b.y, dz = a.z - b.z;
  return dx * dx + dy * dy + dz * dz;
}

inline double norm(const Vec3& a) { return std::sqrt(dot(a, a)); }

inline bool finite(const Vec3& a) {
  return std::isfinite(a.x) && std::isfinite(a.y) && std::isfinite(a.z);
}

// Ordered set of 3D points in unitless model space. Operations that consume a
// cloud require at least one point and finite coordinates.
struct PointCloud {
  std::vector<Vec3> points;
  std::optional<std::string> category;
  std::optional<int> frame_id;

  PointCloud() = default;
  explicit PointCloud(std::vector<Vec3> pts) : points(std::move(pts)) {}

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
  Vec3& operator[](std::size_t i) { return points[i]; }
  const Vec3& operator[](std::size_t i) const { return points[i]; }
};

inline void require_valid(const PointCloud& c, const char* what) {
  if (c.empty()) throw std::invalid_argument(std::string(what) + ": empty point cloud");
  for (const Vec3& p : c.points)
    if (!finite(p)) throw std::invalid_argument(std::string(what) + ": non-finite coordinate");
}

// Thrown when an operation is invoked in a state its contract forbids
// (missing gradients, violated freeze contract, resolution mismatch, ...).
class state_error : public std::runtime_error {
 public:
  explicit state_error(const std::string& msg) : std::runtime_error(msg) {}
};

// Thrown by file readers; carries the offending line where applicable.
class parse_error : public std::runtime_error {
 public:
  explicit parse_error(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace asfm
