#pragma once

// Procedural shape generation with controlled occlusion, dataset assembly and
// point-cloud file I/O. Everything is seeded: instance i draws from a stream
// derived from the master seed by instance id, so generation is reproducible
// bit-for-bit and parallelizable over instances.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "asfm/config.hpp"
#include "asfm/core.hpp"
#include "asfm/geom.hpp"
#include "asfm/parallel.hpp"
#include "asfm/rng.hpp"

namespace asfm::data {

// ---- shape specs ------------------------------------------------------------------

enum class PrimitiveKind { Sphere, Cuboid, Cylinder, Composite };

inline PrimitiveKind kind_from_string(const std::string& s) {
  if (s == "sphere") return PrimitiveKind::Sphere;
  if (s == "cuboid") return PrimitiveKind::Cuboid;
  if (s == "cylinder") return PrimitiveKind::Cylinder;
  if (s == "composite") return PrimitiveKind::Composite;
  throw std::invalid_argument("unknown shape category: " + s);
}

struct ShapeSpec {
  PrimitiveKind kind = PrimitiveKind::Sphere;
  std::uint64_t seed = 0;
  int n_points = 256;
  double radius = 1.0;           // sphere
  Vec3 half_extents{1, 1, 1};    // cuboid
  double cyl_radius = 0.5;       // cylinder
  double cyl_half_height = 1.0;  // cylinder
  // composite (lamp-like stack: cuboid base, cylinder stem, sphere cap)
  double comp_base_halfwidth = 0.45;
  double comp_base_thickness = 0.12;
  double comp_stem_radius = 0.12;
  double comp_cap_radius = 0.3;

  void validate() const {
    if (n_points < 64) throw std::invalid_argument("ShapeSpec: n_points must be >= 64");
    if (radius <= 0 || cyl_radius <= 0 || cyl_half_height <= 0 || comp_base_halfwidth <= 0 ||
        comp_base_thickness <= 0 || comp_stem_radius <= 0 || comp_cap_radius <= 0 ||
        half_extents.x <= 0 || half_extents.y <= 0 || half_extents.z <= 0)
      throw std::invalid_argument("ShapeSpec: non-positive dimension");
  }

  // Seeded random proportions for dataset variety; geometry parameters come
  // from the instance stream, never from global state.
  static ShapeSpec random(PrimitiveKind kind, std::uint64_t seed, int n_points) {
    ShapeSpec s;
    s.kind = kind;
    s.seed = seed;
    s.n_points = n_points;
    Rng rng(Rng::derive(seed, 0xC0FFEE));
    switch (kind) {
      case PrimitiveKind::Sphere:
        s.radius = rng.uniform(0.6, 1.0);
        break;
      case PrimitiveKind::Cuboid:
        s.half_extents = {rng.uniform(0.3, 1.0), rng.uniform(0.3, 1.0), rng.uniform(0.3, 1.0)};
        break;
      case PrimitiveKind::Cylinder:
        s.cyl_radius = rng.uniform(0.2, 0.7);
        s.cyl_half_height = rng.uniform(0.4, 1.0);
        break;
      case PrimitiveKind::Composite:
        s.comp_base_halfwidth = rng.uniform(0.3, 0.6);
        s.comp_base_thickness = rng.uniform(0.08, 0.18);
        s.comp_stem_radius = rng.uniform(0.08, 0.2);
        s.comp_cap_radius = rng.uniform(0.2, 0.4);
        break;
    }
    return s;
  }
};

namespace detail {

inline Vec3 unit_direction(Rng& rng) {
  // normalized Gaussian triple; rejection guards the vanishing-norm corner
  while (true) {
    Vec3 d{rng.normal(), rng.normal(), rng.normal()};
    const double n = norm(d);
    if (n > 1e-9) return d * (1.0 / n);
  }
}

inline Vec3 sample_sphere(Rng& rng, double r, const Vec3& center = {0, 0, 0}) {
  return center + unit_direction(rng) * r;
}

inline Vec3 sample_cuboid(Rng& rng, const Vec3& h, const Vec3& center = {0, 0, 0}) {
  const double ax = h.y * h.z, ay = h.x * h.z, az = h.x * h.y;  // face-pair areas (scaled)
  const double total = ax + ay + az;
  const double pick = rng.uniform(0.0, total);
  const double sign = rng.uniform() < 0.5 ? -1.0 : 1.0;
  Vec3 p{rng.uniform(-h.x, h.x), rng.uniform(-h.y, h.y), rng.uniform(-h.z, h.z)};
  if (pick < ax)
    p.x = sign * h.x;
  else if (pick < ax + ay)
    p.y = sign * h.y;
  else
    p.z = sign * h.z;
  return center + p;
}

inline Vec3 sample_cylinder(Rng& rng, double r, double hh, const Vec3& center = {0, 0, 0}) {
  const double lateral = 2.0 * 3.14159265358979323846 * r * (2.0 * hh);
  const double caps = 2.0 * 3.14159265358979323846 * r * r;
  Vec3 p;
  if (rng.uniform(0.0, lateral + caps) < lateral) {
    const double theta = rng.uniform(0.0, 2.0 * 3.14159265358979323846);
    p = {r * std::cos(theta), r * std::sin(theta), rng.uniform(-hh, hh)};
  } else {
    const double theta = rng.uniform(0.0, 2.0 * 3.14159265358979323846);
    const double rr = r * std::sqrt(rng.uniform());
    const double z = rng.uniform() < 0.5 ? -hh : hh;
    p = {rr * std::cos(theta), rr * std::sin(theta), z};
  }
  return center + p;
}

}  // namespace detail

// N points uniformly sampled on the primitive surface, centered at the origin
// by construction and uniformly scaled so the farthest point sits on the unit
// sphere.
inline PointCloud gen_shape(const ShapeSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  PointCloud c;
  c.points.reserve(static_cast<std::size_t>(spec.n_points));

  switch (spec.kind) {
    case PrimitiveKind::Sphere: {
      for (int i = 0; i < spec.n_points; ++i)
        c.points.push_back(detail::sample_sphere(rng, spec.radius));
      c.category = "sphere";
      break;
    }
    case PrimitiveKind::Cuboid: {
      for (int i = 0; i < spec.n_points; ++i)
        c.points.push_back(detail::sample_cuboid(rng, spec.half_extents));
      c.category = "cuboid";
      break;
    }
    case PrimitiveKind::Cylinder: {
      for (int i = 0; i < spec.n_points; ++i)
        c.points.push_back(detail::sample_cylinder(rng, spec.cyl_radius, spec.cyl_half_height));
      c.category = "cylinder";
      break;
    }
    case PrimitiveKind::Composite: {
      // stack spans z in [-H, H] with H chosen so the bbox is origin-centered
      const double H = 1.0;
      const double tb = spec.comp_base_thickness;
      const double rc = spec.comp_cap_radius;
      const Vec3 base_half{spec.comp_base_halfwidth, spec.comp_base_halfwidth, tb};
      const Vec3 base_center{0, 0, -H + tb};
      const double stem_lo = -H + 2.0 * tb, stem_hi = H - 2.0 * rc;
      const double stem_hh = std::max(0.05, (stem_hi - stem_lo) / 2.0);
      const Vec3 stem_center{0, 0, (stem_lo + stem_hi) / 2.0};
      const Vec3 cap_center{0, 0, H - rc};

      const double pi = 3.14159265358979323846;
      const double a_base =
          8.0 * (base_half.x * base_half.y + base_half.x * tb + base_half.y * tb);
      const double a_stem = 2.0 * pi * spec.comp_stem_radius * (2.0 * stem_hh);
      const double a_cap = 4.0 * pi * rc * rc;
      const double total = a_base + a_stem + a_cap;
      for (int i = 0; i < spec.n_points; ++i) {
        const double pick = rng.uniform(0.0, total);
        if (pick < a_base)
          c.points.push_back(detail::sample_cuboid(rng, base_half, base_center));
        else if (pick < a_base + a_stem)
          c.points.push_back(
              detail::sample_cylinder(rng, spec.comp_stem_radius, stem_hh, stem_center));
        else
          c.points.push_back(detail::sample_sphere(rng, rc, cap_center));
      }
      c.category = "composite";
      break;
    }
  }

  double max_n = 0.0;
  for (const Vec3& p : c.points) max_n = std::max(max_n, norm(p));
  const double s = 1.0 / max_n;
  for (Vec3& p : c.points) p = p * s;
  return c;
}

// ---- occlusion --------------------------------------------------------------------

// Keeps the round(visible_ratio * N) points nearest to the viewpoint — the
// spherical visibility region grown until the count is met. At least one
// point always survives. Output preserves input order (a strict subset).
inline PointCloud occlude(const PointCloud& complete, double visible_ratio,
                          const Vec3& viewpoint) {
  require_valid(complete, "occlude");
  if (!(visible_ratio > 0.0) || visible_ratio > 1.0)
    throw std::invalid_argument("occlude: visible_ratio must be in (0, 1]");
  const std::size_t n = complete.size();
  std::size_t keep = static_cast<std::size_t>(
      std::llround(visible_ratio * static_cast<double>(n)));
  keep = std::min(n, std::max<std::size_t>(1, keep));

  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    const double da = sqdist(complete[a], viewpoint), db = sqdist(complete[b], viewpoint);
    if (da != db) return da < db;
    return a < b;
  });
  idx.resize(keep);
  std::sort(idx.begin(), idx.end());

  PointCloud out;
  out.points.reserve(keep);
  for (std::size_t i : idx) out.points.push_back(complete[i]);
  out.category = complete.category;
  out.frame_id = complete.frame_id;
  return out;
}

// ---- dataset assembly -------------------------------------------------------------

struct SamplePair {
  PointCloud partial;
  PointCloud complete;
  std::string category;
  double visible_ratio = 0.5;
  int instance_id = 0;
  int frame_id = 0;
  Vec3 viewpoint{0, 0, 2};
  std::uint64_t shape_seed = 0;
};

struct DataConfig {
  enum class Mode { C3D, PCN };
  Mode mode = Mode::C3D;
  std::vector<std::string> categories = {"sphere", "cuboid", "cylinder", "composite"};
  int shapes_per_category = 8;
  int points_complete = 256;
  double visible_ratio = 0.5;      // used when min == max == 0
  double visible_ratio_min = 0.0;  // optional per-pair ratio range
  double visible_ratio_max = 0.0;
  std::uint64_t seed = 42;
  double train_frac = 0.8;
  double val_frac = 0.1;
  int frames_per_instance = 1;  // > 1 simulates consecutive frames (10 deg viewpoint steps)
  double jitter = 0.0;          // optional uniform jitter on partials

  bool has_ratio_range() const { return visible_ratio_min > 0.0 || visible_ratio_max > 0.0; }

  void validate() const {
    if (categories.empty()) throw std::invalid_argument("data: no categories");
    for (const std::string& c : categories) kind_from_string(c);
    if (shapes_per_category < 1) throw std::invalid_argument("data: shapes_per_category >= 1");
    if (points_complete < 64) throw std::invalid_argument("data: points_complete must be >= 64");
    if (!(visible_ratio > 0.0) || visible_ratio > 1.0)
      throw std::invalid_argument("data: visible_ratio must be in (0, 1]");
    if (has_ratio_range()) {
      if (!(visible_ratio_min > 0.0) || visible_ratio_min > visible_ratio_max ||
          visible_ratio_max > 1.0)
        throw std::invalid_argument(
            "data: visible_ratio_min/max must satisfy 0 < min <= max <= 1");
    }
    if (train_frac < 0 || val_frac < 0 || train_frac + val_frac > 1.0)
      throw std::invalid_argument("data: split fractions must be non-negative and sum <= 1");
    if (frames_per_instance < 1) throw std::invalid_argument("data: frames_per_instance >= 1");
    if (jitter < 0) throw std::invalid_argument("data: jitter must be >= 0");
  }

  static DataConfig from_config(const cfg::Config& c) {
    DataConfig d;
    const std::string mode = c.get_string("data.mode", "c3d");
    if (mode == "c3d")
      d.mode = Mode::C3D;
    else if (mode == "pcn")
      d.mode = Mode::PCN;
    else
      throw std::invalid_argument("data.mode must be c3d or pcn, got " + mode);
    d.categories = c.get_list("data.categories", d.categories);
    d.shapes_per_category =
        static_cast<int>(c.get_int("data.shapes_per_category", d.shapes_per_category));
    d.points_complete = static_cast<int>(c.get_int("data.points_complete", d.points_complete));
    d.visible_ratio = c.get_double("data.visible_ratio", d.visible_ratio);
    d.visible_ratio_min = c.get_double("data.visible_ratio_min", d.visible_ratio_min);
    d.visible_ratio_max = c.get_double("data.visible_ratio_max", d.visible_ratio_max);
    d.seed = static_cast<std::uint64_t>(c.get_int("data.seed", static_cast<std::int64_t>(d.seed)));
    d.train_frac = c.get_double("data.train_frac", d.train_frac);
    d.val_frac = c.get_double("data.val_frac", d.val_frac);
    d.frames_per_instance =
        static_cast<int>(c.get_int("data.frames_per_instance", d.frames_per_instance));
    d.jitter = c.get_double("data.jitter", d.jitter);
    d.validate();
    return d;
  }

  cfg::Config to_config() const {
    cfg::Config c;
    c.set("data.mode", mode == Mode::C3D ? "c3d" : "pcn");
    std::string cats;
    for (std::size_t i = 0; i < categories.size(); ++i) cats += (i ? "," : "") + categories[i];
    c.set("data.categories", cats);
    c.set("data.shapes_per_category", std::to_string(shapes_per_category));
    c.set("data.points_complete", std::to_string(points_complete));
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", visible_ratio);
    c.set("data.visible_ratio", buf);
    if (has_ratio_range()) {
      std::snprintf(buf, sizeof(buf), "%.17g", visible_ratio_min);
      c.set("data.visible_ratio_min", buf);
      std::snprintf(buf, sizeof(buf), "%.17g", visible_ratio_max);
      c.set("data.visible_ratio_max", buf);
    }
    c.set("data.seed", std::to_string(seed));
    std::snprintf(buf, sizeof(buf), "%.17g", train_frac);
    c.set("data.train_frac", buf);
    std::snprintf(buf, sizeof(buf), "%.17g", val_frac);
    c.set("data.val_frac", buf);
    c.set("data.frames_per_instance", std::to_string(frames_per_instance));
    std::snprintf(buf, sizeof(buf), "%.17g", jitter);
    c.set("data.jitter", buf);
    return c;
  }
};

struct Dataset {
  std::vector<SamplePair> train, val, test;
  DataConfig config;

  const std::vector<SamplePair>& split(const std::string& name) const {
    if (name == "train") return train;
    if (name == "val") return val;
    if (name == "test") return test;
    throw std::invalid_argument("unknown split: " + name);
  }
};

namespace detail {

inline Vec3 rotate_z(const Vec3& p, double angle_rad) {
  const double c = std::cos(angle_rad), s = std::sin(angle_rad);
  return {c * p.x - s * p.y, s * p.x + c * p.y, p.z};
}

// Fixed cube-corner directions at distance 2 (PCN-mode pairing).
inline std::vector<Vec3> pcn_viewpoints() {
  std::vector<Vec3> v;
  const double s = 2.0 / std::sqrt(3.0);
  for (int sx : {-1, 1})
    for (int sy : {-1, 1})
      for (int sz : {-1, 1}) v.push_back({s * sx, s * sy, s * sz});
  return v;
}

}  // namespace detail

// All sample pairs of one instance: one viewpoint per PCN corner (or a single
// seeded viewpoint in C3D mode), each rotated in 10-degree steps around z for
// consecutive-frame simulation.
inline std::vector<SamplePair> make_instance_pairs(const DataConfig& cfg,
                                                   const std::string& category,
                                                   int instance_id) {
  const std::uint64_t instance_seed = Rng::derive(cfg.seed, static_cast<std::uint64_t>(instance_id));
  const ShapeSpec spec =
      ShapeSpec::random(kind_from_string(category), instance_seed, cfg.points_complete);
  const PointCloud complete = gen_shape(spec);

  std::vector<Vec3> viewpoints;
  if (cfg.mode == DataConfig::Mode::PCN) {
    viewpoints = detail::pcn_viewpoints();
  } else {
    Rng vp_rng(Rng::derive(instance_seed, 0x71EF));
    viewpoints = {detail::unit_direction(vp_rng) * 2.0};
  }

  Rng jitter_rng(Rng::derive(instance_seed, 0x1177));
  Rng ratio_rng(Rng::derive(instance_seed, 0x8A7E));
  std::vector<SamplePair> pairs;
  int frame = 0;
  for (const Vec3& base_vp : viewpoints) {
    for (int f = 0; f < cfg.frames_per_instance; ++f, ++frame) {
      const Vec3 vp = detail::rotate_z(base_vp, f * (10.0 * 3.14159265358979323846 / 180.0));
      const double ratio = cfg.has_ratio_range()
                               ? ratio_rng.uniform(cfg.visible_ratio_min, cfg.visible_ratio_max)
                               : cfg.visible_ratio;
      SamplePair p;
      p.complete = complete;
      p.partial = occlude(complete, ratio, vp);
      if (cfg.jitter > 0.0)
        for (Vec3& pt : p.partial.points)
          pt += {jitter_rng.uniform(-cfg.jitter, cfg.jitter),
                 jitter_rng.uniform(-cfg.jitter, cfg.jitter),
                 jitter_rng.uniform(-cfg.jitter, cfg.jitter)};
      p.category = category;
      p.visible_ratio = ratio;
      p.instance_id = instance_id;
      p.frame_id = frame;
      p.viewpoint = vp;
      p.shape_seed = instance_seed;
      p.partial.category = category;
      p.complete.category = category;
      p.partial.frame_id = frame;
      pairs.push_back(std::move(p));
    }
  }
  return pairs;
}

// Disjoint train/val/test splits by instance id; PCN mode emits 8 partials
// per complete, C3D mode emits one.
inline Dataset make_dataset(const DataConfig& cfg) {
  cfg.validate();
  Dataset ds;
  ds.config = cfg;
  const int per_cat = cfg.shapes_per_category;
  const int n_train = static_cast<int>(std::llround(cfg.train_frac * per_cat));
  const int n_val = static_cast<int>(std::llround(cfg.val_frac * per_cat));

  const std::size_t total =
      cfg.categories.size() * static_cast<std::size_t>(per_cat);
  std::vector<std::vector<SamplePair>> generated(total);
  par::parallel_for(total, [&](std::size_t i) {
    const std::size_t ci = i / static_cast<std::size_t>(per_cat);
    generated[i] = make_instance_pairs(cfg, cfg.categories[ci], static_cast<int>(i));
  });

  for (std::size_t i = 0; i < total; ++i) {
    const int within = static_cast<int>(i % static_cast<std::size_t>(per_cat));
    auto& dst = within < n_train ? ds.train : (within < n_train + n_val ? ds.val : ds.test);
    for (SamplePair& p : generated[i]) dst.push_back(std::move(p));
  }
  return ds;
}

// ---- xyz file I/O -----------------------------------------------------------------

// Text: one "x y z" triple per line, 9 significant digits.
inline void write_xyz(const std::string& path, const PointCloud& cloud) {
  require_valid(cloud, "write_xyz");
  std::ofstream out(path);
  if (!out) throw state_error("cannot write " + path);
  char buf[128];
  for (const Vec3& p : cloud.points) {
    std::snprintf(buf, sizeof(buf), "%.9g %.9g %.9g\n", p.x, p.y, p.z);
    out << buf;
  }
  if (!out) throw state_error("write failed: " + path);
}

inline PointCloud read_xyz(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw parse_error("cannot open " + path);
  PointCloud c;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = cfg::trim(line);
    if (t.empty()) continue;
    std::istringstream ss(t);
    Vec3 p;
    std::string extra;
    if (!(ss >> p.x >> p.y >> p.z) || (ss >> extra))
      throw parse_error(path + ":" + std::to_string(lineno) + ": malformed line: " + t);
    if (!finite(p))
      throw parse_error(path + ":" + std::to_string(lineno) + ": non-finite coordinate");
    c.points.push_back(p);
  }
  if (c.empty()) throw parse_error(path + ": no points");
  return c;
}

// Binary: 16-byte header (8-byte magic, u32 version, u32 count) followed by
// count little-endian float32 triples.
inline void write_xyzb(const std::string& path, const PointCloud& cloud) {
  require_valid(cloud, "write_xyzb");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw state_error("cannot write " + path);
  out.write("ASFMXYZ1", 8);
  const std::uint32_t version = 1;
  const std::uint32_t count = static_cast<std::uint32_t>(cloud.size());
  out.write(reinterpret_cast<const char*>(&version), 4);
  out.write(reinterpret_cast<const char*>(&count), 4);
  for (const Vec3& p : cloud.points) {
    const float f[3] = {static_cast<float>(p.x), static_cast<float>(p.y),
                        static_cast<float>(p.z)};
    out.write(reinterpret_cast<const char*>(f), sizeof(f));
  }
  if (!out) throw state_error("write failed: " + path);
}

inline PointCloud read_xyzb(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw parse_error("cannot open " + path);
  char magic[8];
  if (!in.read(magic, 8) || std::string(magic, 8) != "ASFMXYZ1")
    throw parse_error(path + ": bad magic");
  std::uint32_t version = 0, count = 0;
  if (!in.read(reinterpret_cast<char*>(&version), 4) ||
      !in.read(reinterpret_cast<char*>(&count), 4))
    throw parse_error(path + ": truncated header");
  if (version != 1) throw parse_error(path + ": unsupported version");
  if (count == 0) throw parse_error(path + ": no points");
  PointCloud c;
  c.points.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    float f[3];
    if (!in.read(reinterpret_cast<char*>(f), sizeof(f)))
      throw parse_error(path + ": truncated at record " + std::to_string(i));
    const Vec3 p{f[0], f[1], f[2]};
    if (!finite(p)) throw parse_error(path + ": non-finite coordinate at record " +
                                      std::to_string(i));
    c.points.push_back(p);
  }
  return c;
}

// ---- on-disk dataset layout --------------------------------------------------------
//
//   <root>/<split>/<category>/<iiii>_<ff>.partial.xyz
//   <root>/<split>/<category>/<iiii>_00.complete.xyz   (one per instance)
//   <root>/manifest.json

namespace detail {

inline std::string pair_stem(int instance_id, int frame_id) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%04d_%02d", instance_id, frame_id);
  return buf;
}

}  // namespace detail

inline void write_dataset(const std::string& root, const Dataset& ds) {
  namespace fs = std::filesystem;
  nlohmann::json pairs = nlohmann::json::array();
  for (const std::string split : {"train", "val", "test"}) {
    std::vector<bool> complete_written;  // indexed lazily by instance id
    for (const SamplePair& p : ds.split(split)) {
      const fs::path dir = fs::path(root) / split / p.category;
      fs::create_directories(dir);
      const std::string stem = detail::pair_stem(p.instance_id, p.frame_id);
      const std::string partial_rel =
          split + "/" + p.category + "/" + stem + ".partial.xyz";
      const std::string complete_rel = split + "/" + p.category + "/" +
                                       detail::pair_stem(p.instance_id, 0) + ".complete.xyz";
      write_xyz((fs::path(root) / partial_rel).string(), p.partial);
      if (static_cast<std::size_t>(p.instance_id) >= complete_written.size())
        complete_written.resize(static_cast<std::size_t>(p.instance_id) + 1, false);
      if (!complete_written[static_cast<std::size_t>(p.instance_id)]) {
        write_xyz((fs::path(root) / complete_rel).string(), p.complete);
        complete_written[static_cast<std::size_t>(p.instance_id)] = true;
      }
      nlohmann::json j;
      j["split"] = split;
      j["category"] = p.category;
      j["instance_id"] = p.instance_id;
      j["frame_id"] = p.frame_id;
      j["visible_ratio"] = p.visible_ratio;
      j["viewpoint"] = {p.viewpoint.x, p.viewpoint.y, p.viewpoint.z};
      j["shape_seed"] = p.shape_seed;
      j["partial"] = partial_rel;
      j["complete"] = complete_rel;
      j["n_partial"] = p.partial.size();
      j["n_complete"] = p.complete.size();
      pairs.push_back(std::move(j));
    }
  }
  nlohmann::json manifest;
  manifest["format"] = "asfm-dataset";
  manifest["version"] = 1;
  manifest["seed"] = ds.config.seed;
  manifest["mode"] = ds.config.mode == DataConfig::Mode::C3D ? "c3d" : "pcn";
  manifest["points_complete"] = ds.config.points_complete;
  manifest["visible_ratio"] = ds.config.visible_ratio;
  manifest["frames_per_instance"] = ds.config.frames_per_instance;
  manifest["pairs"] = std::move(pairs);
  std::ofstream out(std::filesystem::path(root) / "manifest.json");
  if (!out) throw state_error("cannot write manifest under " + root);
  out << manifest.dump(2) << "\n";
}

inline Dataset load_dataset(const std::string& root) {
  namespace fs = std::filesystem;
  std::ifstream in(fs::path(root) / "manifest.json");
  if (!in) throw parse_error("cannot open manifest: " + root + "/manifest.json");
  nlohmann::json manifest;
  try {
    in >> manifest;
  } catch (const std::exception& e) {
    throw parse_error(std::string("manifest parse failure: ") + e.what());
  }
  if (manifest.value("format", "") != "asfm-dataset")
    throw parse_error(root + ": not an asfm dataset manifest");

  Dataset ds;
  ds.config.seed = manifest.value("seed", 0ULL);
  ds.config.points_complete = manifest.value("points_complete", 0);
  ds.config.visible_ratio = manifest.value("visible_ratio", 0.5);
  ds.config.frames_per_instance = manifest.value("frames_per_instance", 1);
  ds.config.mode =
      manifest.value("mode", "c3d") == "pcn" ? DataConfig::Mode::PCN : DataConfig::Mode::C3D;
  ds.config.categories.clear();

  for (const auto& j : manifest.at("pairs")) {
    SamplePair p;
    p.category = j.at("category").get<std::string>();
    p.instance_id = j.at("instance_id").get<int>();
    p.frame_id = j.at("frame_id").get<int>();
    p.visible_ratio = j.at("visible_ratio").get<double>();
    const auto& vp = j.at("viewpoint");
    p.viewpoint = {vp.at(0).get<double>(), vp.at(1).get<double>(), vp.at(2).get<double>()};
    p.shape_seed = j.at("shape_seed").get<std::uint64_t>();
    p.partial = read_xyz((fs::path(root) / j.at("partial").get<std::string>()).string());
    p.complete = read_xyz((fs::path(root) / j.at("complete").get<std::string>()).string());
    p.partial.category = p.category;
    p.complete.category = p.category;
    p.partial.frame_id = p.frame_id;
    const std::string split = j.at("split").get<std::string>();
    if (std::find(ds.config.categories.begin(), ds.config.categories.end(), p.category) ==
        ds.config.categories.end())
      ds.config.categories.push_back(p.category);
    if (split == "train")
      ds.train.push_back(std::move(p));
    else if (split == "val")
      ds.val.push_back(std::move(p));
    else if (split == "test")
      ds.test.push_back(std::move(p));
    else
      throw parse_error(root + ": unknown split in manifest: " + split);
  }
  return ds;
}

}  // namespace asfm::data
