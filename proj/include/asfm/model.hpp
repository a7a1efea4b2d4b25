#pragma once

// Network assembly. The encoder is PCN-style: a per-point MLP, max-pool to a
// global feature, global feature concatenated back onto every point, a second
// per-point MLP, and a final max-pool producing the codeword. The coarse
// decoder is a dense stack reshaped to points. The refinement unit predicts
// per-point coordinate residuals from (xyz, 2D grid coords, codeword) through
// a contracting/expanding MLP whose final layer starts at zero, so the
// pipeline begins as the identity on its synthetic input:
//   fine = R(synthetic) + synthetic.

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "asfm/autodiff.hpp"
#include "asfm/config.hpp"
#include "asfm/core.hpp"
#include "asfm/geom.hpp"
#include "asfm/optim.hpp"
#include "asfm/rng.hpp"

namespace asfm::model {

struct ModelConfig {
  int codeword = 1024;
  std::vector<int> encoder_point_widths = {128, 256};
  std::vector<int> encoder_global_widths = {512, 1024};  // last entry == codeword
  std::vector<int> decoder_hidden = {1024, 1024};
  int coarse_points = 512;
  int refine_iterations = 2;  // target resolution = coarse_points * 2^iterations
  std::vector<int> refiner_widths = {512, 256, 128, 64, 128, 256, 512};
  double grid_extent = 0.05;
  std::string mirror_plane = "xy";
  bool without_refine = false;

  int target_resolution() const { return coarse_points << refine_iterations; }

  void validate() const {
    if (codeword < 1) throw std::invalid_argument("model: codeword length must be >= 1");
    if (encoder_point_widths.empty() || encoder_global_widths.empty())
      throw std::invalid_argument("model: encoder widths must be non-empty");
    if (encoder_global_widths.back() != codeword)
      throw std::invalid_argument("model: last encoder global width must equal codeword length");
    if (decoder_hidden.empty()) throw std::invalid_argument("model: decoder hidden widths empty");
    if (coarse_points < 1) throw std::invalid_argument("model: coarse_points must be >= 1");
    if (refine_iterations < 0) throw std::invalid_argument("model: refine_iterations must be >= 0");
    if (refiner_widths.empty()) throw std::invalid_argument("model: refiner widths empty");
    if (!(grid_extent > 0)) throw std::invalid_argument("model: grid_extent must be positive");
    if (without_refine && refine_iterations != 0)
      throw std::invalid_argument("model: without_refine requires refine_iterations = 0");
    geom::plane_from_string(mirror_plane);
  }

  static ModelConfig from_config(const cfg::Config& c) {
    ModelConfig m;
    m.codeword = static_cast<int>(c.get_int("model.codeword", m.codeword));
    m.encoder_point_widths = c.get_int_list("model.encoder_point_widths", m.encoder_point_widths);
    m.encoder_global_widths =
        c.get_int_list("model.encoder_global_widths", m.encoder_global_widths);
    m.decoder_hidden = c.get_int_list("model.decoder_hidden", m.decoder_hidden);
    m.coarse_points = static_cast<int>(c.get_int("model.coarse_points", m.coarse_points));
    m.refine_iterations =
        static_cast<int>(c.get_int("model.refine_iterations", m.refine_iterations));
    m.refiner_widths = c.get_int_list("model.refiner_widths", m.refiner_widths);
    m.grid_extent = c.get_double("model.grid_extent", m.grid_extent);
    m.mirror_plane = c.get_string("model.mirror_plane", m.mirror_plane);
    m.without_refine = c.get_bool("model.without_refine", m.without_refine);
    m.validate();
    return m;
  }

  cfg::Config to_config() const {
    auto join = [](const std::vector<int>& v) {
      std::string s;
      for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
      return s;
    };
    cfg::Config c;
    c.set("model.codeword", std::to_string(codeword));
    c.set("model.encoder_point_widths", join(encoder_point_widths));
    c.set("model.encoder_global_widths", join(encoder_global_widths));
    c.set("model.decoder_hidden", join(decoder_hidden));
    c.set("model.coarse_points", std::to_string(coarse_points));
    c.set("model.refine_iterations", std::to_string(refine_iterations));
    c.set("model.refiner_widths", join(refiner_widths));
    c.set("model.grid_extent", std::to_string(grid_extent));
    c.set("model.mirror_plane", mirror_plane);
    c.set("model.without_refine", without_refine ? "true" : "false");
    return c;
  }
};

// ---- cloud <-> tensor ---------------------------------------------------------

inline ad::Tensor to_tensor2(const PointCloud& c) {
  require_valid(c, "to_tensor2");
  ad::Tensor t = ad::Tensor::zeros({static_cast<std::int64_t>(c.size()), 3});
  for (std::size_t i = 0; i < c.size(); ++i) {
    t.at(static_cast<std::int64_t>(i) * 3) = c[i].x;
    t.at(static_cast<std::int64_t>(i) * 3 + 1) = c[i].y;
    t.at(static_cast<std::int64_t>(i) * 3 + 2) = c[i].z;
  }
  return t;
}

inline PointCloud to_cloud(const ad::Tensor& t) {
  std::int64_t n = 0;
  if (t.rank() == 2 && t.dim(1) == 3) {
    n = t.dim(0);
  } else if (t.rank() == 3 && t.dim(0) == 1 && t.dim(2) == 3) {
    n = t.dim(1);
  } else {
    throw std::invalid_argument("to_cloud: expected [N,3] or [1,N,3], got " + t.shape_str());
  }
  PointCloud c;
  c.points.reserve(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i)
    c.points.push_back({t.at(i * 3), t.at(i * 3 + 1), t.at(i * 3 + 2)});
  return c;
}

// ---- parameter initialization ---------------------------------------------------

namespace detail {

inline ad::Tensor uniform_fan_in(Rng& rng, std::vector<std::int64_t> shape,
                                 std::int64_t fan_in) {
  ad::Tensor w = ad::Tensor::zeros(std::move(shape));
  const double s = 1.0 / std::sqrt(static_cast<double>(fan_in));
  for (double& x : w.v) x = rng.uniform(-s, s);
  return w;
}

// Weights and biases both draw from U(-1/sqrt(fan_in), +1/sqrt(fan_in)). A
// nonzero bias keeps rectifier pre-activations off the exact kink, where the
// subgradient is ill-defined.
inline void add_dense(ad::ModelParams& params, const std::string& name, std::int64_t in,
                      std::int64_t out, Rng& rng, bool zero = false) {
  params.add(name + "/w",
             zero ? ad::Tensor::zeros({in, out}) : uniform_fan_in(rng, {in, out}, in));
  params.add(name + "/b", zero ? ad::Tensor::zeros({out}) : uniform_fan_in(rng, {out}, in));
}

inline std::vector<ad::DenseLayer> stack_of(const ad::ModelParams& params,
                                            const std::string& prefix, std::size_t count,
                                            bool last_activated) {
  std::vector<ad::DenseLayer> layers;
  for (std::size_t i = 0; i < count; ++i) {
    const std::string name = prefix + "/l" + std::to_string(i);
    const bool act = last_activated || i + 1 < count;
    layers.push_back({params.get(name + "/w"), params.get(name + "/b"), act});
  }
  return layers;
}

}  // namespace detail

inline void init_encoder(ad::ModelParams& params, const std::string& prefix,
                         const ModelConfig& cfg, Rng& rng) {
  std::int64_t in = 3;
  for (std::size_t i = 0; i < cfg.encoder_point_widths.size(); ++i) {
    detail::add_dense(params, prefix + "/point/l" + std::to_string(i), in,
                      cfg.encoder_point_widths[i], rng);
    in = cfg.encoder_point_widths[i];
  }
  in = 2 * cfg.encoder_point_widths.back();  // per-point feature + tiled global
  for (std::size_t i = 0; i < cfg.encoder_global_widths.size(); ++i) {
    detail::add_dense(params, prefix + "/global/l" + std::to_string(i), in,
                      cfg.encoder_global_widths[i], rng);
    in = cfg.encoder_global_widths[i];
  }
}

inline void init_decoder(ad::ModelParams& params, const std::string& prefix,
                         const ModelConfig& cfg, Rng& rng) {
  std::int64_t in = cfg.codeword;
  std::size_t li = 0;
  for (int w : cfg.decoder_hidden) {
    detail::add_dense(params, prefix + "/l" + std::to_string(li++), in, w, rng);
    in = w;
  }
  detail::add_dense(params, prefix + "/l" + std::to_string(li), in,
                    static_cast<std::int64_t>(cfg.coarse_points) * 3, rng);
}

inline void init_refiner(ad::ModelParams& params, const std::string& prefix,
                         const ModelConfig& cfg, Rng& rng) {
  std::int64_t in = 3 + 2 + cfg.codeword;
  std::size_t li = 0;
  for (int w : cfg.refiner_widths) {
    detail::add_dense(params, prefix + "/l" + std::to_string(li++), in, w, rng);
    in = w;
  }
  // zero start: the refinement unit begins as the identity
  detail::add_dense(params, prefix + "/l" + std::to_string(li), in, 3, rng, /*zero=*/true);
}

// Full parameter set: AE1 encoder+decoder, AE2 encoder, refinement unit.
// AE2 reuses AE1's decoder (there is no ae2/dec).
inline ad::ModelParams init_model(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  ad::ModelParams params;
  Rng r1(Rng::derive(seed, 1)), r2(Rng::derive(seed, 2)), r3(Rng::derive(seed, 3)),
      r4(Rng::derive(seed, 4));
  init_encoder(params, "ae1/enc", cfg, r1);
  init_decoder(params, "ae1/dec", cfg, r2);
  init_encoder(params, "ae2/enc", cfg, r3);
  init_refiner(params, "refiner", cfg, r4);
  return params;
}

// Re-seed AE2's encoder from AE1's (used by the degenerate stage-2 check and
// available as a training option).
inline void copy_encoder(ad::ModelParams& params, const std::string& from,
                         const std::string& to) {
  for (const auto& [name, var] : params.all()) {
    if (name.rfind(from, 0) != 0) continue;
    const std::string target = to + name.substr(from.size());
    params.get(target)->val = var->val;
  }
}

// ---- forward passes --------------------------------------------------------------

// Permutation-invariant codeword of shape [1, codeword].
inline ad::VarPtr encode(const ad::VarPtr& points, const ad::ModelParams& params,
                         const std::string& branch, const ModelConfig& cfg) {
  if (points->val.rank() != 3 || points->val.dim(0) != 1 || points->val.dim(2) != 3)
    throw std::invalid_argument("encode: expected [1,N,3] points");
  const std::int64_t n = points->val.dim(1);
  if (n < 1) throw std::invalid_argument("encode: empty cloud");
  const std::string prefix = branch + "/enc";
  auto point_layers =
      detail::stack_of(params, prefix + "/point", cfg.encoder_point_widths.size(), true);
  auto global_layers =
      detail::stack_of(params, prefix + "/global", cfg.encoder_global_widths.size(), false);

  ad::VarPtr h = ad::shared_mlp(points, point_layers);          // [1,N,Dp]
  ad::VarPtr g = ad::maxpool_points(h);                         // [1,Dp]
  ad::VarPtr hg = ad::concat({h, ad::expand_points(g, n)}, 2);  // [1,N,2Dp]
  ad::VarPtr h2 = ad::shared_mlp(hg, global_layers);            // [1,N,codeword]
  return ad::maxpool_points(h2);                                // [1,codeword]
}

inline ad::VarPtr encode(const PointCloud& cloud, const ad::ModelParams& params,
                         const std::string& branch, const ModelConfig& cfg) {
  require_valid(cloud, "encode");
  ad::Tensor t = to_tensor2(cloud);
  return encode(ad::constant(ad::Tensor({1, t.dim(0), 3}, std::move(t.v))), params, branch, cfg);
}

// Fixed-count coarse cloud [coarse_points, 3] from a codeword [1, codeword].
inline ad::VarPtr decode_coarse(const ad::VarPtr& code, const ad::ModelParams& params,
                                const ModelConfig& cfg, const std::string& branch = "ae1") {
  if (code->val.rank() != 2 || code->val.dim(0) != 1 || code->val.dim(1) != cfg.codeword)
    throw std::invalid_argument("decode_coarse: codeword length mismatch, expected [1," +
                                std::to_string(cfg.codeword) + "], got " + code->val.shape_str());
  auto layers =
      detail::stack_of(params, branch + "/dec", cfg.decoder_hidden.size() + 1, false);
  ad::VarPtr flat = ad::dense_stack(code, layers);  // [1, coarse*3]
  return ad::reshape(flat, {cfg.coarse_points, 3});
}

struct SiameseOut {
  ad::VarPtr c2;      // codeword of the partial cloud (AE2 encoder)
  ad::VarPtr c1;      // codeword of the complete cloud (AE1 encoder, frozen)
  ad::VarPtr coarse;  // AE1 decoder applied to c2
};

// Gradients reach only AE2's encoder; AE1 must be frozen before calling.
inline SiameseOut siamese_forward(const PointCloud& partial, const PointCloud& complete,
                                  const ad::ModelParams& params, const ModelConfig& cfg) {
  if (!params.all_frozen("ae1/"))
    throw state_error("siamese_forward: AE1 must be frozen during feature matching");
  SiameseOut out;
  out.c2 = encode(partial, params, "ae2", cfg);
  out.c1 = encode(complete, params, "ae1", cfg);
  out.coarse = decode_coarse(out.c2, params, cfg, "ae1");
  return out;
}

// One refinement pass. Every input point is replicated `replication` times,
// each copy tagged with a distinct 2D grid coordinate, concatenated with the
// codeword, and passed through the residual MLP.
inline ad::VarPtr refine(const ad::VarPtr& synthetic, const ad::VarPtr& code,
                         const ad::ModelParams& params, const ModelConfig& cfg,
                         int replication) {
  if (synthetic->val.rank() != 2 || synthetic->val.dim(1) != 3)
    throw std::invalid_argument("refine: expected [N,3] synthetic cloud");
  if (synthetic->val.dim(0) < 1) throw std::invalid_argument("refine: empty synthetic cloud");
  if (replication < 1) throw std::invalid_argument("refine: replication must be >= 1");
  const std::int64_t n = synthetic->val.dim(0);
  const auto grid = geom::grid2d(1, static_cast<std::size_t>(replication), cfg.grid_extent);

  ad::VarPtr rep = ad::repeat_rows(synthetic, replication);  // [n*r, 3]
  ad::Tensor grid_t = ad::Tensor::zeros({n * replication, 2});
  for (std::int64_t i = 0; i < n; ++i)
    for (int j = 0; j < replication; ++j) {
      grid_t.at((i * replication + j) * 2) = grid[static_cast<std::size_t>(j)][0];
      grid_t.at((i * replication + j) * 2 + 1) = grid[static_cast<std::size_t>(j)][1];
    }
  ad::VarPtr codes = ad::tile_rows(code, n * replication);  // [n*r, codeword]
  ad::VarPtr feat = ad::concat({rep, ad::constant(std::move(grid_t)), codes}, 1);

  auto layers = detail::stack_of(params, "refiner", cfg.refiner_widths.size() + 1, false);
  ad::VarPtr residual = ad::dense_stack(feat, layers);  // [n*r, 3]
  return ad::add(residual, rep);
}

struct CompletionGraph {
  ad::VarPtr code;       // [1, codeword]
  ad::VarPtr coarse;     // [coarse_points, 3]
  ad::VarPtr synthetic;  // [coarse_points, 3] (input to the first refinement)
  ad::VarPtr fine;       // [target_resolution, 3]
};

// Full pipeline: encode the partial input with AE2, decode a coarse cloud
// with AE1's decoder, mix partial + mirror + coarse through FPS, then refine,
// doubling the resolution each iteration. Gradients flow into the selected
// coarse points; the partial rows are constants.
inline CompletionGraph complete_graph(const PointCloud& partial, const ad::ModelParams& params,
                                      const ModelConfig& cfg, int target_resolution) {
  require_valid(partial, "complete");
  if (target_resolution < cfg.coarse_points ||
      target_resolution % cfg.coarse_points != 0)
    throw std::invalid_argument("complete: resolution " + std::to_string(target_resolution) +
                                " not reachable from coarse base " +
                                std::to_string(cfg.coarse_points));
  int m = 0;
  for (int r = target_resolution / cfg.coarse_points; r > 1; r >>= 1, ++m)
    if (r % 2 != 0)
      throw std::invalid_argument("complete: resolution must be coarse_points * 2^m");

  if (cfg.without_refine && target_resolution != cfg.coarse_points)
    throw std::invalid_argument("complete: without_refine outputs the coarse resolution only");

  CompletionGraph out;
  out.code = encode(partial, params, "ae2", cfg);
  out.coarse = decode_coarse(out.code, params, cfg, "ae1");

  if (cfg.without_refine) {
    out.synthetic = out.coarse;
    out.fine = out.coarse;
    return out;
  }

  // FPS selection is computed on values; the graph gathers the chosen rows
  // from [partial; mirror(partial); coarse].
  const auto plane = geom::plane_from_string(cfg.mirror_plane);
  const PointCloud coarse_cloud = to_cloud(out.coarse->val);
  const geom::SynthesisPlan plan =
      geom::synthesize_plan(partial, coarse_cloud, static_cast<std::size_t>(cfg.coarse_points),
                            plane);
  PointCloud fixed;  // partial + mirrored partial, constant in the graph
  fixed.points.assign(plan.unioned.points.begin(),
                      plan.unioned.points.begin() + static_cast<std::ptrdiff_t>(2 * plan.n_partial));
  ad::VarPtr unioned = ad::concat({ad::constant(to_tensor2(fixed)), out.coarse}, 0);
  std::vector<std::int64_t> sel(plan.selected.begin(), plan.selected.end());
  out.synthetic = ad::gather_rows(unioned, std::move(sel));

  ad::VarPtr current = out.synthetic;
  if (m == 0) {
    current = refine(current, out.code, params, cfg, 1);
  } else {
    for (int i = 0; i < m; ++i) current = refine(current, out.code, params, cfg, 2);
  }
  out.fine = current;
  return out;
}

struct Completion {
  PointCloud coarse;
  PointCloud fine;
};

inline Completion complete(const PointCloud& partial, const ad::ModelParams& params,
                           const ModelConfig& cfg, int target_resolution) {
  const CompletionGraph g = complete_graph(partial, params, cfg, target_resolution);
  return {to_cloud(g.coarse->val), to_cloud(g.fine->val)};
}

inline Completion complete(const PointCloud& partial, const ad::ModelParams& params,
                           const ModelConfig& cfg) {
  return complete(partial, params, cfg, cfg.target_resolution());
}

}  // namespace asfm::model
