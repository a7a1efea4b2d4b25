#pragma once

// Three-stage training:
//   stage 1  AE1 auto-encoder on complete clouds (CD-P reconstruction)
//   stage 2  AE2 encoder matched to frozen AE1 codewords (feature matching)
//   stage 3  AE2 encoder + refinement unit end to end (scheduled overall loss)
//
// Batches are a pure function of (seed, step), so resuming from a checkpoint
// with restored optimizer state reproduces the uninterrupted trajectory
// bitwise. One training thread mutates parameters.

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <string>
#include <vector>

#include "asfm/checkpoint.hpp"
#include "asfm/config.hpp"
#include "asfm/core.hpp"
#include "asfm/data.hpp"
#include "asfm/losses.hpp"
#include "asfm/model.hpp"
#include "asfm/optim.hpp"
#include "asfm/rng.hpp"

namespace asfm::train {

struct TrainConfig {
  int stage = 1;
  std::int64_t max_steps = 2000;
  int batch_size = 8;
  std::uint64_t seed = 42;
  double lr = 1e-4;
  std::string optimizer = "adam";  // adam | sgd
  std::int64_t checkpoint_cadence = 500;
  // loss schedule knobs (stage 3)
  double alpha_start = 1.0, alpha_end = 0.1;
  double beta_value = 1.0;
  double gamma_start = 0.5, gamma_end = 1.0;
  // variant flags
  bool without_refine = false;         // evaluate the coarse decoder directly
  std::string mirror_plane = "xy";
  std::string match_metric = "euclidean";
  bool init_ae2_from_ae1 = false;      // stage 2 initialization option
  bool freeze_ae1_decoder = true;      // stage 3 (encoder of AE1 is always frozen)
  bool from_scratch = false;           // stage 3 without prior checkpoints

  void validate() const {
    if (stage < 1 || stage > 3) throw std::invalid_argument("train: stage must be 1, 2 or 3");
    if (max_steps < 1) throw std::invalid_argument("train: max_steps must be >= 1");
    if (batch_size < 1) throw std::invalid_argument("train: batch_size must be >= 1");
    if (checkpoint_cadence < 1) throw std::invalid_argument("train: cadence must be >= 1");
    if (!(lr > 0)) throw std::invalid_argument("train: lr must be positive");
    if (optimizer != "adam" && optimizer != "sgd")
      throw std::invalid_argument("train: optimizer must be adam or sgd");
    if (match_metric != "euclidean")
      throw std::invalid_argument(
          "train: match_metric supports only 'euclidean' (cosine/manhattan are out of scope)");
    geom::plane_from_string(mirror_plane);
  }

  losses::LossSchedule schedule() const {
    losses::LossSchedule s;
    s.max_steps = max_steps;
    s.alpha_start = alpha_start;
    s.alpha_end = alpha_end;
    s.beta_value = beta_value;
    s.gamma_start = gamma_start;
    s.gamma_end = gamma_end;
    return s;
  }

  ad::OptimizerConfig optimizer_config() const {
    ad::OptimizerConfig oc;
    oc.method = optimizer == "sgd" ? ad::OptimizerConfig::Method::Sgd
                                   : ad::OptimizerConfig::Method::Adam;
    oc.lr = lr;
    return oc;
  }

  static TrainConfig from_config(const cfg::Config& c) {
    TrainConfig t;
    t.stage = static_cast<int>(c.get_int("train.stage", t.stage));
    t.max_steps = c.get_int("train.max_steps", t.max_steps);
    t.batch_size = static_cast<int>(c.get_int("train.batch_size", t.batch_size));
    t.seed = static_cast<std::uint64_t>(c.get_int("train.seed", static_cast<std::int64_t>(t.seed)));
    t.lr = c.get_double("train.lr", t.lr);
    t.optimizer = c.get_string("train.optimizer", t.optimizer);
    t.checkpoint_cadence = c.get_int("train.checkpoint_cadence", t.checkpoint_cadence);
    t.alpha_start = c.get_double("train.alpha_start", t.alpha_start);
    t.alpha_end = c.get_double("train.alpha_end", t.alpha_end);
    t.beta_value = c.get_double("train.beta", t.beta_value);
    t.gamma_start = c.get_double("train.gamma_start", t.gamma_start);
    t.gamma_end = c.get_double("train.gamma_end", t.gamma_end);
    t.without_refine = c.get_bool("train.without_refine", t.without_refine);
    t.mirror_plane = c.get_string("train.mirror_plane", t.mirror_plane);
    t.match_metric = c.get_string("train.match_metric", t.match_metric);
    t.init_ae2_from_ae1 = c.get_bool("train.init_ae2_from_ae1", t.init_ae2_from_ae1);
    t.freeze_ae1_decoder = c.get_bool("train.freeze_ae1_decoder", t.freeze_ae1_decoder);
    t.from_scratch = c.get_bool("train.from_scratch", t.from_scratch);
    t.validate();
    return t;
  }
};

struct StepStats {
  double feat = 0.0, cd_coarse = 0.0, cd_fine = 0.0;
  losses::Weights weights{};
  double loss = 0.0;
};

struct StageResult {
  std::string checkpoint_path;  // final checkpoint on disk
  std::vector<StepStats> history;
  std::int64_t steps_run = 0;
};

namespace detail {

inline std::vector<const data::SamplePair*> sample_batch(const data::Dataset& ds,
                                                         const TrainConfig& cfg,
                                                         std::int64_t step) {
  Rng rng(Rng::derive(cfg.seed, 0xBA7C000ULL + static_cast<std::uint64_t>(step)));
  std::vector<const data::SamplePair*> batch;
  batch.reserve(static_cast<std::size_t>(cfg.batch_size));
  for (int i = 0; i < cfg.batch_size; ++i)
    batch.push_back(&ds.train[rng.uniform_index(ds.train.size())]);
  return batch;
}

using StepFn = std::function<ad::VarPtr(std::int64_t step,
                                        const std::vector<const data::SamplePair*>& batch,
                                        StepStats& stats)>;

// Shared driver: batch sampling, backward/step, CSV logging, cadence
// checkpoints (step_XXXXXX.ckpt) and the final checkpoint (final.ckpt).
inline StageResult run_loop(const TrainConfig& cfg, const data::Dataset& ds,
                            const std::string& model_config_text, ad::ModelParams& params,
                            ad::Optimizer& opt, const StepFn& step_fn,
                            const std::string& out_dir, std::int64_t start_step = 0) {
  if (ds.train.empty()) throw state_error("train: dataset has no training split");
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);

  const std::string log_path = (fs::path(out_dir) / "train_log.csv").string();
  const bool append = start_step > 0 && fs::exists(log_path) && fs::file_size(log_path) > 0;
  std::ofstream log(log_path, append ? std::ios::app : std::ios::trunc);
  if (!log) throw state_error("cannot write training log: " + log_path);
  if (!append) log << "step,feat,cd_coarse,cd_fine,alpha,beta,gamma\n";

  {
    // human-readable architecture snapshot next to the checkpoints
    std::ofstream mc((fs::path(out_dir) / "model.cfg").string());
    mc << "# asfm model config v1\n" << model_config_text;
  }

  StageResult result;
  char row[256];
  for (std::int64_t step = start_step; step < cfg.max_steps; ++step) {
    const auto batch = sample_batch(ds, cfg, step);
    StepStats stats;
    params.zero_grads();
    ad::VarPtr loss = step_fn(step, batch, stats);
    stats.loss = loss->val.v[0];
    ad::backward(loss);
    opt.step(params);

    std::snprintf(row, sizeof(row), "%lld,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n",
                  static_cast<long long>(step), stats.feat, stats.cd_coarse, stats.cd_fine,
                  stats.weights.alpha, stats.weights.beta, stats.weights.gamma);
    log << row;
    result.history.push_back(stats);

    if ((step + 1) % cfg.checkpoint_cadence == 0) {
      char name[64];
      std::snprintf(name, sizeof(name), "step_%06lld.ckpt", static_cast<long long>(step + 1));
      ckpt::save((fs::path(out_dir) / name).string(),
                 ckpt::snapshot(params, model_config_text, step + 1, &opt));
    }
  }
  result.steps_run = cfg.max_steps - start_step;
  result.checkpoint_path = (fs::path(out_dir) / "final.ckpt").string();
  ckpt::save(result.checkpoint_path,
             ckpt::snapshot(params, model_config_text, cfg.max_steps, &opt));
  return result;
}

inline ad::VarPtr mean_of(std::vector<ad::VarPtr> terms) {
  ad::VarPtr acc = terms[0];
  for (std::size_t i = 1; i < terms.size(); ++i) acc = ad::add(acc, terms[i]);
  return ad::scale(acc, 1.0 / static_cast<double>(terms.size()));
}

}  // namespace detail

// ---- stage 1: AE1 auto-encoder over complete clouds -------------------------------

inline StageResult train_stage1(const TrainConfig& cfg, const data::Dataset& ds,
                                const model::ModelConfig& mcfg, const std::string& out_dir,
                                const std::string& resume_ckpt = "") {
  cfg.validate();
  mcfg.validate();
  if (ds.train.empty()) throw state_error("stage 1: dataset has no training split");

  ad::ModelParams params;
  ad::Optimizer opt(cfg.optimizer_config());
  std::int64_t start_step = 0;
  if (!resume_ckpt.empty()) {
    ckpt::Checkpoint c = ckpt::load(resume_ckpt);
    params = ckpt::restore_params(c);
    if (c.has_optimizer) opt.restore(c.opt_m, c.opt_v, c.opt_step);
    start_step = c.train_step;
  } else {
    Rng r1(Rng::derive(cfg.seed, 1)), r2(Rng::derive(cfg.seed, 2));
    model::init_encoder(params, "ae1/enc", mcfg, r1);
    model::init_decoder(params, "ae1/dec", mcfg, r2);
  }

  const std::string cfg_text = mcfg.to_config().to_text();
  auto step_fn = [&](std::int64_t, const std::vector<const data::SamplePair*>& batch,
                     StepStats& stats) {
    std::vector<ad::VarPtr> terms;
    for (const data::SamplePair* p : batch) {
      ad::VarPtr code = model::encode(p->complete, params, "ae1", mcfg);
      ad::VarPtr recon = model::decode_coarse(code, params, mcfg, "ae1");
      terms.push_back(losses::cd_p(recon, ad::constant(model::to_tensor2(p->complete))));
    }
    ad::VarPtr loss = detail::mean_of(std::move(terms));
    stats.cd_coarse = loss->val.v[0];
    return loss;
  };
  return detail::run_loop(cfg, ds, cfg_text, params, opt, step_fn, out_dir, start_step);
}

// ---- stage 2: feature matching against the frozen AE1 ------------------------------

inline StageResult train_stage2(const TrainConfig& cfg, const data::Dataset& ds,
                                const model::ModelConfig& mcfg, const std::string& ae1_ckpt,
                                const std::string& out_dir) {
  cfg.validate();
  mcfg.validate();
  ckpt::Checkpoint prior = ckpt::load(ae1_ckpt);
  if (!prior.params.count("ae1/enc/point/l0/w"))
    throw state_error("stage 2 requires a stage-1 checkpoint containing AE1");

  ad::ModelParams params = ckpt::restore_params(prior);
  params.freeze_prefix("ae1/");
  if (!params.has("ae2/enc/point/l0/w")) {
    Rng r3(Rng::derive(cfg.seed, 3));
    model::init_encoder(params, "ae2/enc", mcfg, r3);
  }
  if (cfg.init_ae2_from_ae1) model::copy_encoder(params, "ae1/enc", "ae2/enc");

  const auto ae1_before = params.snapshot_bytes("ae1/");
  ad::Optimizer opt(cfg.optimizer_config());
  const std::string cfg_text = mcfg.to_config().to_text();

  auto step_fn = [&](std::int64_t, const std::vector<const data::SamplePair*>& batch,
                     StepStats& stats) {
    std::vector<ad::VarPtr> terms;
    for (const data::SamplePair* p : batch) {
      model::SiameseOut out = model::siamese_forward(p->partial, p->complete, params, mcfg);
      terms.push_back(losses::feat_match(out.c2, out.c1));
    }
    ad::VarPtr loss = detail::mean_of(std::move(terms));
    stats.feat = loss->val.v[0];
    return loss;
  };
  StageResult result = detail::run_loop(cfg, ds, cfg_text, params, opt, step_fn, out_dir);

  if (params.snapshot_bytes("ae1/") != ae1_before)
    throw state_error("stage 2: freeze contract violated, AE1 bytes changed");
  return result;
}

// ---- stage 3: end-to-end refinement with the scheduled overall loss ----------------

inline StageResult train_stage3(const TrainConfig& cfg, const data::Dataset& ds,
                                const model::ModelConfig& mcfg_in, const std::string& prior_ckpt,
                                const std::string& out_dir) {
  cfg.validate();
  model::ModelConfig mcfg = mcfg_in;
  mcfg.without_refine = cfg.without_refine;
  if (cfg.without_refine) mcfg.refine_iterations = 0;
  mcfg.mirror_plane = cfg.mirror_plane;
  mcfg.validate();

  ad::ModelParams params;
  if (cfg.from_scratch) {
    // end-to-end, no staged prior: everything trainable
    params = model::init_model(mcfg, cfg.seed);
  } else {
    if (prior_ckpt.empty())
      throw state_error("stage 3 requires stage-1/2 checkpoints (or from_scratch)");
    ckpt::Checkpoint prior = ckpt::load(prior_ckpt);
    if (!prior.params.count("ae1/enc/point/l0/w") || !prior.params.count("ae2/enc/point/l0/w"))
      throw state_error("stage 3 requires a stage-2 checkpoint containing AE1 and AE2");
    params = ckpt::restore_params(prior);
    params.freeze_prefix("ae1/");
    if (!cfg.freeze_ae1_decoder) params.unfreeze_prefix("ae1/dec");
  }
  if (!params.has("refiner/l0/w") && !mcfg.without_refine) {
    Rng r4(Rng::derive(cfg.seed, 4));
    model::init_refiner(params, "refiner", mcfg, r4);
  }

  const bool check_freeze = !cfg.from_scratch;
  const auto ae1_enc_before = params.snapshot_bytes("ae1/enc");
  const auto ae1_dec_before = params.snapshot_bytes("ae1/dec");

  ad::Optimizer opt(cfg.optimizer_config());
  const losses::LossSchedule schedule = cfg.schedule();
  const std::string cfg_text = mcfg.to_config().to_text();
  const int target = mcfg.target_resolution();

  auto step_fn = [&](std::int64_t step, const std::vector<const data::SamplePair*>& batch,
                     StepStats& stats) {
    std::vector<ad::VarPtr> terms;
    double feat_acc = 0, cdc_acc = 0, cdf_acc = 0;
    for (const data::SamplePair* p : batch) {
      model::CompletionGraph g = model::complete_graph(p->partial, params, mcfg, target);
      ad::VarPtr c1 = model::encode(p->complete, params, "ae1", mcfg);
      ad::VarPtr gt = ad::constant(model::to_tensor2(p->complete));
      ad::VarPtr feat = losses::feat_match(g.code, c1);
      ad::VarPtr cdc = losses::cd_p(g.coarse, gt);
      ad::VarPtr cdf = losses::cd_p(g.fine, gt);
      feat_acc += feat->val.v[0];
      cdc_acc += cdc->val.v[0];
      cdf_acc += cdf->val.v[0];
      terms.push_back(losses::overall_loss(feat, cdc, cdf, schedule, step));
    }
    const double b = static_cast<double>(batch.size());
    stats.feat = feat_acc / b;
    stats.cd_coarse = cdc_acc / b;
    stats.cd_fine = cdf_acc / b;
    stats.weights = schedule.at(step);
    return detail::mean_of(std::move(terms));
  };
  StageResult result = detail::run_loop(cfg, ds, cfg_text, params, opt, step_fn, out_dir);

  if (check_freeze) {
    if (params.snapshot_bytes("ae1/enc") != ae1_enc_before)
      throw state_error("stage 3: freeze contract violated, AE1 encoder bytes changed");
    if (cfg.freeze_ae1_decoder && params.snapshot_bytes("ae1/dec") != ae1_dec_before)
      throw state_error("stage 3: freeze contract violated, AE1 decoder bytes changed");
  }
  return result;
}

}  // namespace asfm::train
