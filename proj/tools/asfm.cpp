// Command-line entry point: dataset generation, staged training, completion
// inference and evaluation, wired by plain-text config files with key=value
// overrides. Exit codes: 0 success, 1 runtime failure, 2 usage/config error.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "asfm/checkpoint.hpp"
#include "asfm/config.hpp"
#include "asfm/data.hpp"
#include "asfm/eval.hpp"
#include "asfm/model.hpp"
#include "asfm/train.hpp"

namespace fs = std::filesystem;
using namespace asfm;

namespace {

// Refuse to clobber existing outputs unless --force is given.
void guard_output_dir(const std::string& out, bool force) {
  if (!fs::exists(out)) return;
  if (force) return;
  if (fs::is_directory(out) && fs::is_empty(out)) return;
  throw state_error("output path " + out + " exists; pass --force to overwrite");
}

void guard_output_file(const std::string& out, bool force) {
  if (fs::exists(out) && !force)
    throw state_error("output file " + out + " exists; pass --force to overwrite");
}

cfg::Config load_config(const std::string& path, const std::vector<std::string>& overrides) {
  cfg::Config c = path.empty() ? cfg::Config() : cfg::Config::load(path);
  c.apply_overrides(overrides);
  return c;
}

struct DatagenArgs {
  std::string config, out, mode;
  int shapes = 0;
  std::int64_t seed = -1;
  std::vector<std::string> overrides;
  bool force = false;
};

int run_datagen(const DatagenArgs& a) {
  cfg::Config c = load_config(a.config, a.overrides);
  if (!a.mode.empty()) c.set("data.mode", a.mode);
  if (a.shapes > 0) c.set("data.shapes_per_category", std::to_string(a.shapes));
  if (a.seed >= 0) c.set("data.seed", std::to_string(a.seed));
  data::DataConfig dc = data::DataConfig::from_config(c);
  guard_output_dir(a.out, a.force);
  fs::create_directories(a.out);

  data::Dataset ds = data::make_dataset(dc);
  data::write_dataset(a.out, ds);

  cfg::Config resolved = dc.to_config();
  resolved.set("run.command", "datagen");
  resolved.set("run.out", a.out);
  resolved.save((fs::path(a.out) / "resolved.cfg").string());

  std::printf("datagen: wrote %zu train / %zu val / %zu test pairs to %s\n", ds.train.size(),
              ds.val.size(), ds.test.size(), a.out.c_str());
  return 0;
}

struct TrainArgs {
  int stage = 0;
  std::string config, data_dir, out, ckpt, resume;
  std::int64_t seed = -1;
  std::vector<std::string> overrides;
  bool from_scratch = false;
  bool force = false;
};

int run_train(const TrainArgs& a) {
  cfg::Config c = load_config(a.config, a.overrides);
  if (a.stage != 0) c.set("train.stage", std::to_string(a.stage));
  if (a.seed >= 0) c.set("train.seed", std::to_string(a.seed));
  if (a.from_scratch) c.set("train.from_scratch", "true");
  train::TrainConfig tc = train::TrainConfig::from_config(c);

  if (tc.stage >= 2 && a.ckpt.empty() && !tc.from_scratch)
    throw std::invalid_argument("train: stage " + std::to_string(tc.stage) +
                                " requires --ckpt with the prior stage checkpoint");

  guard_output_dir(a.out, a.force);
  fs::create_directories(a.out);
  data::Dataset ds = data::load_dataset(a.data_dir);

  // architecture comes from the prior checkpoint when one exists
  model::ModelConfig mc;
  if (!a.ckpt.empty()) {
    const ckpt::Checkpoint prior = ckpt::load(a.ckpt);
    mc = model::ModelConfig::from_config(cfg::Config::parse_text(prior.model_config_text));
  } else {
    mc = model::ModelConfig::from_config(c);
  }

  train::StageResult result;
  switch (tc.stage) {
    case 1:
      result = train::train_stage1(tc, ds, mc, a.out, a.resume);
      break;
    case 2:
      result = train::train_stage2(tc, ds, mc, a.ckpt, a.out);
      break;
    default:
      result = train::train_stage3(tc, ds, mc, a.ckpt, a.out);
      break;
  }

  cfg::Config resolved = mc.to_config();
  for (const auto& [k, v] : c.entries()) resolved.set(k, v);
  resolved.set("train.stage", std::to_string(tc.stage));
  resolved.set("run.command", "train");
  resolved.set("run.data", a.data_dir);
  resolved.set("run.out", a.out);
  if (!a.ckpt.empty()) resolved.set("run.ckpt", a.ckpt);
  resolved.save((fs::path(a.out) / "resolved.cfg").string());

  std::printf("train: stage %d finished %lld steps, final loss %.6g, checkpoint %s\n", tc.stage,
              static_cast<long long>(result.steps_run),
              result.history.empty() ? 0.0 : result.history.back().loss,
              result.checkpoint_path.c_str());
  return 0;
}

struct CompleteArgs {
  std::string ckpt, input, out, gt;
  int resolution = 0;
  bool force = false;
};

int run_complete(const CompleteArgs& a) {
  const ckpt::Checkpoint c = ckpt::load(a.ckpt);
  const model::ModelConfig mc =
      model::ModelConfig::from_config(cfg::Config::parse_text(c.model_config_text));
  const ad::ModelParams params = ckpt::restore_params(c);
  if (!params.has("ae2/enc/point/l0/w"))
    throw std::invalid_argument("complete: checkpoint has no AE2 encoder (run stages 2-3 first)");

  const PointCloud input = data::read_xyz(a.input);
  const int resolution = a.resolution > 0 ? a.resolution : mc.target_resolution();

  guard_output_dir(a.out, a.force);
  fs::create_directories(a.out);
  const model::Completion result = model::complete(input, params, mc, resolution);
  data::write_xyz((fs::path(a.out) / "coarse.xyz").string(), result.coarse);
  data::write_xyz((fs::path(a.out) / "fine.xyz").string(), result.fine);
  std::printf("complete: %zu input points -> %zu coarse, %zu fine (%s)\n", input.size(),
              result.coarse.size(), result.fine.size(), a.out.c_str());

  if (!a.gt.empty()) {
    const PointCloud gt = data::read_xyz(a.gt);
    std::printf("cd_p %.17g\n", losses::cd_p_value(result.fine, gt));
    std::printf("cd_t %.17g\n", losses::cd_t_value(result.fine, gt));
  }

  cfg::Config resolved = mc.to_config();
  resolved.set("run.command", "complete");
  resolved.set("run.ckpt", a.ckpt);
  resolved.set("run.input", a.input);
  resolved.set("run.resolution", std::to_string(resolution));
  resolved.save((fs::path(a.out) / "resolved.cfg").string());
  return 0;
}

struct EvalArgs {
  std::string ckpt, dataset, metric = "cdp", out, split = "test";
  bool force = false;
};

int run_eval(const EvalArgs& a) {
  const ckpt::Checkpoint c = ckpt::load(a.ckpt);
  const model::ModelConfig mc =
      model::ModelConfig::from_config(cfg::Config::parse_text(c.model_config_text));
  const ad::ModelParams params = ckpt::restore_params(c);
  const data::Dataset ds = data::load_dataset(a.dataset);
  const std::vector<data::SamplePair>& samples = ds.split(a.split);
  if (samples.empty())
    throw std::invalid_argument("eval: split '" + a.split + "' is empty in " + a.dataset);

  guard_output_file(a.out, a.force);

  cfg::Config resolved = mc.to_config();
  resolved.set("run.command", "eval");
  resolved.set("run.ckpt", a.ckpt);
  resolved.set("run.dataset", a.dataset);
  resolved.set("run.metric", a.metric);
  resolved.set("run.split", a.split);
  const std::string fingerprint = resolved.fingerprint();

  if (a.metric == "cdt" || a.metric == "cdp") {
    const auto variant = a.metric == "cdt" ? eval::CdVariant::CdT : eval::CdVariant::CdP;
    eval::MetricReport r = eval::eval_cd(params, mc, samples, variant, fingerprint);
    r.write_csv(a.out);
    std::printf("eval: %s overall %.6g (x%g) over %zu samples -> %s\n", a.metric.c_str(),
                r.overall * r.scale, r.scale, r.samples, a.out.c_str());
  } else if (a.metric == "fidelity") {
    eval::MetricReport r = eval::eval_fidelity(params, mc, samples, fingerprint);
    r.write_csv(a.out);
    std::printf("eval: fidelity overall %.6g over %zu samples -> %s\n", r.overall, r.samples,
                a.out.c_str());
  } else if (a.metric == "consistency") {
    const double v = eval::eval_consistency(params, mc, samples);
    eval::write_consistency_csv(a.out, v, fingerprint);
    std::printf("eval: consistency %.6g -> %s\n", v, a.out.c_str());
  } else if (a.metric == "sweep") {
    const auto rows = eval::robustness_sweep(params, mc, samples);
    eval::write_sweep_csv(a.out, rows, fingerprint);
    std::printf("eval: sweep over %zu ratios -> %s\n", rows.size(), a.out.c_str());
  } else {
    throw std::invalid_argument("eval: unknown metric " + a.metric);
  }

  resolved.save(a.out + ".resolved.cfg");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"asfm: asymmetrical Siamese feature-matching point cloud completion"};
  app.require_subcommand(1);

  DatagenArgs dg;
  CLI::App* datagen = app.add_subcommand("datagen", "generate a synthetic dataset");
  datagen->add_option("--config", dg.config, "config file")->check(CLI::ExistingFile);
  datagen->add_option("--out", dg.out, "output dataset directory")->required();
  datagen->add_option("--mode", dg.mode, "pairing mode (c3d|pcn)")
      ->check(CLI::IsMember({"c3d", "pcn"}));
  datagen->add_option("--shapes", dg.shapes, "shapes per category");
  datagen->add_option("--seed", dg.seed, "master seed");
  datagen->add_option("--set", dg.overrides, "key=value config overrides");
  datagen->add_flag("--force", dg.force, "overwrite existing outputs");

  TrainArgs tr;
  CLI::App* train_cmd = app.add_subcommand("train", "run one training stage");
  train_cmd->add_option("--stage", tr.stage, "training stage (1|2|3)")
      ->check(CLI::Range(1, 3))
      ->required();
  train_cmd->add_option("--config", tr.config, "config file")->check(CLI::ExistingFile);
  train_cmd->add_option("--data", tr.data_dir, "dataset directory")->required();
  train_cmd->add_option("--out", tr.out, "output directory")->required();
  train_cmd->add_option("--ckpt", tr.ckpt, "prior-stage checkpoint")->check(CLI::ExistingFile);
  train_cmd->add_option("--resume", tr.resume, "resume checkpoint (stage 1)")
      ->check(CLI::ExistingFile);
  train_cmd->add_flag("--from-scratch", tr.from_scratch, "stage 3 without prior checkpoints");
  train_cmd->add_option("--seed", tr.seed, "training seed");
  train_cmd->add_option("--set", tr.overrides, "key=value config overrides");
  train_cmd->add_flag("--force", tr.force, "overwrite existing outputs");

  CompleteArgs cp;
  CLI::App* complete_cmd = app.add_subcommand("complete", "complete a partial cloud");
  complete_cmd->add_option("--ckpt", cp.ckpt, "model checkpoint")
      ->check(CLI::ExistingFile)
      ->required();
  complete_cmd->add_option("--input", cp.input, "partial cloud (.xyz)")
      ->check(CLI::ExistingFile)
      ->required();
  complete_cmd->add_option("--out", cp.out, "output directory")->required();
  complete_cmd->add_option("--resolution", cp.resolution, "output resolution (base * 2^m)");
  complete_cmd->add_option("--gt", cp.gt, "ground truth cloud for CD reporting")
      ->check(CLI::ExistingFile);
  complete_cmd->add_flag("--force", cp.force, "overwrite existing outputs");

  EvalArgs ev;
  CLI::App* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on a dataset");
  eval_cmd->add_option("--ckpt", ev.ckpt, "model checkpoint")
      ->check(CLI::ExistingFile)
      ->required();
  eval_cmd->add_option("--dataset", ev.dataset, "dataset directory")->required();
  eval_cmd->add_option("--metric", ev.metric, "cdt|cdp|fidelity|consistency|sweep");
  eval_cmd->add_option("--out", ev.out, "report csv path")->required();
  eval_cmd->add_option("--split", ev.split, "dataset split (train|val|test)");
  eval_cmd->add_flag("--force", ev.force, "overwrite existing outputs");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*datagen) return run_datagen(dg);
    if (*train_cmd) return run_train(tr);
    if (*complete_cmd) return run_complete(cp);
    if (*eval_cmd) return run_eval(ev);
    std::fprintf(stderr, "no subcommand selected\n");
    return 2;
  } catch (const parse_error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
