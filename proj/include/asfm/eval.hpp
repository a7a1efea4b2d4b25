#pragma once

// Evaluation metrics and experiment harnesses: per-category Chamfer tables,
// fidelity, consistency over consecutive frames, and the visible-ratio
// robustness sweep. Sample evaluation is parallel with a deterministic
// reduction order; scaling factors (x1e4 for CD-T, x1e3 for CD-P) are applied
// at report formatting only, never inside the math.

#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "asfm/core.hpp"
#include "asfm/data.hpp"
#include "asfm/kdtree.hpp"
#include "asfm/losses.hpp"
#include "asfm/model.hpp"
#include "asfm/parallel.hpp"

namespace asfm::eval {

enum class CdVariant { CdT, CdP };

inline double report_scale(CdVariant v) { return v == CdVariant::CdT ? 1e4 : 1e3; }

inline double cd_value(CdVariant v, const PointCloud& p, const PointCloud& q) {
  return v == CdVariant::CdT ? losses::cd_t_value(p, q) : losses::cd_p_value(p, q);
}

// Mean over input points of the (non-squared) distance to the nearest output
// point. Zero iff every input point appears in the output.
inline double fidelity(const PointCloud& input, const PointCloud& output) {
  require_valid(input, "fidelity(input)");
  require_valid(output, "fidelity(output)");
  const geom::NNIndex idx(output);
  double acc = 0.0;
  for (const Vec3& p : input.points) acc += std::sqrt(idx.nearest(p).sqdist);
  return acc / static_cast<double>(input.size());
}

// ---- per-category reports -----------------------------------------------------------

struct MetricReport {
  std::string metric;  // cdt | cdp | fidelity
  double scale = 1.0;  // display scale applied in CSV rows
  std::vector<std::pair<std::string, double>> per_category;  // unscaled means
  std::vector<std::pair<std::string, std::size_t>> counts;
  double overall = 0.0;  // mean over categories of per-category means, unscaled
  std::size_t samples = 0;
  std::string config_fingerprint;

  void write_csv(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw state_error("cannot write report: " + path);
    out << "# asfm-metric-report v1\n";
    out << "# metric=" << metric << " scale=" << scale
        << " config_fingerprint=" << config_fingerprint << "\n";
    out << "category,count,value\n";
    char row[160];
    for (std::size_t i = 0; i < per_category.size(); ++i) {
      std::snprintf(row, sizeof(row), "%s,%zu,%.17g\n", per_category[i].first.c_str(),
                    counts[i].second, per_category[i].second * scale);
      out << row;
    }
    std::snprintf(row, sizeof(row), "overall,%zu,%.17g\n", samples, overall * scale);
    out << row;
  }
};

namespace detail {

// Per-category means; the overall value is the mean over categories of the
// per-category means. The aggregation invariant is asserted against a flat
// recomputation.
inline MetricReport aggregate(const std::string& metric, double scale,
                              const std::vector<std::string>& categories,
                              const std::vector<double>& values,
                              const std::string& fingerprint) {
  MetricReport r;
  r.metric = metric;
  r.scale = scale;
  r.config_fingerprint = fingerprint;
  r.samples = values.size();
  std::map<std::string, std::pair<double, std::size_t>> acc;
  for (std::size_t i = 0; i < values.size(); ++i) {
    auto& slot = acc[categories[i]];
    slot.first += values[i];
    slot.second += 1;
  }
  double overall = 0.0;
  for (const auto& [cat, slot] : acc) {
    const double mean = slot.first / static_cast<double>(slot.second);
    r.per_category.push_back({cat, mean});
    r.counts.push_back({cat, slot.second});
    overall += mean;
  }
  r.overall = overall / static_cast<double>(acc.size());

  double check = 0.0;
  for (const auto& [cat, mean] : r.per_category) check += mean;
  check /= static_cast<double>(r.per_category.size());
  if (std::abs(check - r.overall) > 1e-12)
    throw state_error("MetricReport: aggregation invariant violated");
  return r;
}

}  // namespace detail

// Completion hook: maps a sample to the cloud under evaluation. The default
// runs the trained pipeline; tests plug in reference behaviors.
using CompleteFn = std::function<PointCloud(const data::SamplePair&)>;

inline CompleteFn pipeline_fn(const ad::ModelParams& params, const model::ModelConfig& mcfg) {
  const int target = mcfg.target_resolution();
  return [&params, mcfg, target](const data::SamplePair& p) {
    return model::complete(p.partial, params, mcfg, target).fine;
  };
}

inline MetricReport eval_cd_with(const CompleteFn& fn,
                                 const std::vector<data::SamplePair>& samples, CdVariant variant,
                                 const std::string& fingerprint = "") {
  if (samples.empty()) throw std::invalid_argument("eval_cd: no samples");
  std::vector<double> values(samples.size());
  std::vector<std::string> cats(samples.size());
  par::parallel_for(samples.size(), [&](std::size_t i) {
    values[i] = cd_value(variant, fn(samples[i]), samples[i].complete);
    cats[i] = samples[i].category;
  });
  return detail::aggregate(variant == CdVariant::CdT ? "cdt" : "cdp", report_scale(variant),
                           cats, values, fingerprint);
}

// Runs the completion pipeline over a dataset split and reports CD per
// category. The model's output resolution must match the dataset's complete
// resolution.
inline MetricReport eval_cd(const ad::ModelParams& params, const model::ModelConfig& mcfg,
                            const std::vector<data::SamplePair>& samples, CdVariant variant,
                            const std::string& fingerprint = "") {
  if (samples.empty()) throw std::invalid_argument("eval_cd: no samples");
  const int target = mcfg.target_resolution();
  for (const data::SamplePair& p : samples)
    if (static_cast<int>(p.complete.size()) != target)
      throw state_error("eval_cd: model resolution " + std::to_string(target) +
                        " does not match ground truth " + std::to_string(p.complete.size()));
  return eval_cd_with(pipeline_fn(params, mcfg), samples, variant, fingerprint);
}

inline MetricReport eval_fidelity_with(const CompleteFn& fn,
                                       const std::vector<data::SamplePair>& samples,
                                       const std::string& fingerprint = "") {
  if (samples.empty()) throw std::invalid_argument("eval_fidelity: no samples");
  std::vector<double> values(samples.size());
  std::vector<std::string> cats(samples.size());
  par::parallel_for(samples.size(), [&](std::size_t i) {
    values[i] = fidelity(samples[i].partial, fn(samples[i]));
    cats[i] = samples[i].category;
  });
  return detail::aggregate("fidelity", 1.0, cats, values, fingerprint);
}

inline MetricReport eval_fidelity(const ad::ModelParams& params, const model::ModelConfig& mcfg,
                                  const std::vector<data::SamplePair>& samples,
                                  const std::string& fingerprint = "") {
  return eval_fidelity_with(pipeline_fn(params, mcfg), samples, fingerprint);
}

// ---- consistency over consecutive frames --------------------------------------------

// Mean over instances of the mean CD between completions of adjacent frames.
// Instances with a single frame are skipped with a warning; if no instance
// has two frames the request is invalid.
inline double consistency(const std::vector<std::vector<PointCloud>>& completions_by_instance,
                          CdVariant variant = CdVariant::CdP) {
  double total = 0.0;
  std::size_t instances = 0;
  for (std::size_t g = 0; g < completions_by_instance.size(); ++g) {
    const auto& frames = completions_by_instance[g];
    if (frames.size() < 2) {
      std::cerr << "consistency: instance group " << g << " has " << frames.size()
                << " frame(s), skipping\n";
      continue;
    }
    double acc = 0.0;
    for (std::size_t f = 0; f + 1 < frames.size(); ++f)
      acc += cd_value(variant, frames[f], frames[f + 1]);
    total += acc / static_cast<double>(frames.size() - 1);
    ++instances;
  }
  if (instances == 0)
    throw std::invalid_argument("consistency: no instance has at least two frames");
  return total / static_cast<double>(instances);
}

// Groups a dataset split by instance id (frames ordered by frame id), runs
// completion on every partial, and scores adjacent-frame consistency.
inline double eval_consistency(const ad::ModelParams& params, const model::ModelConfig& mcfg,
                               const std::vector<data::SamplePair>& samples,
                               CdVariant variant = CdVariant::CdP) {
  if (samples.empty()) throw std::invalid_argument("eval_consistency: no samples");
  std::vector<PointCloud> fines(samples.size());
  par::parallel_for(samples.size(), [&](std::size_t i) {
    fines[i] = model::complete(samples[i].partial, params, mcfg, mcfg.target_resolution()).fine;
  });
  std::map<int, std::vector<std::pair<int, PointCloud>>> by_instance;
  for (std::size_t i = 0; i < samples.size(); ++i)
    by_instance[samples[i].instance_id].push_back({samples[i].frame_id, std::move(fines[i])});
  std::vector<std::vector<PointCloud>> groups;
  for (auto& [id, frames] : by_instance) {
    std::sort(frames.begin(), frames.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    std::vector<PointCloud> g;
    for (auto& [fid, cloud] : frames) g.push_back(std::move(cloud));
    groups.push_back(std::move(g));
  }
  return consistency(groups, variant);
}

// ---- robustness sweep ---------------------------------------------------------------

struct SweepRow {
  double ratio = 0.0;
  double cd_p_mean = 0.0;  // unscaled
  std::size_t samples = 0;
};

// Re-occludes each sample's complete cloud at every requested visible ratio
// (from its stored viewpoint) and reports mean CD-P per ratio.
inline std::vector<SweepRow> robustness_sweep_with(
    const CompleteFn& fn, const std::vector<data::SamplePair>& samples,
    std::vector<double> ratios = {0.2, 0.4, 0.6, 0.8}) {
  if (samples.empty()) throw std::invalid_argument("robustness_sweep: no samples");
  std::vector<SweepRow> rows;
  for (double ratio : ratios) {
    std::vector<double> values(samples.size());
    par::parallel_for(samples.size(), [&](std::size_t i) {
      data::SamplePair reoccluded = samples[i];
      reoccluded.partial = data::occlude(samples[i].complete, ratio, samples[i].viewpoint);
      reoccluded.visible_ratio = ratio;
      values[i] = losses::cd_p_value(fn(reoccluded), samples[i].complete);
    });
    SweepRow row;
    row.ratio = ratio;
    row.samples = values.size();
    for (double v : values) row.cd_p_mean += v;
    row.cd_p_mean /= static_cast<double>(values.size());
    rows.push_back(row);
  }
  return rows;
}

inline std::vector<SweepRow> robustness_sweep(const ad::ModelParams& params,
                                              const model::ModelConfig& mcfg,
                                              const std::vector<data::SamplePair>& samples,
                                              std::vector<double> ratios = {0.2, 0.4, 0.6, 0.8}) {
  return robustness_sweep_with(pipeline_fn(params, mcfg), samples, std::move(ratios));
}

inline void write_sweep_csv(const std::string& path, const std::vector<SweepRow>& rows,
                            const std::string& fingerprint = "") {
  std::ofstream out(path);
  if (!out) throw state_error("cannot write sweep csv: " + path);
  out << "# asfm-sweep-report v1\n";
  out << "# metric=cdp scale=1000 config_fingerprint=" << fingerprint << "\n";
  out << "ratio,count,cdp\n";
  char row[96];
  for (const SweepRow& r : rows) {
    std::snprintf(row, sizeof(row), "%.17g,%zu,%.17g\n", r.ratio, r.samples,
                  r.cd_p_mean * 1e3);
    out << row;
  }
}

inline void write_consistency_csv(const std::string& path, double value,
                                  const std::string& fingerprint = "") {
  std::ofstream out(path);
  if (!out) throw state_error("cannot write consistency csv: " + path);
  out << "# asfm-consistency-report v1\n";
  out << "# metric=consistency config_fingerprint=" << fingerprint << "\n";
  out << "metric,value\n";
  char row[64];
  std::snprintf(row, sizeof(row), "consistency,%.17g\n", value);
  out << row;
}

}  // namespace asfm::eval
