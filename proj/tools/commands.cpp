#include "commands.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <ostream>
#include <stdexcept>

#include "ld/io.hpp"
#include "ld/regions.hpp"

namespace ld::cli {

namespace fs = std::filesystem;

namespace {

std::ofstream open_output(const fs::path& dir, const std::string& name) {
  fs::create_directories(dir);
  std::ofstream out(dir / name, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + (dir / name).string());
  return out;
}

std::array<double, 6> metric_values(const harness::Metrics& m) {
  return {m.mae, m.box_kl, m.cls_kl, m.feature_pearson, m.box_logit_pearson, m.flatness};
}

bool all_finite(const harness::ExperimentReport& report) {
  for (const auto& r : report.runs) {
    for (double v : metric_values(r.metrics)) {
      if (!std::isfinite(v)) return false;
    }
    for (const auto& t : r.trace) {
      if (!std::isfinite(t.total)) return false;
    }
  }
  return true;
}

void print_table(const harness::ExperimentReport& report, std::ostream& log) {
  std::map<harness::Scheme, std::pair<std::array<double, 6>, std::size_t>> mean;
  for (const auto& r : report.runs) {
    auto& [sum, count] = mean[r.scheme];
    const auto v = metric_values(r.metrics);
    for (std::size_t k = 0; k < v.size(); ++k) sum[k] += v[k];
    ++count;
  }
  log << std::left << std::setw(18) << "scheme" << std::right;
  for (const char* h : {"mae", "box_kl", "cls_kl", "feat_r", "box_r", "flat"}) {
    log << std::setw(11) << h;
  }
  log << '\n';
  for (const auto& r : report.runs) {
    auto it = mean.find(r.scheme);
    if (it == mean.end()) continue;
    const auto& [sum, count] = it->second;
    log << std::left << std::setw(18) << harness::scheme_name(r.scheme) << std::right;
    for (double s : sum) {
      log << std::setw(11) << std::setprecision(4) << s / static_cast<double>(count);
    }
    log << '\n';
    mean.erase(it);
  }
}

}  // namespace

int cmd_verify(const RunConfig& cfg, std::ostream& log) {
  const auto cert = theory::run_certificate(cfg.verify);
  auto out = open_output(cfg.output_dir, "certificate.json");
  io::write_certificate_json(out, cert);
  log << "proposition1_max_err        " << cert.proposition1_max_err << '\n'
      << "decomposition_max_residual  " << cert.decomposition_max_residual << '\n'
      << "rescaling_abs_err           " << cert.rescaling_abs_err << '\n'
      << "rescaling_mc_abs_err        " << cert.rescaling_mc_abs_err << " (se "
      << cert.rescaling_mc_standard_error << ")\n"
      << "gradient_sum_max_err        " << cert.gradient_sum_max_err << '\n';
  if (cert.passed()) {
    log << "verify: all checks passed\n";
    return kOk;
  }
  log << "verify: FAILED:";
  for (const auto& f : cert.failures) log << ' ' << f;
  log << '\n';
  return kCheckFailed;
}

int cmd_experiment(const RunConfig& cfg, std::ostream& log) {
  const auto report = harness::run_experiment(cfg.experiment);
  {
    auto out = open_output(cfg.output_dir, "metrics.csv");
    io::write_metrics_csv(out, report);
  }
  {
    auto out = open_output(cfg.output_dir, "summary.json");
    io::write_summary_json(out, report);
  }
  {
    auto out = open_output(cfg.output_dir, "trace.csv");
    io::write_trace_csv(out, report);
  }
  if (cfg.write_dataset) {
    for (auto rep : cfg.experiment.replicates) {
      const auto cell = derive_seed(cfg.experiment.seed, rep);
      const auto data = harness::gen_dataset(cfg.experiment.data, cfg.experiment.train.distill,
                                             derive_seed(cell, 1));
      auto train = open_output(cfg.output_dir, "dataset_" + std::to_string(rep) + "_train.jsonl");
      io::write_samples_jsonl(train, data.train);
      auto test = open_output(cfg.output_dir, "dataset_" + std::to_string(rep) + "_test.jsonl");
      io::write_samples_jsonl(test, data.test);
    }
  }
  print_table(report, log);
  if (!all_finite(report)) {
    log << "experiment: FAILED: non-finite metric or loss\n";
    return kCheckFailed;
  }
  return kOk;
}

int cmd_sweep(const RunConfig& cfg, std::ostream& log) {
  const auto rows = harness::sweep(cfg.experiment, cfg.sweep_parameter, cfg.sweep_values);
  auto out = open_output(cfg.output_dir, "sweep.csv");
  io::write_sweep_csv(out, cfg.sweep_parameter, rows);
  bool finite = true;
  for (const auto& row : rows) {
    log << harness::sweep_parameter_name(cfg.sweep_parameter) << " = " << row.value << '\n';
    print_table(row.report, log);
    finite = finite && all_finite(row.report);
  }
  if (!finite) {
    log << "sweep: FAILED: non-finite metric or loss\n";
    return kCheckFailed;
  }
  return kOk;
}

int cmd_dump_assignment(const RunConfig& cfg, std::ostream& log) {
  if (cfg.scene_path.empty()) throw ConfigError("scene: required for dump-assignment");
  std::ifstream in(cfg.scene_path);
  if (!in) throw ConfigError("scene: cannot open " + cfg.scene_path.string());
  const auto scene = io::read_scene(in);
  const auto d = cfg.distill();
  {
    auto out = open_output(cfg.output_dir, "assignment.csv");
    io::write_assignment_csv(out, scene, d.alpha_pos, d.gamma_vlr);
  }
  const auto unfolded = unfold_anchors(scene.anchors, scene.levels);
  const auto masks = assign_regions(unfolded.anchors, scene.gts, d.alpha_pos, d.gamma_vlr);
  {
    auto out = open_output(cfg.output_dir, "scene_masks.jsonl");
    io::write_scene_masks_jsonl(out, scene, masks);
  }
  log << unfolded.anchors.size() << " anchors, " << masks.main_count() << " main, "
      << masks.vlr_count() << " vlr\n";
  return kOk;
}

}  // namespace ld::cli
