#include "ld/io.hpp"

#include <array>
#include <charconv>
#include <istream>
#include <limits>
#include <ostream>
#include <stdexcept>
#include <utility>

#include "json.hpp"

namespace ld::io {

using nlohmann::json;

std::string format_double(double v) {
  std::array<char, 64> buf{};
  const auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  if (ec != std::errc()) throw std::runtime_error("format_double: conversion failed");
  return std::string(buf.data(), end);
}

namespace {

json box_json(const BoundingBox& b) { return json::array({b.x1, b.y1, b.x2, b.y2}); }

BoundingBox box_from(const json& j) {
  if (!j.is_array() || j.size() != 4) {
    throw std::invalid_argument("box must be an array [x1, y1, x2, y2]");
  }
  return BoundingBox::make(j[0].get<double>(), j[1].get<double>(), j[2].get<double>(),
                           j[3].get<double>());
}

json sample_json(const harness::SyntheticSample& s) {
  json ambiguity = json::array();
  for (const auto& m : s.ambiguity) {
    ambiguity.push_back({{"centers", m.centers}, {"weights", m.weights}});
  }
  return {{"features", s.features},
          {"true_edges", s.true_edges},
          {"observed_edges", s.observed_edges},
          {"ambiguity", ambiguity},
          {"class_label", s.class_label},
          {"anchor", box_json(s.anchor)},
          {"main", s.main},
          {"vlr", s.vlr}};
}

harness::SyntheticSample sample_from(const json& j) {
  harness::SyntheticSample s;
  s.features = j.at("features").get<std::vector<double>>();
  s.true_edges = j.at("true_edges").get<std::array<double, 4>>();
  s.observed_edges = j.at("observed_edges").get<std::array<double, 4>>();
  const auto& amb = j.at("ambiguity");
  if (!amb.is_array() || amb.size() != 4) throw std::invalid_argument("ambiguity: need 4 mixtures");
  for (std::size_t e = 0; e < 4; ++e) {
    s.ambiguity[e].centers = amb[e].at("centers").get<std::vector<double>>();
    s.ambiguity[e].weights = amb[e].at("weights").get<std::vector<double>>();
  }
  s.class_label = j.at("class_label").get<int>();
  s.anchor = box_from(j.at("anchor"));
  s.main = j.at("main").get<bool>();
  s.vlr = j.at("vlr").get<bool>();
  return s;
}

json metrics_json(const harness::Metrics& m) {
  return {{"mae", m.mae},
          {"box_kl", m.box_kl},
          {"cls_kl", m.cls_kl},
          {"feature_pearson", m.feature_pearson},
          {"box_logit_pearson", m.box_logit_pearson},
          {"flatness", m.flatness}};
}

std::array<std::pair<const char*, double>, 6> metric_pairs(const harness::Metrics& m) {
  return {{{"mae", m.mae},
           {"box_kl", m.box_kl},
           {"cls_kl", m.cls_kl},
           {"feature_pearson", m.feature_pearson},
           {"box_logit_pearson", m.box_logit_pearson},
           {"flatness", m.flatness}}};
}

json scene_json(const Scene& scene) {
  json anchors = json::array();
  for (const auto& loc : scene.anchors) {
    json row = json::array();
    for (const auto& a : loc) row.push_back(box_json(a));
    anchors.push_back(row);
  }
  json gts = json::array();
  for (const auto& g : scene.gts) gts.push_back(box_json(g));
  return {{"anchors", anchors}, {"levels", scene.levels}, {"gts", gts}};
}

json bits(const std::vector<bool>& v) {
  json out = json::array();
  for (bool b : v) out.push_back(b ? 1 : 0);
  return out;
}

}  // namespace

void write_samples_jsonl(std::ostream& out, const std::vector<harness::SyntheticSample>& samples) {
  for (const auto& s : samples) out << sample_json(s).dump() << '\n';
}

std::vector<harness::SyntheticSample> read_samples_jsonl(std::istream& in) {
  std::vector<harness::SyntheticSample> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      out.push_back(sample_from(json::parse(line)));
    } catch (const std::exception& e) {
      throw std::invalid_argument("samples line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

Scene read_scene(std::istream& in) {
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("scene: ") + e.what());
  }
  Scene scene;
  try {
    for (const auto& loc : j.at("anchors")) {
      std::vector<BoundingBox> row;
      for (const auto& a : loc) row.push_back(box_from(a));
      scene.anchors.push_back(std::move(row));
    }
    if (j.contains("levels")) scene.levels = j.at("levels").get<std::vector<int>>();
    for (const auto& g : j.at("gts")) scene.gts.push_back(box_from(g));
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("scene: ") + e.what());
  }
  if (!scene.levels.empty() && scene.levels.size() != scene.anchors.size()) {
    throw std::invalid_argument("scene.levels: need one entry per anchor location");
  }
  return scene;
}

void write_scene(std::ostream& out, const Scene& scene) { out << scene_json(scene).dump(2) << '\n'; }

void write_scene_masks_jsonl(std::ostream& out, const Scene& scene, const RegionMasks& masks) {
  json j = scene_json(scene);
  j["main"] = bits(masks.main);
  j["vlr"] = bits(masks.vlr);
  out << j.dump() << '\n';
}

void write_assignment_csv(std::ostream& out, const Scene& scene, double alpha_pos, double gamma) {
  const auto unfolded = unfold_anchors(scene.anchors, scene.levels);
  const auto masks = assign_regions(unfolded.anchors, scene.gts, alpha_pos, gamma);
  out << "anchor_id,level,diou_nearest_gt,main,vlr\n";
  for (std::size_t a = 0; a < unfolded.anchors.size(); ++a) {
    out << a << ',' << unfolded.level[a] << ',';
    if (scene.gts.empty()) {
      out << "nan";
    } else {
      double best = -std::numeric_limits<double>::infinity();
      for (const auto& g : scene.gts) best = std::max(best, diou(unfolded.anchors[a], g));
      out << format_double(best);
    }
    out << ',' << (masks.main[a] ? 1 : 0) << ',' << (masks.vlr[a] ? 1 : 0) << '\n';
  }
}

void write_certificate_json(std::ostream& out, const theory::Certificate& cert) {
  const json j = {{"proposition1_max_err", cert.proposition1_max_err},
                  {"decomposition_max_residual", cert.decomposition_max_residual},
                  {"decomposition_rank_ok", cert.decomposition_rank_ok},
                  {"rescaling_abs_err", cert.rescaling_abs_err},
                  {"rescaling_mc_abs_err", cert.rescaling_mc_abs_err},
                  {"rescaling_mc_standard_error", cert.rescaling_mc_standard_error},
                  {"gradient_sum_max_err", cert.gradient_sum_max_err},
                  {"trials", cert.trials},
                  {"seed", cert.seed},
                  {"passed", cert.passed()},
                  {"failures", cert.failures}};
  out << j.dump(2) << '\n';
}

void write_metrics_csv(std::ostream& out, const harness::ExperimentReport& report) {
  out << "scheme,seed,metric,value\n";
  for (const auto& r : report.runs) {
    for (const auto& [name, v] : metric_pairs(r.metrics)) {
      out << harness::scheme_name(r.scheme) << ',' << r.replicate << ',' << name << ','
          << format_double(v) << '\n';
    }
  }
}

void write_summary_json(std::ostream& out, const harness::ExperimentReport& report) {
  json runs = json::array();
  for (const auto& r : report.runs) {
    runs.push_back({{"scheme", harness::scheme_name(r.scheme)},
                    {"seed", r.replicate},
                    {"metrics", metrics_json(r.metrics)},
                    {"final_loss", r.trace.empty() ? 0.0 : r.trace.back().total}});
  }
  json reps = json::array();
  for (const auto& r : report.replicates) {
    reps.push_back({{"seed", r.replicate},
                    {"teacher", metrics_json(r.teacher)},
                    {"main_count", r.main_count},
                    {"vlr_count", r.vlr_count}});
  }
  out << json{{"runs", runs}, {"replicates", reps}}.dump(2) << '\n';
}

void write_trace_csv(std::ostream& out, const harness::ExperimentReport& report) {
  out << "scheme,seed,step,L_cls,L_reg,L_DFL,LD_main,LD_vlr,KD_main,KD_vlr,total\n";
  for (const auto& r : report.runs) {
    for (const auto& t : r.trace) {
      out << harness::scheme_name(r.scheme) << ',' << r.replicate << ',' << t.step;
      for (double v : t.parts.as_array()) out << ',' << format_double(v);
      out << ',' << format_double(t.total) << '\n';
    }
  }
}

void write_sweep_csv(std::ostream& out, harness::SweepParameter parameter,
                     const std::vector<harness::SweepRow>& rows) {
  out << "parameter,parameter_value,scheme,seed,metric,value\n";
  for (const auto& row : rows) {
    for (const auto& r : row.report.runs) {
      for (const auto& [name, v] : metric_pairs(r.metrics)) {
        out << harness::sweep_parameter_name(parameter) << ',' << format_double(row.value) << ','
            << harness::scheme_name(r.scheme) << ',' << r.replicate << ',' << name << ','
            << format_double(v) << '\n';
      }
    }
  }
}

}  // namespace ld::io
