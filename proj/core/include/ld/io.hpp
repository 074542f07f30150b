#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "ld/geometry.hpp"
#include "ld/harness.hpp"
#include "ld/regions.hpp"
#include "ld/theory.hpp"

namespace ld::io {

/// Shortest representation that reads back to the same double.
std::string format_double(double v);

// Datasets: one JSON object per line.
void write_samples_jsonl(std::ostream& out, const std::vector<harness::SyntheticSample>& samples);
/// Throws std::invalid_argument naming the offending line.
std::vector<harness::SyntheticSample> read_samples_jsonl(std::istream& in);

/// Anchors grouped by location plus the gt boxes of one image.
struct Scene {
  std::vector<std::vector<BoundingBox>> anchors;  // per location
  std::vector<int> levels;                        // per location, may be empty
  std::vector<BoundingBox> gts;
};

/// {"anchors": [[[x1,y1,x2,y2], ...], ...], "levels": [...], "gts": [[...], ...]}
Scene read_scene(std::istream& in);
void write_scene(std::ostream& out, const Scene& scene);

/// One JSONL line holding the scene and its bit-array masks.
void write_scene_masks_jsonl(std::ostream& out, const Scene& scene, const RegionMasks& masks);

/// CSV header anchor_id,level,diou_nearest_gt,main,vlr and one row per anchor.
void write_assignment_csv(std::ostream& out, const Scene& scene, double alpha_pos, double gamma);

void write_certificate_json(std::ostream& out, const theory::Certificate& cert);

/// Long format: scheme,seed,metric,value.
void write_metrics_csv(std::ostream& out, const harness::ExperimentReport& report);
void write_summary_json(std::ostream& out, const harness::ExperimentReport& report);
/// Columns scheme,seed,step, the seven loss parts, total.
void write_trace_csv(std::ostream& out, const harness::ExperimentReport& report);

/// Long format with the swept value prepended:
/// parameter,parameter_value,scheme,seed,metric,value.
void write_sweep_csv(std::ostream& out, harness::SweepParameter parameter,
                     const std::vector<harness::SweepRow>& rows);

}  // namespace ld::io
