#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <vector>

#include "ld/boxdist.hpp"
#include "ld/geometry.hpp"
#include "ld/regions.hpp"

namespace ld {

/// A loss value together with its gradient with respect to the student
/// parameter it differentiates (logits, box corners or feature entries).
struct LossResult {
  double value = 0.0;
  std::vector<double> grad;
};

/// Soft-target distillation result. `value` is the cross-entropy
/// H(teacher, student) at temperature tau; `kl` subtracts the teacher entropy and
/// is zero at a perfect match. Both share the same gradient.
struct DistillationResult : LossResult {
  double kl = 0.0;
};

/// Every scalar of the composite objective. lambda[k] weights term k in the
/// order cls, reg, dfl, ld_main, ld_vlr, kd_main, kd_vlr.
struct DistillConfig {
  double tau = 10.0;
  double gamma_vlr = 0.25;
  double alpha_pos = 0.5;
  std::array<double, 7> lambda{1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0};
  double tbr_margin = 0.1;
  BinGrid grid = make_grid(0.0, 8.0, 8);

  /// LD weights follow the regression weight and KD weights follow the
  /// classification weight.
  static DistillConfig tied(double cls, double reg, double dfl);

  /// Throws std::invalid_argument naming the offending field.
  void validate() const;
};

/// H(g, softmax(z / tau)) = -sum g_i log p_i with gradient (p - g) / tau.
/// g must be a probability vector (one-hot, two-hot or soft).
LossResult ce_loss(std::span<const double> z, std::span<const double> g, double tau = 1.0);

/// Temperature-softened logit mimicking. Gradient (1/tau)(p_tau - q_tau) with
/// p the student and q the teacher distribution; no tau^2 factor is applied.
DistillationResult kd_loss(std::span<const double> z_student, std::span<const double> z_teacher,
                           double tau);

/// kd_loss on one edge's n + 1 logits. Both edges must share the same grid.
DistillationResult ld_edge_loss(const EdgeDistribution& student, const EdgeDistribution& teacher,
                                double tau);

/// Sum of ld_edge_loss over the 4 (or 5) edges; gradient is the concatenation
/// of the per-edge gradients.
DistillationResult ld_box_loss(const BoxDistribution& student, const BoxDistribution& teacher,
                               double tau);

/// u1 * H(p, g^i) + u2 * H(p, g^{i+1}); gradient p - u1 e_i - u2 e_{i+1}.
LossResult dfl_loss(std::span<const double> z, const TwoHotTarget& target);

/// 1 - giou(student, gt) with the gradient taken w.r.t. (x1, y1, x2, y2) of the
/// student box. Where a student coordinate equals the matching gt coordinate
/// the loss has a kink; there both the intersection and enclosure terms are
/// treated as not depending on that coordinate.
LossResult giou_regression_loss(const BoundingBox& student, const BoundingBox& gt);

/// Corner-coordinate Euclidean distance between two boxes.
double corner_distance(const BoundingBox& a, const BoundingBox& b);

/// Teacher-bounded regression: the GIoU loss applies only when
/// |s - gt| + margin > |t - gt| (corner l2); otherwise value and gradient are 0.
LossResult tbr_loss(const BoundingBox& student, const BoundingBox& teacher,
                    const BoundingBox& gt, double margin);

/// (1/|R|) sum_{r in R} ||Ms(r) - Mt(r)||_2 over row-major [locations x dim]
/// feature matrices. The gradient is w.r.t. student entries; rows outside R
/// and rows with an exact match get zero gradient.
LossResult feature_imitation_loss(std::span<const double> student,
                                  std::span<const double> teacher, std::size_t dim,
                                  const std::vector<bool>& region);

/// Outputs of the detection head at one location.
struct HeadOutput {
  std::vector<double> cls_logits;
  BoxDistribution box;  // edges in (left, top, right, bottom) order

  std::size_t parameter_count() const { return cls_logits.size() + box.parameter_count(); }
};

/// Ground truth at one location. Box edges are distances from the anchor point
/// (px, py) to the sides of gt_box.
struct LocationTarget {
  int label = 0;
  double px = 0.0;
  double py = 0.0;
  BoundingBox gt_box;

  std::array<double, 4> edges() const;
};

/// Expectation-decoded box of a 4-edge distribution around the anchor point.
BoundingBox decode_ltrb(const BoxDistribution& box, double px, double py);

/// Chains a gradient w.r.t. the decoded box corners back to the edge logits
/// (tau = 1 softmax, expectation decoding). Result is laid out like the
/// concatenated edge logits.
std::vector<double> chain_box_gradient(const BoxDistribution& box,
                                       const std::array<double, 4>& dcorners);

/// Unweighted, mask-averaged component values of the composite objective.
struct LossBreakdown {
  double cls = 0.0;
  double reg = 0.0;
  double dfl = 0.0;
  double ld_main = 0.0;
  double ld_vlr = 0.0;
  double kd_main = 0.0;
  double kd_vlr = 0.0;

  std::array<double, 7> as_array() const {
    return {cls, reg, dfl, ld_main, ld_vlr, kd_main, kd_vlr};
  }
};

struct TotalLossResult {
  double value = 0.0;
  std::vector<double> grad;  // per location: cls logits, then the edge logits
  LossBreakdown parts;
};

/// Composite objective sum_k lambda_k * parts_k. Classification is averaged over
/// all locations; regression, DFL and the main-region distillation terms over
/// main locations; the VLR terms over VLR locations. An empty mask contributes 0.
/// `teacher` may be empty only when every distillation weight is zero.
TotalLossResult total_loss(std::span<const HeadOutput> student, std::span<const HeadOutput> teacher,
                           std::span<const LocationTarget> targets, const RegionMasks& masks,
                           const DistillConfig& cfg);

}  // namespace ld
