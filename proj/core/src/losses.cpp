#include "ld/losses.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace ld {

DistillConfig DistillConfig::tied(double cls, double reg, double dfl) {
  DistillConfig cfg;
  cfg.lambda = {cls, reg, dfl, reg, reg, cls, cls};
  return cfg;
}

void DistillConfig::validate() const {
  if (!(tau > 0.0) || !std::isfinite(tau)) throw std::invalid_argument("tau: must be positive");
  if (!(gamma_vlr >= 0.0 && gamma_vlr <= 1.0)) {
    throw std::invalid_argument("gamma_vlr: must lie in [0, 1]");
  }
  if (!(alpha_pos > 0.0 && alpha_pos <= 1.0)) {
    throw std::invalid_argument("alpha_pos: must lie in (0, 1]");
  }
  for (std::size_t k = 0; k < lambda.size(); ++k) {
    if (!(lambda[k] >= 0.0) || !std::isfinite(lambda[k])) {
      throw std::invalid_argument("lambda" + std::to_string(k) + ": must be nonnegative");
    }
  }
  if (!(tbr_margin >= 0.0) || !std::isfinite(tbr_margin)) {
    throw std::invalid_argument("tbr_margin: must be nonnegative");
  }
}

LossResult ce_loss(std::span<const double> z, std::span<const double> g, double tau) {
  if (z.size() != g.size()) throw std::invalid_argument("ce_loss: length mismatch");
  require_simplex(g, 1e-9, "ce_loss target");
  const auto log_p = log_generalized_softmax(z, tau);
  LossResult r;
  r.grad.resize(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) {
    if (g[i] != 0.0) r.value -= g[i] * log_p[i];
    r.grad[i] = (std::exp(log_p[i]) - g[i]) / tau;
  }
  return r;
}

DistillationResult kd_loss(std::span<const double> z_student, std::span<const double> z_teacher,
                           double tau) {
  if (z_student.size() != z_teacher.size()) {
    throw std::invalid_argument("kd_loss: student and teacher logits differ in length");
  }
  const auto q = generalized_softmax(z_teacher, tau);
  DistillationResult r;
  static_cast<LossResult&>(r) = ce_loss(z_student, q, tau);

  const auto log_q = log_generalized_softmax(z_teacher, tau);
  const auto log_p = log_generalized_softmax(z_student, tau);
  double kl = 0.0;
  for (std::size_t i = 0; i < q.size(); ++i) kl += q[i] * (log_q[i] - log_p[i]);
  r.kl = std::max(kl, 0.0);
  return r;
}

DistillationResult ld_edge_loss(const EdgeDistribution& student, const EdgeDistribution& teacher,
                                double tau) {
  if (!(student.grid == teacher.grid)) {
    throw std::invalid_argument("ld_edge_loss: teacher and student use different bin grids");
  }
  return kd_loss(student.logits, teacher.logits, tau);
}

DistillationResult ld_box_loss(const BoxDistribution& student, const BoxDistribution& teacher,
                               double tau) {
  if (student.edges.size() != teacher.edges.size()) {
    throw std::invalid_argument("ld_box_loss: edge count mismatch (" +
                                std::to_string(student.edges.size()) + " vs " +
                                std::to_string(teacher.edges.size()) + ")");
  }
  DistillationResult total;
  total.grad.reserve(student.parameter_count());
  for (std::size_t e = 0; e < student.edges.size(); ++e) {
    const auto r = ld_edge_loss(student.edges[e], teacher.edges[e], tau);
    total.value += r.value;
    total.kl += r.kl;
    total.grad.insert(total.grad.end(), r.grad.begin(), r.grad.end());
  }
  return total;
}

LossResult dfl_loss(std::span<const double> z, const TwoHotTarget& target) {
  if (target.index + 1 >= z.size()) {
    throw std::out_of_range("dfl_loss: target index out of range");
  }
  if (target.u1 < 0.0 || target.u2 < 0.0 || std::abs(target.u1 + target.u2 - 1.0) > 1e-9) {
    throw std::invalid_argument("dfl_loss: weights must be nonnegative and sum to 1");
  }
  return ce_loss(z, target.dense(z.size()), 1.0);
}

LossResult giou_regression_loss(const BoundingBox& s, const BoundingBox& g) {
  const double value = 1.0 - giou(s, g);

  const double iw_raw = std::min(s.x2, g.x2) - std::max(s.x1, g.x1);
  const double ih_raw = std::min(s.y2, g.y2) - std::max(s.y1, g.y1);
  const double iw = std::max(0.0, iw_raw);
  const double ih = std::max(0.0, ih_raw);
  const double inter = iw * ih;
  const double uni = s.area() + g.area() - inter;
  const double cw = std::max(s.x2, g.x2) - std::min(s.x1, g.x1);
  const double ch = std::max(s.y2, g.y2) - std::min(s.y1, g.y1);
  const double c = cw * ch;

  // d/d(x1, y1, x2, y2) of the intersection, the student area and the enclosure.
  const bool overlaps = iw_raw > 0.0 && ih_raw > 0.0;
  const std::array<double, 4> d_inter{
      overlaps && s.x1 > g.x1 ? -ih : 0.0,
      overlaps && s.y1 > g.y1 ? -iw : 0.0,
      overlaps && s.x2 < g.x2 ? ih : 0.0,
      overlaps && s.y2 < g.y2 ? iw : 0.0,
  };
  const std::array<double, 4> d_area{-s.height(), -s.width(), s.height(), s.width()};
  const std::array<double, 4> d_c{
      s.x1 < g.x1 ? -ch : 0.0,
      s.y1 < g.y1 ? -cw : 0.0,
      s.x2 > g.x2 ? ch : 0.0,
      s.y2 > g.y2 ? cw : 0.0,
  };

  // giou = I/U - 1 + U/C
  LossResult r{value, std::vector<double>(4)};
  for (std::size_t k = 0; k < 4; ++k) {
    const double d_uni = d_area[k] - d_inter[k];
    const double d_giou = d_inter[k] / uni - inter * d_uni / (uni * uni) + d_uni / c -
                          uni * d_c[k] / (c * c);
    r.grad[k] = -d_giou;
  }
  return r;
}

double corner_distance(const BoundingBox& a, const BoundingBox& b) {
  const double d1 = a.x1 - b.x1;
  const double d2 = a.y1 - b.y1;
  const double d3 = a.x2 - b.x2;
  const double d4 = a.y2 - b.y2;
  return std::sqrt(d1 * d1 + d2 * d2 + d3 * d3 + d4 * d4);
}

LossResult tbr_loss(const BoundingBox& student, const BoundingBox& teacher,
                    const BoundingBox& gt, double margin) {
  if (!student.valid() || !teacher.valid() || !gt.valid()) {
    throw std::invalid_argument("tbr_loss: invalid box");
  }
  if (corner_distance(student, gt) + margin > corner_distance(teacher, gt)) {
    return giou_regression_loss(student, gt);
  }
  return {0.0, std::vector<double>(4, 0.0)};
}

LossResult feature_imitation_loss(std::span<const double> student,
                                  std::span<const double> teacher, std::size_t dim,
                                  const std::vector<bool>& region) {
  if (dim == 0 || student.size() != teacher.size() || student.size() != dim * region.size()) {
    throw std::invalid_argument("feature_imitation_loss: feature shapes do not match");
  }
  const auto count = static_cast<std::size_t>(std::count(region.begin(), region.end(), true));
  if (count == 0) throw std::invalid_argument("feature_imitation_loss: empty imitation region");

  const double inv = 1.0 / static_cast<double>(count);
  LossResult r{0.0, std::vector<double>(student.size(), 0.0)};
  for (std::size_t loc = 0; loc < region.size(); ++loc) {
    if (!region[loc]) continue;
    const std::size_t base = loc * dim;
    double sq = 0.0;
    for (std::size_t k = 0; k < dim; ++k) {
      const double d = student[base + k] - teacher[base + k];
      sq += d * d;
    }
    const double norm = std::sqrt(sq);
    r.value += inv * norm;
    if (norm > 0.0) {
      for (std::size_t k = 0; k < dim; ++k) {
        r.grad[base + k] = inv * (student[base + k] - teacher[base + k]) / norm;
      }
    }
  }
  return r;
}

std::array<double, 4> LocationTarget::edges() const {
  return {px - gt_box.x1, py - gt_box.y1, gt_box.x2 - px, gt_box.y2 - py};
}

namespace {

void require_ltrb(const BoxDistribution& box) {
  if (box.edges.size() != 4) {
    throw std::invalid_argument("expected a 4-edge (l, t, r, b) box distribution");
  }
}

}  // namespace

BoundingBox decode_ltrb(const BoxDistribution& box, double px, double py) {
  require_ltrb(box);
  const double l = box.edges[0].decode();
  const double t = box.edges[1].decode();
  const double r = box.edges[2].decode();
  const double b = box.edges[3].decode();
  return BoundingBox::make(px - l, py - t, px + r, py + b);
}

std::vector<double> chain_box_gradient(const BoxDistribution& box,
                                       const std::array<double, 4>& dcorners) {
  require_ltrb(box);
  // x1 = px - l, y1 = py - t, x2 = px + r, y2 = py + b
  const std::array<double, 4> dedge{-dcorners[0], -dcorners[1], dcorners[2], dcorners[3]};
  std::vector<double> grad;
  grad.reserve(box.parameter_count());
  for (std::size_t e = 0; e < 4; ++e) {
    const auto& edge = box.edges[e];
    const auto p = edge.probabilities();
    double mean = 0.0;
    for (std::size_t k = 0; k < p.size(); ++k) mean += p[k] * edge.grid[k];
    for (std::size_t k = 0; k < p.size(); ++k) {
      grad.push_back(dedge[e] * p[k] * (edge.grid[k] - mean));
    }
  }
  return grad;
}

namespace {

void add_scaled(std::vector<double>& dst, std::size_t offset, const std::vector<double>& src,
                double scale) {
  for (std::size_t k = 0; k < src.size(); ++k) dst[offset + k] += scale * src[k];
}

double mean_weight(double lambda, std::size_t count) {
  return count == 0 ? 0.0 : lambda / static_cast<double>(count);
}

}  // namespace

TotalLossResult total_loss(std::span<const HeadOutput> student, std::span<const HeadOutput> teacher,
                           std::span<const LocationTarget> targets, const RegionMasks& masks,
                           const DistillConfig& cfg) {
  cfg.validate();
  masks.validate();
  const std::size_t n = student.size();
  if (n == 0) throw std::invalid_argument("total_loss: no locations");
  if (targets.size() != n || masks.size() != n) {
    throw std::invalid_argument("total_loss: student, targets and masks differ in length");
  }
  const auto& lam = cfg.lambda;
  const bool distilling = lam[3] > 0.0 || lam[4] > 0.0 || lam[5] > 0.0 || lam[6] > 0.0;
  if (distilling && teacher.size() != n) {
    throw std::invalid_argument("total_loss: distillation weights set but teacher outputs missing");
  }

  const std::size_t n_main = masks.main_count();
  const std::size_t n_vlr = masks.vlr_count();

  std::vector<std::size_t> offset(n + 1, 0);
  for (std::size_t i = 0; i < n; ++i) {
    require_ltrb(student[i].box);
    offset[i + 1] = offset[i] + student[i].parameter_count();
  }

  TotalLossResult out;
  out.grad.assign(offset[n], 0.0);
  LossBreakdown& parts = out.parts;

  const double w_cls = mean_weight(lam[0], n);
  const double w_main[4] = {mean_weight(lam[1], n_main), mean_weight(lam[2], n_main),
                            mean_weight(lam[3], n_main), mean_weight(lam[5], n_main)};
  const double w_ld_vlr = mean_weight(lam[4], n_vlr);
  const double w_kd_vlr = mean_weight(lam[6], n_vlr);

  for (std::size_t i = 0; i < n; ++i) {
    const HeadOutput& s = student[i];
    const std::size_t cls_off = offset[i];
    const std::size_t box_off = offset[i] + s.cls_logits.size();

    const auto label = static_cast<std::size_t>(targets[i].label);
    if (targets[i].label < 0 || label >= s.cls_logits.size()) {
      throw std::out_of_range("total_loss: class label out of range");
    }
    std::vector<double> onehot(s.cls_logits.size(), 0.0);
    onehot[label] = 1.0;
    const auto cls = ce_loss(s.cls_logits, onehot);
    parts.cls += cls.value / static_cast<double>(n);
    add_scaled(out.grad, cls_off, cls.grad, w_cls);

    const bool in_main = masks.main[i];
    const bool in_vlr = masks.vlr[i];

    if (in_main) {
      const auto& t = targets[i];
      const auto reg = giou_regression_loss(decode_ltrb(s.box, t.px, t.py), t.gt_box);
      parts.reg += reg.value / static_cast<double>(n_main);
      add_scaled(out.grad, box_off,
                 chain_box_gradient(s.box, {reg.grad[0], reg.grad[1], reg.grad[2], reg.grad[3]}),
                 w_main[0]);

      const auto edges = t.edges();
      std::size_t edge_off = box_off;
      for (std::size_t e = 0; e < 4; ++e) {
        const auto& edge = s.box.edges[e];
        const auto dfl = dfl_loss(edge.logits, encode_target(edges[e], edge.grid));
        parts.dfl += dfl.value / static_cast<double>(n_main);
        add_scaled(out.grad, edge_off, dfl.grad, w_main[1]);
        edge_off += edge.logits.size();
      }
    }

    if (!teacher.empty() && (in_main || in_vlr)) {
      const HeadOutput& t = teacher[i];
      const auto ld = ld_box_loss(s.box, t.box, cfg.tau);
      const auto kd = kd_loss(s.cls_logits, t.cls_logits, cfg.tau);
      const std::size_t count = in_main ? n_main : n_vlr;
      const double w_ld = in_main ? w_main[2] : w_ld_vlr;
      const double w_kd = in_main ? w_main[3] : w_kd_vlr;
      (in_main ? parts.ld_main : parts.ld_vlr) += ld.value / static_cast<double>(count);
      (in_main ? parts.kd_main : parts.kd_vlr) += kd.value / static_cast<double>(count);
      add_scaled(out.grad, box_off, ld.grad, w_ld);
      add_scaled(out.grad, cls_off, kd.grad, w_kd);
    }
  }

  const auto values = parts.as_array();
  for (std::size_t k = 0; k < values.size(); ++k) out.value += lam[k] * values[k];
  return out;
}

}  // namespace ld
