#include "ld/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace ld {

namespace {

struct Overlap {
  double inter;
  double uni;
};

Overlap overlap(const BoundingBox& a, const BoundingBox& b) {
  const double iw = std::max(0.0, std::min(a.x2, b.x2) - std::max(a.x1, b.x1));
  const double ih = std::max(0.0, std::min(a.y2, b.y2) - std::max(a.y1, b.y1));
  const double inter = iw * ih;
  return {inter, a.area() + b.area() - inter};
}

BoundingBox enclosing(const BoundingBox& a, const BoundingBox& b) {
  return {std::min(a.x1, b.x1), std::min(a.y1, b.y1), std::max(a.x2, b.x2),
          std::max(a.y2, b.y2)};
}

void require_valid(const BoundingBox& b, const char* what) {
  if (!b.valid()) {
    throw std::invalid_argument(std::string(what) + ": box corners out of order");
  }
}

}  // namespace

BoundingBox BoundingBox::make(double x1, double y1, double x2, double y2) {
  BoundingBox b{x1, y1, x2, y2};
  require_valid(b, "BoundingBox");
  return b;
}

bool BoundingBox::valid() const {
  return std::isfinite(x1) && std::isfinite(y1) && std::isfinite(x2) &&
         std::isfinite(y2) && x1 <= x2 && y1 <= y2;
}

double normalize_angle(double theta) {
  constexpr double pi = std::numbers::pi;
  double t = theta - pi * std::floor((theta + 0.5 * pi) / pi);
  // floor() rounding can leave t == pi/2 for inputs just below an odd multiple.
  if (t >= 0.5 * pi) t -= pi;
  if (t < -0.5 * pi) t += pi;
  return t;
}

RotatedBox::RotatedBox(double cx, double cy, double w, double h, double theta)
    : cx_(cx), cy_(cy), w_(w), h_(h), theta_(theta) {
  if (!(w > 0.0) || !(h > 0.0) || !std::isfinite(w) || !std::isfinite(h)) {
    throw std::invalid_argument("RotatedBox: extents must be positive and finite");
  }
  if (!std::isfinite(cx) || !std::isfinite(cy) || !std::isfinite(theta)) {
    throw std::invalid_argument("RotatedBox: non-finite center or angle");
  }
  if (h_ > w_) {
    std::swap(w_, h_);
    theta_ += 0.5 * std::numbers::pi;
  }
  theta_ = normalize_angle(theta_);
}

double iou(const BoundingBox& a, const BoundingBox& b) {
  require_valid(a, "iou");
  require_valid(b, "iou");
  const auto [inter, uni] = overlap(a, b);
  if (uni <= 0.0) throw std::domain_error("iou: zero union area");
  return inter / uni;
}

double giou(const BoundingBox& a, const BoundingBox& b) {
  require_valid(a, "giou");
  require_valid(b, "giou");
  const double c = enclosing(a, b).area();
  if (c <= 0.0) throw std::domain_error("giou: zero-area enclosing box");
  const auto [inter, uni] = overlap(a, b);
  if (uni <= 0.0) throw std::domain_error("giou: zero union area");
  return inter / uni - (c - uni) / c;
}

double diou(const BoundingBox& a, const BoundingBox& b) {
  require_valid(a, "diou");
  require_valid(b, "diou");
  const BoundingBox e = enclosing(a, b);
  const double diag2 = e.width() * e.width() + e.height() * e.height();
  if (diag2 <= 0.0) throw std::domain_error("diou: zero enclosing diagonal");
  const double dx = a.cx() - b.cx();
  const double dy = a.cy() - b.cy();
  return iou(a, b) - (dx * dx + dy * dy) / diag2;
}

DiouMatrix diou_matrix(const std::vector<BoundingBox>& anchors,
                       const std::vector<BoundingBox>& gts) {
  if (anchors.empty() || gts.empty()) {
    throw std::invalid_argument("diou_matrix: empty box list");
  }
  DiouMatrix m{anchors.size(), gts.size(), {}};
  m.values.reserve(m.rows * m.cols);
  for (const auto& a : anchors) {
    for (const auto& g : gts) m.values.push_back(diou(a, g));
  }
  return m;
}

RotatedDeltas encode_rotated(const RotatedBox& anchor, const RotatedBox& gt) {
  return {(gt.cx() - anchor.cx()) / anchor.w(), (gt.cy() - anchor.cy()) / anchor.h(),
          std::log(gt.w() / anchor.w()), std::log(gt.h() / anchor.h()),
          normalize_angle(gt.theta() - anchor.theta())};
}

RotatedBox decode_rotated(const RotatedBox& anchor, const RotatedDeltas& d) {
  if (!std::isfinite(d.dx) || !std::isfinite(d.dy) || !std::isfinite(d.dw) ||
      !std::isfinite(d.dh) || !std::isfinite(d.dtheta)) {
    throw std::invalid_argument("decode_rotated: non-finite deltas");
  }
  return {anchor.cx() + d.dx * anchor.w(), anchor.cy() + d.dy * anchor.h(),
          anchor.w() * std::exp(d.dw), anchor.h() * std::exp(d.dh),
          anchor.theta() + d.dtheta};
}

}  // namespace ld
