#pragma once

#include <cstddef>
#include <vector>

namespace ld {

/// Axis-aligned box in corner form. Zero-area boxes are allowed.
struct BoundingBox {
  double x1 = 0.0;
  double y1 = 0.0;
  double x2 = 0.0;
  double y2 = 0.0;

  /// Validating constructor; throws std::invalid_argument unless x1 <= x2 and y1 <= y2.
  static BoundingBox make(double x1, double y1, double x2, double y2);

  double width() const { return x2 - x1; }
  double height() const { return y2 - y1; }
  double area() const { return width() * height(); }
  double cx() const { return 0.5 * (x1 + x2); }
  double cy() const { return 0.5 * (y1 + y2); }

  bool valid() const;

  friend bool operator==(const BoundingBox&, const BoundingBox&) = default;
};

/// Wraps an angle into [-pi/2, pi/2).
double normalize_angle(double theta);

/// Five-parameter rotated box. Construction enforces the long-edge convention:
/// w >= h and theta in [-pi/2, pi/2). A box given with h > w is rotated by pi/2.
class RotatedBox {
 public:
  RotatedBox(double cx, double cy, double w, double h, double theta);

  double cx() const { return cx_; }
  double cy() const { return cy_; }
  double w() const { return w_; }
  double h() const { return h_; }
  double theta() const { return theta_; }

  friend bool operator==(const RotatedBox&, const RotatedBox&) = default;

 private:
  double cx_;
  double cy_;
  double w_;
  double h_;
  double theta_;
};

struct RotatedDeltas {
  double dx = 0.0;
  double dy = 0.0;
  double dw = 0.0;
  double dh = 0.0;
  double dtheta = 0.0;
};

// IoU family. Each throws std::domain_error where the defining ratio has a zero
// denominator (zero union, zero-area enclosing box, zero enclosing diagonal).

double iou(const BoundingBox& a, const BoundingBox& b);

/// iou - (C - U) / C with C the area of the smallest enclosing box.
double giou(const BoundingBox& a, const BoundingBox& b);

/// iou - rho^2 / c^2, rho the center distance and c the enclosing-box diagonal.
double diou(const BoundingBox& a, const BoundingBox& b);

/// Row-major I x J matrix of diou(anchors[i], gts[j]).
struct DiouMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;

  double operator()(std::size_t i, std::size_t j) const { return values[i * cols + j]; }
};

DiouMatrix diou_matrix(const std::vector<BoundingBox>& anchors,
                       const std::vector<BoundingBox>& gts);

/// Parametric encoding: center offsets scaled by anchor extents, log extent
/// ratios, and the normalized angle difference.
RotatedDeltas encode_rotated(const RotatedBox& anchor, const RotatedBox& gt);
RotatedBox decode_rotated(const RotatedBox& anchor, const RotatedDeltas& d);

}  // namespace ld
