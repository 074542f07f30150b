#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace ld {

/// Uniform discretization of a regression range [e_min, e_max] into n
/// sub-intervals with n + 1 endpoints.
class BinGrid {
 public:
  double e_min() const { return e_min_; }
  double e_max() const { return e_max_; }
  std::size_t n() const { return n_; }
  std::size_t size() const { return endpoints_.size(); }
  double step() const { return (e_max_ - e_min_) / static_cast<double>(n_); }
  const std::vector<double>& endpoints() const { return endpoints_; }
  double operator[](std::size_t i) const { return endpoints_[i]; }

  friend bool operator==(const BinGrid& a, const BinGrid& b) {
    return a.e_min_ == b.e_min_ && a.e_max_ == b.e_max_ && a.n_ == b.n_;
  }

 private:
  friend BinGrid make_grid(double e_min, double e_max, std::size_t n);
  BinGrid(double e_min, double e_max, std::size_t n);

  double e_min_;
  double e_max_;
  std::size_t n_;
  std::vector<double> endpoints_;
};

/// Throws std::invalid_argument for n == 0 or e_min >= e_max.
BinGrid make_grid(double e_min, double e_max, std::size_t n);

/// Softmax of z / tau, max-shifted. Throws for tau <= 0 or non-finite logits.
std::vector<double> generalized_softmax(std::span<const double> z, double tau);

/// log of generalized_softmax, computed without forming the probabilities.
std::vector<double> log_generalized_softmax(std::span<const double> z, double tau);

/// A continuous value y expressed as weights on its two bracketing endpoints:
/// y = u1 * e[index] + u2 * e[index + 1].
struct TwoHotTarget {
  std::size_t index = 0;
  double u1 = 1.0;
  double u2 = 0.0;

  /// Dense weight vector of the given length.
  std::vector<double> dense(std::size_t length) const;
};

/// Throws std::invalid_argument when y lies outside the grid range. A target at
/// e_max is reported as (n - 1, 0, 1) so that index + 1 stays on the grid.
TwoHotTarget encode_target(double y, const BinGrid& grid);

/// Expected endpoint value sum_i p_i e_i. p must have grid.size() entries and
/// sum to 1 within 1e-9.
double decode_expectation(std::span<const double> p, const BinGrid& grid);

/// Shannon entropy in nats, used as the sharpness/flatness diagnostic.
double flatness(std::span<const double> p);

/// Throws std::invalid_argument unless p is nonnegative and sums to 1 within tol.
void require_simplex(std::span<const double> p, double tol, const char* what);

/// One edge's n + 1 logits together with the grid they live on.
struct EdgeDistribution {
  std::vector<double> logits;
  BinGrid grid;

  EdgeDistribution(std::vector<double> logits, BinGrid grid);

  std::vector<double> probabilities(double tau = 1.0) const;
  double decode() const;
};

/// 4 edges for axis-aligned boxes (l, t, r, b), 5 for rotated deltas.
struct BoxDistribution {
  std::vector<EdgeDistribution> edges;

  std::size_t parameter_count() const;
};

}  // namespace ld
