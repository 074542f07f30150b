#include "ld/boxdist.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace ld {

BinGrid::BinGrid(double e_min, double e_max, std::size_t n)
    : e_min_(e_min), e_max_(e_max), n_(n), endpoints_(n + 1) {
  const double step = (e_max - e_min) / static_cast<double>(n);
  for (std::size_t i = 0; i <= n; ++i) {
    endpoints_[i] = e_min + step * static_cast<double>(i);
  }
  endpoints_[n] = e_max;
}

BinGrid make_grid(double e_min, double e_max, std::size_t n) {
  if (n == 0) throw std::invalid_argument("make_grid: n must be at least 1");
  if (!std::isfinite(e_min) || !std::isfinite(e_max) || !(e_min < e_max)) {
    throw std::invalid_argument("make_grid: require finite e_min < e_max");
  }
  return BinGrid(e_min, e_max, n);
}

namespace {

void check_softmax_args(std::span<const double> z, double tau) {
  if (!(tau > 0.0) || !std::isfinite(tau)) {
    throw std::invalid_argument("generalized_softmax: tau must be positive");
  }
  if (z.empty()) throw std::invalid_argument("generalized_softmax: empty logits");
  for (double v : z) {
    if (!std::isfinite(v)) throw std::invalid_argument("generalized_softmax: non-finite logit");
  }
}

}  // namespace

std::vector<double> generalized_softmax(std::span<const double> z, double tau) {
  check_softmax_args(z, tau);
  const double zmax = *std::max_element(z.begin(), z.end());
  std::vector<double> p(z.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    p[i] = std::exp((z[i] - zmax) / tau);
    sum += p[i];
  }
  for (double& v : p) v /= sum;
  return p;
}

std::vector<double> log_generalized_softmax(std::span<const double> z, double tau) {
  check_softmax_args(z, tau);
  const double zmax = *std::max_element(z.begin(), z.end());
  double sum = 0.0;
  for (double v : z) sum += std::exp((v - zmax) / tau);
  const double log_sum = std::log(sum);
  std::vector<double> lp(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) lp[i] = (z[i] - zmax) / tau - log_sum;
  return lp;
}

std::vector<double> TwoHotTarget::dense(std::size_t length) const {
  if (index + 1 >= length) {
    throw std::out_of_range("TwoHotTarget: index " + std::to_string(index) +
                            " has no upper neighbour in length " + std::to_string(length));
  }
  std::vector<double> g(length, 0.0);
  g[index] = u1;
  g[index + 1] += u2;
  return g;
}

TwoHotTarget encode_target(double y, const BinGrid& grid) {
  if (!std::isfinite(y) || y < grid.e_min() || y > grid.e_max()) {
    throw std::invalid_argument("encode_target: value " + std::to_string(y) +
                                " outside regression range");
  }
  double t = (y - grid.e_min()) / grid.step();
  // Snap values that land on an endpoint up to rounding.
  const double nearest = std::round(t);
  if (std::abs(t - nearest) < 1e-12 * std::max(1.0, std::abs(t))) t = nearest;
  const auto last = static_cast<double>(grid.n() - 1);
  const double i = std::min(std::floor(t), last);
  const double u2 = std::clamp(t - i, 0.0, 1.0);
  return {static_cast<std::size_t>(i), 1.0 - u2, u2};
}

void require_simplex(std::span<const double> p, double tol, const char* what) {
  double sum = 0.0;
  for (double v : p) {
    if (!std::isfinite(v) || v < -tol) {
      throw std::invalid_argument(std::string(what) + ": entries must be finite and nonnegative");
    }
    sum += v;
  }
  if (std::abs(sum - 1.0) > tol) {
    throw std::invalid_argument(std::string(what) + ": probabilities sum to " +
                                std::to_string(sum));
  }
}

double decode_expectation(std::span<const double> p, const BinGrid& grid) {
  if (p.size() != grid.size()) {
    throw std::invalid_argument("decode_expectation: length does not match grid");
  }
  require_simplex(p, 1e-9, "decode_expectation");
  double y = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) y += p[i] * grid[i];
  return std::clamp(y, grid.e_min(), grid.e_max());
}

double flatness(std::span<const double> p) {
  require_simplex(p, 1e-9, "flatness");
  double h = 0.0;
  for (double v : p) {
    if (v > 0.0) h -= v * std::log(v);
  }
  return h;
}

EdgeDistribution::EdgeDistribution(std::vector<double> z, BinGrid g)
    : logits(std::move(z)), grid(std::move(g)) {
  if (logits.size() != grid.size()) {
    throw std::invalid_argument("EdgeDistribution: expected " + std::to_string(grid.size()) +
                                " logits, got " + std::to_string(logits.size()));
  }
  for (double v : logits) {
    if (!std::isfinite(v)) throw std::invalid_argument("EdgeDistribution: non-finite logit");
  }
}

std::vector<double> EdgeDistribution::probabilities(double tau) const {
  return generalized_softmax(logits, tau);
}

double EdgeDistribution::decode() const { return decode_expectation(probabilities(), grid); }

std::size_t BoxDistribution::parameter_count() const {
  std::size_t count = 0;
  for (const auto& e : edges) count += e.logits.size();
  return count;
}

}  // namespace ld
