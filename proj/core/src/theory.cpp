#include "ld/theory.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "ld/losses.hpp"

namespace ld::theory {

namespace {

std::vector<double> tempered_logits(std::span<const double> s, double tau) {
  std::vector<double> z(s.size());
  for (std::size_t k = 0; k < s.size(); ++k) {
    if (!(s[k] > 0.0)) {
      throw std::invalid_argument("student distribution must be strictly positive");
    }
    z[k] = tau * std::log(s[k]);
  }
  return z;
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) m = std::max(m, std::abs(a[k] - b[k]));
  return m;
}

}  // namespace

double verify_proposition1(std::span<const double> s, std::span<const double> p,
                           std::span<const double> q, double u1, double tau, double perturbation) {
  if (s.size() != p.size() || s.size() != q.size()) {
    throw std::invalid_argument("verify_proposition1: length mismatch");
  }
  require_simplex(s, 1e-9, "verify_proposition1 s");
  require_simplex(p, 1e-9, "verify_proposition1 p");
  require_simplex(q, 1e-9, "verify_proposition1 q");
  if (!(u1 >= 0.0 && u1 <= 1.0)) throw std::invalid_argument("verify_proposition1: u1 not in [0, 1]");
  const double u2 = 1.0 - u1;

  std::vector<double> l(s.size());
  for (std::size_t k = 0; k < l.size(); ++k) l[k] = u1 * p[k] + u2 * q[k];

  const auto z = tempered_logits(s, tau);
  auto d_ld = ce_loss(z, l, tau).grad;
  const auto d_kd_p = ce_loss(z, p, tau).grad;
  const auto d_kd_q = ce_loss(z, q, tau).grad;
  d_ld[0] += perturbation;

  std::vector<double> combined(z.size());
  for (std::size_t k = 0; k < z.size(); ++k) combined[k] = u1 * d_kd_p[k] + u2 * d_kd_q[k];
  return max_abs_diff(d_ld, combined);
}

namespace {

// Euclidean projection of p onto {0 <= p <= upper, sum p = 1} by bisection on the
// common shift; the set is nonempty whenever sum(upper) >= 1.
std::vector<double> project_capped_simplex(const std::vector<double>& p,
                                           const std::vector<double>& upper) {
  auto mass = [&](double shift) {
    double sum = 0.0;
    for (std::size_t k = 0; k < p.size(); ++k) sum += std::clamp(p[k] - shift, 0.0, upper[k]);
    return sum;
  };
  double lo = 0.0;
  double hi = 0.0;
  for (std::size_t k = 0; k < p.size(); ++k) {
    lo = std::min(lo, p[k] - upper[k]);
    hi = std::max(hi, p[k]);
  }
  for (int it = 0; it < 200 && hi - lo > 0.0; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid == lo || mid == hi) break;
    (mass(mid) > 1.0 ? lo : hi) = mid;
  }
  const double shift = std::abs(mass(lo) - 1.0) <= std::abs(mass(hi) - 1.0) ? lo : hi;
  std::vector<double> out(p.size());
  for (std::size_t k = 0; k < p.size(); ++k) out[k] = std::clamp(p[k] - shift, 0.0, upper[k]);
  return out;
}

double affine_residual(std::span<const double> l, double u1, const std::vector<double>& p,
                       const std::vector<double>& q) {
  const double u2 = 1.0 - u1;
  double sp = 0.0;
  double sq = 0.0;
  double worst = 0.0;
  for (std::size_t k = 0; k < l.size(); ++k) {
    sp += p[k];
    sq += q[k];
    worst = std::max(worst, std::abs(u1 * p[k] + u2 * q[k] - l[k]));
  }
  return std::max({worst, std::abs(sp - 1.0), std::abs(sq - 1.0)});
}

}  // namespace

DecompositionResult decompose_localization(std::span<const double> l, double u1, std::size_t i,
                                           std::size_t j) {
  const std::size_t n = l.size();
  if (n < 2) throw std::invalid_argument("decompose_localization: need at least two positions");
  require_simplex(l, 1e-9, "decompose_localization l");
  if (!(u1 > 0.0 && u1 < 1.0)) {
    throw std::invalid_argument("decompose_localization: u1 must lie strictly inside (0, 1)");
  }
  if (i == j || i >= n || j >= n) {
    throw std::invalid_argument("decompose_localization: need distinct in-range positions i, j");
  }
  const double u2 = 1.0 - u1;
  const auto rows = static_cast<Eigen::Index>(n + 2);
  const auto cols = static_cast<Eigen::Index>(2 * n);
  const auto m = static_cast<Eigen::Index>(n);

  // Unknowns X = (p_1..p_n, q_1..q_n).
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(rows, cols);
  Eigen::VectorXd b(rows);
  a.row(0).head(m).setOnes();
  a.row(1).tail(m).setOnes();
  b(0) = 1.0;
  b(1) = 1.0;
  for (Eigen::Index k = 0; k < m; ++k) {
    a(k + 2, k) = u1;
    a(k + 2, k + m) = u2;
    b(k + 2) = l[static_cast<std::size_t>(k)];
  }

  Eigen::VectorXd x0 = Eigen::VectorXd::Zero(cols);
  x0(static_cast<Eigen::Index>(i)) = 1.0;
  x0(m + static_cast<Eigen::Index>(j)) = 1.0;

  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Eigen::VectorXd x = x0 + svd.solve(b - a * x0);

  Eigen::MatrixXd augmented(rows, cols + 1);
  augmented << a, b;

  DecompositionResult out;
  out.rank = static_cast<std::size_t>(svd.rank());
  out.augmented_rank = static_cast<std::size_t>(
      Eigen::JacobiSVD<Eigen::MatrixXd>(augmented).setThreshold(svd.threshold()).rank());
  out.p.assign(x.data(), x.data() + m);
  out.q.assign(x.data() + m, x.data() + cols);

  const bool negative = std::any_of(out.p.begin(), out.p.end(), [](double v) { return v < 0.0; }) ||
                        std::any_of(out.q.begin(), out.q.end(), [](double v) { return v < 0.0; });
  if (negative) {
    // q = (l - u1 p) / u2 stays nonnegative iff p <= l / u1.
    std::vector<double> upper(n);
    for (std::size_t k = 0; k < n; ++k) upper[k] = std::max(l[k], 0.0) / u1;
    out.p = project_capped_simplex(out.p, upper);
    for (std::size_t k = 0; k < n; ++k) out.q[k] = (l[k] - u1 * out.p[k]) / u2;
    out.projected = true;
  }

  out.residual = affine_residual(l, u1, out.p, out.q);
  constexpr double kNegTol = -1e-12;
  out.simplex_feasible =
      std::all_of(out.p.begin(), out.p.end(), [](double v) { return v >= kNegTol; }) &&
      std::all_of(out.q.begin(), out.q.end(), [](double v) { return v >= kNegTol; });
  return out;
}

RescalingReport gradient_rescaling_ratio(std::span<const double> p, std::span<const double> c,
                                         double eta_scale, const RescalingWeights& w,
                                         const TwoHotTarget& target, std::size_t trials,
                                         std::uint64_t seed) {
  const std::size_t n = p.size();
  if (c.size() != n) throw std::invalid_argument("gradient_rescaling_ratio: length mismatch");
  require_simplex(p, 1e-9, "gradient_rescaling_ratio p");
  if (target.index + 1 >= n) throw std::out_of_range("gradient_rescaling_ratio: bad target index");
  if (!(w.tau > 0.0)) throw std::invalid_argument("gradient_rescaling_ratio: tau must be positive");
  if (!(eta_scale >= 0.0)) throw std::invalid_argument("gradient_rescaling_ratio: eta_scale < 0");
  if (trials == 0) throw std::invalid_argument("gradient_rescaling_ratio: zero trials");
  double c_sum = 0.0;
  for (double v : c) c_sum += v;
  if (std::abs(c_sum) > 1e-9) {
    throw std::invalid_argument("gradient_rescaling_ratio: confidence vector must sum to zero");
  }

  const std::size_t i = target.index;
  const auto z = tempered_logits(p, 1.0);
  const auto p1 = generalized_softmax(z, 1.0);
  const auto p_tau = generalized_softmax(z, w.tau);
  const double u_i = target.u1;
  if (std::abs(u_i - p1[i]) < 1e-9) {
    throw std::domain_error("gradient_rescaling_ratio: u_i == p_i, ratio is singular");
  }
  const double d_dfl = dfl_loss(z, target).grad[i];

  RescalingReport report;
  std::vector<double> conf(c.begin(), c.end());
  double scale = 1.0;
  for (std::size_t k = 0; k < n; ++k) {
    if (p_tau[k] + conf[k] < 0.0) scale = std::min(scale, p_tau[k] / -conf[k]);
  }
  if (scale < 1.0) {
    for (double& v : conf) v *= scale;
    report.confidence_clipped = true;
  }
  report.predicted_ratio = w.gamma + (w.lambda / w.tau) * conf[i] / (u_i - p1[i]);

  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const std::size_t count = eta_scale == 0.0 ? 1 : trials;
  std::vector<double> q(n);
  std::vector<double> eta(n, 0.0);
  double mean = 0.0;
  double m2 = 0.0;
  for (std::size_t t = 0; t < count; ++t) {
    if (eta_scale > 0.0) {
      double avg = 0.0;
      for (double& v : eta) {
        v = normal(rng);
        avg += v;
      }
      avg /= static_cast<double>(n);
      for (double& v : eta) v = eta_scale * (v - avg);
    }
    bool clipped = false;
    double total = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      q[k] = p_tau[k] + conf[k] + eta[k];
      if (q[k] < 0.0) {
        q[k] = 0.0;
        clipped = true;
      }
      total += q[k];
    }
    if (clipped) {
      for (double& v : q) v /= total;
      ++report.clipped_trials;
    }
    const double d_ld = ce_loss(z, q, w.tau).grad[i];
    const double ratio = (w.gamma * d_dfl + w.lambda * d_ld) / d_dfl;
    // Welford running mean and variance.
    const double delta = ratio - mean;
    mean += delta / static_cast<double>(t + 1);
    m2 += delta * (ratio - mean);
  }
  report.trials = count;
  report.measured_ratio = mean;
  report.standard_error =
      count > 1 ? std::sqrt(m2 / static_cast<double>(count - 1) / static_cast<double>(count)) : 0.0;
  report.abs_error = std::abs(report.measured_ratio - report.predicted_ratio);
  return report;
}

std::pair<double, double> incorrect_position_gradient_sum(std::span<const double> z_student,
                                                          std::span<const double> z_teacher,
                                                          const TwoHotTarget& target,
                                                          const RescalingWeights& w) {
  const auto dfl = dfl_loss(z_student, target).grad;
  const auto ld = kd_loss(z_student, z_teacher, w.tau).grad;
  const std::size_t i = target.index;
  double others = 0.0;
  for (std::size_t k = 0; k < dfl.size(); ++k) {
    if (k != i) others += w.gamma * dfl[k] + w.lambda * ld[k];
  }
  return {others, -(w.gamma * dfl[i] + w.lambda * ld[i])};
}

namespace {

enum Stream : std::uint64_t { kProposition = 1, kDecomposition, kRescaling, kMonteCarlo, kGradSum };

double uniform(Rng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

std::size_t pick(Rng& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

std::vector<double> zero_sum(Rng& rng, std::size_t n, double scale) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> c(n);
  double avg = 0.0;
  for (double& v : c) {
    v = normal(rng);
    avg += v;
  }
  avg /= static_cast<double>(n);
  for (double& v : c) v = scale * (v - avg);
  return c;
}

}  // namespace

Certificate run_certificate(const VerifyConfig& cfg) {
  if (cfg.sizes.empty() || cfg.trials == 0) {
    throw std::invalid_argument("run_certificate: need at least one size and one trial");
  }
  for (std::size_t n : cfg.sizes) {
    if (n < 2) throw std::invalid_argument("run_certificate: sizes must be >= 2");
  }
  Certificate cert;
  cert.trials = cfg.trials;
  cert.seed = cfg.seed;

  Rng rng(derive_seed(cfg.seed, kProposition));
  for (std::size_t t = 0; t < cfg.trials; ++t) {
    const std::size_t n = cfg.sizes[t % cfg.sizes.size()];
    const auto s = random_simplex(rng, n, uniform(rng, 0.2, 3.0));
    const auto p = random_simplex(rng, n, uniform(rng, 0.2, 3.0));
    const auto q = random_simplex(rng, n, uniform(rng, 0.2, 3.0));
    const double u1 = uniform(rng, 0.0, 1.0);
    const double tau = uniform(rng, 0.5, 20.0);
    cert.proposition1_max_err = std::max(cert.proposition1_max_err,
                                         verify_proposition1(s, p, q, u1, tau, cfg.perturbation));
  }

  rng.seed(derive_seed(cfg.seed, kDecomposition));
  for (std::size_t t = 0; t < cfg.trials; ++t) {
    const std::size_t n = cfg.sizes[t % cfg.sizes.size()];
    const auto l = random_simplex(rng, n, uniform(rng, 0.2, 3.0));
    const double u1 = uniform(rng, 0.05, 0.95);
    const std::size_t i = pick(rng, 0, n - 2);
    const auto d = decompose_localization(l, u1, i, i + 1);
    cert.decomposition_max_residual = std::max(cert.decomposition_max_residual, d.residual);
    if (d.rank != n + 1 || d.augmented_rank != n + 1) cert.decomposition_rank_ok = false;
  }

  rng.seed(derive_seed(cfg.seed, kRescaling));
  for (std::size_t t = 0; t < cfg.trials; ++t) {
    const std::size_t n = cfg.sizes[t % cfg.sizes.size()];
    const auto p = random_simplex(rng, n, uniform(rng, 0.2, 2.0));
    const std::size_t i = pick(rng, 0, n - 2);
    double u1 = uniform(rng, 0.0, 1.0);
    while (std::abs(u1 - p[i]) < 1e-3) u1 = uniform(rng, 0.0, 1.0);
    const auto c = zero_sum(rng, n, 0.05);
    const RescalingWeights w{uniform(rng, 0.5, 2.0), uniform(rng, 0.0, 2.0), uniform(rng, 1.0, 20.0)};
    const auto r = gradient_rescaling_ratio(p, c, 0.0, w, {i, u1, 1.0 - u1}, 1, 0);
    cert.rescaling_abs_err = std::max(cert.rescaling_abs_err, r.abs_error);
  }

  {
    rng.seed(derive_seed(cfg.seed, kMonteCarlo));
    const std::size_t n = cfg.sizes.front();
    const auto p = random_simplex(rng, n, 0.5);
    const std::size_t i = n / 2;
    const double u1 = p[i] < 0.5 ? 0.9 : 0.1;
    const auto c = zero_sum(rng, n, 0.02);
    const RescalingWeights w{1.0, 1.0, 10.0};
    const auto r = gradient_rescaling_ratio(p, c, cfg.mc_eta_scale, w, {i, u1, 1.0 - u1},
                                            cfg.mc_trials, rng());
    cert.rescaling_mc_abs_err = r.abs_error;
    cert.rescaling_mc_standard_error = r.standard_error;
  }

  rng.seed(derive_seed(cfg.seed, kGradSum));
  std::normal_distribution<double> normal(0.0, 1.0);
  for (std::size_t t = 0; t < cfg.trials; ++t) {
    const std::size_t n = cfg.sizes[t % cfg.sizes.size()];
    std::vector<double> zs(n);
    std::vector<double> zt(n);
    for (std::size_t k = 0; k < n; ++k) {
      zs[k] = 2.0 * normal(rng);
      zt[k] = 2.0 * normal(rng);
    }
    const std::size_t i = pick(rng, 0, n - 2);
    const double u1 = uniform(rng, 0.0, 1.0);
    const RescalingWeights w{uniform(rng, 0.0, 2.0), uniform(rng, 0.0, 2.0), uniform(rng, 1.0, 20.0)};
    const auto [others, neg_i] = incorrect_position_gradient_sum(zs, zt, {i, u1, 1.0 - u1}, w);
    cert.gradient_sum_max_err = std::max(cert.gradient_sum_max_err, std::abs(others - neg_i));
  }

  if (!(cert.proposition1_max_err <= cfg.tol_proposition1)) cert.failures.push_back("proposition1");
  if (!(cert.decomposition_max_residual <= cfg.tol_decomposition)) {
    cert.failures.push_back("decomposition_residual");
  }
  if (!cert.decomposition_rank_ok) cert.failures.push_back("decomposition_rank");
  if (!(cert.rescaling_abs_err <= cfg.tol_rescaling)) cert.failures.push_back("rescaling_exact");
  if (!(cert.rescaling_mc_abs_err <= cfg.mc_sigma * cert.rescaling_mc_standard_error)) {
    cert.failures.push_back("rescaling_monte_carlo");
  }
  if (!(cert.gradient_sum_max_err <= cfg.tol_gradient_sum)) cert.failures.push_back("gradient_sum");
  return cert;
}

}  // namespace ld::theory
