#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ld/boxdist.hpp"
#include "ld/random.hpp"

namespace ld::theory {

/// Forms l = u1 p + u2 q and returns max_k |dLD^l_k - (u1 dKD^p_k + u2 dKD^q_k)|,
/// where every gradient is taken w.r.t. student logits whose tau-softened
/// distribution is s. `perturbation` is added to the LD gradient and exists so
/// negative controls can break the identity on purpose.
double verify_proposition1(std::span<const double> s, std::span<const double> p,
                           std::span<const double> q, double u1, double tau,
                           double perturbation = 0.0);

struct DecompositionResult {
  std::vector<double> p;
  std::vector<double> q;
  double residual = 0.0;  // max violation of sum p = 1, sum q = 1, u1 p + u2 q = l
  bool simplex_feasible = false;
  bool projected = false;             // true when the projection pass ran
  std::size_t rank = 0;               // rank of the coefficient matrix
  std::size_t augmented_rank = 0;     // rank of [A | b]
};

/// Splits a localization distribution l into two probability vectors with
/// u1 p + u2 q = l. Among the infinitely many solutions of the affine system the
/// one closest (in l2) to (g^i, g^j) is returned; when it has negative entries
/// it is projected onto the nonnegative solutions and `projected` is set.
/// Throws std::invalid_argument for u1 outside (0, 1) or i == j.
DecompositionResult decompose_localization(std::span<const double> l, double u1, std::size_t i,
                                           std::size_t j);

struct RescalingReport {
  double measured_ratio = 0.0;
  double predicted_ratio = 0.0;
  double abs_error = 0.0;
  double standard_error = 0.0;  // Monte-Carlo standard error of the measured mean
  std::size_t trials = 0;
  std::size_t clipped_trials = 0;  // noisy teachers pulled back onto the simplex
  bool confidence_clipped = false;  // c scaled down to keep p_tau + c valid
};

struct RescalingWeights {
  double gamma = 1.0;   // DFL weight
  double lambda = 1.0;  // LD weight
  double tau = 10.0;
};

/// Measures E[dLD_i / dDFL_i] at i = target.index with the teacher modelled as
/// q_tau = p_tau + c + eta, eta zero-mean noise of scale eta_scale, and compares it
/// to gamma + (lambda / tau) c_i / (u_i - p_i). c must sum to zero.
/// Throws std::domain_error when |u_i - p_i| < 1e-9.
RescalingReport gradient_rescaling_ratio(std::span<const double> p, std::span<const double> c,
                                         double eta_scale, const RescalingWeights& w,
                                         const TwoHotTarget& target, std::size_t trials,
                                         std::uint64_t seed);

/// Returns (sum_{s != i} dLD_s, -dLD_i) for the combined DFL + LD gradient at
/// i = target.index; the two agree because the gradient is simplex-tangent.
std::pair<double, double> incorrect_position_gradient_sum(std::span<const double> z_student,
                                                          std::span<const double> z_teacher,
                                                          const TwoHotTarget& target,
                                                          const RescalingWeights& w);

struct VerifyConfig {
  std::uint64_t seed = 0;
  std::size_t trials = 1000;
  std::vector<std::size_t> sizes{5, 9, 17};
  std::size_t mc_trials = 100000;
  double mc_eta_scale = 0.01;
  double tol_proposition1 = 1e-12;
  double tol_decomposition = 1e-10;
  double tol_rescaling = 1e-10;
  double tol_gradient_sum = 1e-12;
  double mc_sigma = 3.0;
  double perturbation = 0.0;
};

struct Certificate {
  double proposition1_max_err = 0.0;
  double decomposition_max_residual = 0.0;
  bool decomposition_rank_ok = true;
  double rescaling_abs_err = 0.0;
  double rescaling_mc_abs_err = 0.0;
  double rescaling_mc_standard_error = 0.0;
  double gradient_sum_max_err = 0.0;
  std::size_t trials = 0;
  std::uint64_t seed = 0;
  std::vector<std::string> failures;

  bool passed() const { return failures.empty(); }
};

/// Runs every check above on seeded random instances.
Certificate run_certificate(const VerifyConfig& cfg);

}  // namespace ld::theory
