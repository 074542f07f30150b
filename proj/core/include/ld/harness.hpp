#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ld/boxdist.hpp"
#include "ld/geometry.hpp"
#include "ld/losses.hpp"
#include "ld/random.hpp"

namespace ld::harness {

/// Finite mixture of point masses over edge values.
struct Mixture {
  std::vector<double> centers;
  std::vector<double> weights;

  double mean() const;
  void validate(const BinGrid& grid) const;
};

double sample_mixture(const Mixture& m, Rng& rng);

/// Expected two-hot encoding of the mixture: the Bayes-optimal edge distribution.
std::vector<double> bayes_distribution(const Mixture& m, const BinGrid& grid);

/// One anchor location. The anchor point is the origin; edges are (l, t, r, b)
/// distances from it, and the anchor box is a square centred on it.
struct SyntheticSample {
  std::vector<double> features;
  std::array<double, 4> true_edges{};      // mixture means
  std::array<double, 4> observed_edges{};  // one draw per edge, used as the label
  std::array<Mixture, 4> ambiguity;
  int class_label = 0;  // 1 = object (main region), 0 = background
  BoundingBox anchor;
  bool main = false;
  bool vlr = false;

  BoundingBox gt_box() const;
  LocationTarget target() const;
};

struct DataConfig {
  std::size_t train_size = 600;
  std::size_t test_size = 300;
  std::size_t input_dim = 16;
  double ambiguity = 0.5;   // weight of the second mixture component is ambiguity / 2
  double mode_gap = 2.5;    // distance between the two components
  double edge_low = 2.0;    // range of the primary component
  double edge_high = 6.0;
  double anchor_size = 8.0;
  double input_noise = 0.05;

  void validate(const BinGrid& grid) const;
};

struct Dataset {
  std::vector<SyntheticSample> train;
  std::vector<SyntheticSample> test;
};

/// Deterministic in (cfg, distill grid and region thresholds, seed).
Dataset gen_dataset(const DataConfig& cfg, const DistillConfig& distill, std::uint64_t seed);

struct ModelConfig {
  std::size_t feature_dim = 96;
  std::size_t hidden_dim = 64;
  std::size_t classes = 2;
  double feature_gain = 0.7;
  double head_init = 0.1;
  bool trainable_projection = true;
};

/// Fixed random tanh features (shifted to vanish at zero input), a trainable
/// linear projection to the hidden features, and a linear head emitting class logits followed by 4 x (n + 1)
/// edge logits.
class LinearLocalizer {
 public:
  LinearLocalizer(std::size_t input_dim, const ModelConfig& cfg, BinGrid grid, std::uint64_t seed);

  std::size_t output_dim() const { return cfg_.classes + 4 * grid_.size(); }
  const ModelConfig& config() const { return cfg_; }
  const BinGrid& grid() const { return grid_; }

  /// Columns are samples.
  Eigen::MatrixXd random_features(const Eigen::MatrixXd& inputs) const;
  Eigen::MatrixXd hidden(const Eigen::MatrixXd& features) const { return projection * features; }
  Eigen::MatrixXd logits(const Eigen::MatrixXd& hidden) const;

  HeadOutput head(const Eigen::Ref<const Eigen::VectorXd>& logits) const;

  // Trainable parameters.
  Eigen::MatrixXd projection;   // hidden_dim x feature_dim
  Eigen::MatrixXd head_weight;  // output_dim x hidden_dim
  Eigen::VectorXd head_bias;

 private:
  ModelConfig cfg_;
  BinGrid grid_;
  Eigen::MatrixXd feature_weight_;
  Eigen::VectorXd feature_bias_;
};

/// Inputs of a sample set as a [input_dim x N] matrix.
Eigen::MatrixXd input_matrix(const std::vector<SyntheticSample>& samples);

enum class Scheme { Baseline, Tbr, KdMain, LdMain, LdMainVlr, KdLdSelective, FeatureImitation };

std::string_view scheme_name(Scheme s);
/// Throws std::invalid_argument listing the valid names.
Scheme parse_scheme(std::string_view name);
const std::vector<Scheme>& all_schemes();
bool needs_teacher(Scheme s);

struct TrainConfig {
  std::size_t epochs = 150;
  double learning_rate = 0.15;
  double tbr_weight = 1.0;
  double fi_weight = 1.0;
  DistillConfig distill = harness_distill();

  /// Distillation weights of tau^2 so that the softened terms train at the
  /// same rate as the hard-label terms.
  static DistillConfig harness_distill() {
    DistillConfig d;
    const double t2 = d.tau * d.tau;
    d.lambda = {1.0, 1.0, 1.0, t2, t2, t2, t2};
    return d;
  }
};

struct EpochTrace {
  std::size_t step = 0;
  LossBreakdown parts;
  double total = 0.0;
};

struct TrainResult {
  LinearLocalizer model;
  std::vector<EpochTrace> trace;
};

/// Full-batch gradient descent on the scheme's objective using only the
/// analytic gradients of the losses module. The teacher stays frozen.
TrainResult train(LinearLocalizer model, const Dataset& data, Scheme scheme,
                  const LinearLocalizer* teacher, const TrainConfig& cfg);

/// Teacher objective: classification CE plus cross-entropy against the Bayes
/// edge distribution on every training location.
TrainResult train_teacher(LinearLocalizer model, const Dataset& data, const TrainConfig& cfg);

struct Metrics {
  double mae = 0.0;                // decoded edges vs true edges, main locations
  double box_kl = 0.0;             // sum over edges of KL(teacher || student) at tau, main locations
  double cls_kl = 0.0;             // KL(teacher || student) of class logits at tau, all locations
  double feature_pearson = 0.0;    // hidden features, averaged per location
  double box_logit_pearson = 0.0;  // edge logits, averaged per main location
  double flatness = 0.0;           // mean edge entropy of the student, main locations
};

double pearson(std::span<const double> a, std::span<const double> b);

/// KL terms are taken at temperature tau. Throws std::invalid_argument for an
/// empty sample set.
Metrics evaluate(const LinearLocalizer& model, const LinearLocalizer& teacher,
                 const std::vector<SyntheticSample>& samples, double tau = 1.0);

struct ExperimentConfig {
  std::uint64_t seed = 0;
  std::vector<std::uint64_t> replicates{0};
  std::vector<Scheme> schemes{Scheme::Baseline, Scheme::LdMain};
  DataConfig data;
  ModelConfig student;
  ModelConfig teacher{128, 64, 2, 0.7, 0.1, true};
  TrainConfig train;
  TrainConfig teacher_train{300, 0.5, 1.0, 1.0, TrainConfig::harness_distill()};
  std::size_t threads = 1;

  void validate() const;
};

struct SchemeRun {
  Scheme scheme = Scheme::Baseline;
  std::uint64_t replicate = 0;
  Metrics metrics;
  std::vector<EpochTrace> trace;
};

struct ReplicateSummary {
  std::uint64_t replicate = 0;
  Metrics teacher;  // teacher evaluated against itself plus its own MAE
  std::size_t main_count = 0;
  std::size_t vlr_count = 0;
};

struct ExperimentReport {
  std::vector<SchemeRun> runs;  // replicate-major, schemes in config order
  std::vector<ReplicateSummary> replicates;

  const SchemeRun& find(Scheme s, std::uint64_t replicate) const;
};

/// Every (replicate) cell generates its data, trains a teacher and then each
/// scheme from one shared student initialization. Cells run on cfg.threads
/// workers; results are merged in cell order.
ExperimentReport run_experiment(const ExperimentConfig& cfg);

enum class SweepParameter { Ambiguity, Gamma, Tau };
std::string_view sweep_parameter_name(SweepParameter p);
SweepParameter parse_sweep_parameter(std::string_view name);

struct SweepRow {
  double value = 0.0;
  ExperimentReport report;
};

/// Throws std::invalid_argument for an empty value list.
std::vector<SweepRow> sweep(const ExperimentConfig& cfg, SweepParameter parameter,
                            const std::vector<double>& values);

inline std::vector<SweepRow> ambiguity_sweep(const ExperimentConfig& cfg,
                                             const std::vector<double>& levels) {
  return sweep(cfg, SweepParameter::Ambiguity, levels);
}

}  // namespace ld::harness
