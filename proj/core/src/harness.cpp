#include "ld/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <thread>

#include "ld/regions.hpp"

namespace ld::harness {

double Mixture::mean() const {
  double m = 0.0;
  for (std::size_t k = 0; k < centers.size(); ++k) m += weights[k] * centers[k];
  return m;
}

void Mixture::validate(const BinGrid& grid) const {
  if (centers.empty() || centers.size() != weights.size()) {
    throw std::invalid_argument("Mixture: need matching, non-empty centers and weights");
  }
  double sum = 0.0;
  for (std::size_t k = 0; k < centers.size(); ++k) {
    if (!(centers[k] >= grid.e_min() && centers[k] <= grid.e_max())) {
      throw std::invalid_argument("Mixture: component center outside the regression range");
    }
    if (!(weights[k] >= 0.0)) throw std::invalid_argument("Mixture: negative weight");
    sum += weights[k];
  }
  if (std::abs(sum - 1.0) > 1e-12) throw std::invalid_argument("Mixture: weights must sum to 1");
}

double sample_mixture(const Mixture& m, Rng& rng) {
  const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  double acc = 0.0;
  for (std::size_t k = 0; k + 1 < m.centers.size(); ++k) {
    acc += m.weights[k];
    if (u < acc) return m.centers[k];
  }
  return m.centers.back();
}

std::vector<double> bayes_distribution(const Mixture& m, const BinGrid& grid) {
  m.validate(grid);
  std::vector<double> dist(grid.size(), 0.0);
  for (std::size_t k = 0; k < m.centers.size(); ++k) {
    const auto t = encode_target(m.centers[k], grid);
    dist[t.index] += m.weights[k] * t.u1;
    dist[t.index + 1] += m.weights[k] * t.u2;
  }
  return dist;
}

BoundingBox SyntheticSample::gt_box() const {
  const auto& e = observed_edges;
  return BoundingBox::make(-e[0], -e[1], e[2], e[3]);
}

LocationTarget SyntheticSample::target() const { return {class_label, 0.0, 0.0, gt_box()}; }

void DataConfig::validate(const BinGrid& grid) const {
  if (train_size == 0 || test_size == 0) throw std::invalid_argument("data: empty split");
  if (input_dim < 8) throw std::invalid_argument("data.input_dim: must be at least 8");
  if (!(ambiguity >= 0.0 && ambiguity <= 1.0)) {
    throw std::invalid_argument("data.ambiguity: must lie in [0, 1]");
  }
  if (!(edge_low >= grid.e_min() && edge_high <= grid.e_max() && edge_low < edge_high)) {
    throw std::invalid_argument("data.edge_low/edge_high: must be an interval inside the grid");
  }
  if (!(mode_gap > 0.0) || 2.0 * mode_gap > grid.e_max() - grid.e_min()) {
    throw std::invalid_argument("data.mode_gap: must be positive and at most half the range");
  }
  if (!(anchor_size > 0.0)) throw std::invalid_argument("data.anchor_size: must be positive");
  if (!(input_noise >= 0.0)) throw std::invalid_argument("data.input_noise: must be >= 0");
}

namespace {

constexpr std::size_t kLatentDim = 8;

SyntheticSample make_sample(const DataConfig& cfg, const DistillConfig& distill,
                            const Eigen::MatrixXd& mixing, Rng& rng) {
  const BinGrid& grid = distill.grid;
  std::uniform_real_distribution<double> base_dist(cfg.edge_low, cfg.edge_high);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);

  SyntheticSample s;
  Eigen::VectorXd latent(kLatentDim);
  const double mid = 0.5 * (cfg.edge_low + cfg.edge_high);
  const double half = 0.5 * (cfg.edge_high - cfg.edge_low);
  const double w2 = 0.5 * cfg.ambiguity;
  for (std::size_t e = 0; e < 4; ++e) {
    const double base = base_dist(rng);
    const bool up_ok = base + cfg.mode_gap <= grid.e_max();
    const bool down_ok = base - cfg.mode_gap >= grid.e_min();
    const double dir = up_ok && down_ok ? (unit(rng) < 0.5 ? 1.0 : -1.0) : (up_ok ? 1.0 : -1.0);

    Mixture m;
    if (w2 > 0.0) {
      m.centers = {base, base + dir * cfg.mode_gap};
      m.weights = {1.0 - w2, w2};
    } else {
      m.centers = {base};
      m.weights = {1.0};
    }
    m.validate(grid);
    s.true_edges[e] = m.mean();
    s.observed_edges[e] = sample_mixture(m, rng);
    s.ambiguity[e] = std::move(m);

    latent(static_cast<Eigen::Index>(e)) = (base - mid) / half;
    latent(static_cast<Eigen::Index>(e + 4)) = dir;
  }

  Eigen::VectorXd x = mixing * latent;
  for (Eigen::Index k = 0; k < x.size(); ++k) x(k) += cfg.input_noise * normal(rng);
  s.features.assign(x.data(), x.data() + x.size());

  const double h = 0.5 * cfg.anchor_size;
  s.anchor = BoundingBox::make(-h, -h, h, h);
  const std::vector<BoundingBox> anchors{s.anchor};
  const std::vector<BoundingBox> gts{s.gt_box()};
  const auto masks = assign_regions(anchors, gts, distill.alpha_pos, distill.gamma_vlr);
  s.main = masks.main[0];
  s.vlr = masks.vlr[0];
  s.class_label = s.main ? 1 : 0;
  return s;
}

}  // namespace

Dataset gen_dataset(const DataConfig& cfg, const DistillConfig& distill, std::uint64_t seed) {
  distill.validate();
  cfg.validate(distill.grid);

  Rng rng(derive_seed(seed, 0));
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd mixing(static_cast<Eigen::Index>(cfg.input_dim), kLatentDim);
  const double scale = 1.0 / std::sqrt(static_cast<double>(kLatentDim));
  for (Eigen::Index c = 0; c < mixing.cols(); ++c) {
    for (Eigen::Index r = 0; r < mixing.rows(); ++r) mixing(r, c) = scale * normal(rng);
  }

  Dataset data;
  Rng train_rng(derive_seed(seed, 1));
  Rng test_rng(derive_seed(seed, 2));
  data.train.reserve(cfg.train_size);
  data.test.reserve(cfg.test_size);
  for (std::size_t i = 0; i < cfg.train_size; ++i) {
    data.train.push_back(make_sample(cfg, distill, mixing, train_rng));
  }
  for (std::size_t i = 0; i < cfg.test_size; ++i) {
    data.test.push_back(make_sample(cfg, distill, mixing, test_rng));
  }
  return data;
}

LinearLocalizer::LinearLocalizer(std::size_t input_dim, const ModelConfig& cfg, BinGrid grid,
                                 std::uint64_t seed)
    : cfg_(cfg), grid_(std::move(grid)) {
  if (input_dim == 0 || cfg.feature_dim == 0 || cfg.hidden_dim == 0 || cfg.classes < 2) {
    throw std::invalid_argument("LinearLocalizer: dimensions must be positive, classes >= 2");
  }
  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  auto fill = [&](Eigen::MatrixXd& m, Eigen::Index rows, Eigen::Index cols, double scale) {
    m.resize(rows, cols);
    for (Eigen::Index c = 0; c < cols; ++c) {
      for (Eigen::Index r = 0; r < rows; ++r) m(r, c) = scale * normal(rng);
    }
  };
  const auto in = static_cast<Eigen::Index>(input_dim);
  const auto feat = static_cast<Eigen::Index>(cfg.feature_dim);
  const auto hid = static_cast<Eigen::Index>(cfg.hidden_dim);
  const auto out = static_cast<Eigen::Index>(output_dim());

  fill(feature_weight_, feat, in, cfg.feature_gain / std::sqrt(static_cast<double>(input_dim)));
  feature_bias_.resize(feat);
  for (Eigen::Index k = 0; k < feat; ++k) feature_bias_(k) = 0.5 * normal(rng);
  fill(projection, hid, feat, 1.0 / std::sqrt(static_cast<double>(cfg.feature_dim)));
  fill(head_weight, out, hid, cfg.head_init / std::sqrt(static_cast<double>(cfg.hidden_dim)));
  head_bias = Eigen::VectorXd::Zero(out);
}

Eigen::MatrixXd LinearLocalizer::random_features(const Eigen::MatrixXd& inputs) const {
  if (inputs.rows() != feature_weight_.cols()) {
    throw std::invalid_argument("LinearLocalizer: input dimension mismatch");
  }
  Eigen::MatrixXd pre = feature_weight_ * inputs;
  pre.colwise() += feature_bias_;
  Eigen::MatrixXd phi = pre.array().tanh().matrix();
  phi.colwise() -= feature_bias_.array().tanh().matrix();
  return phi;
}

Eigen::MatrixXd LinearLocalizer::logits(const Eigen::MatrixXd& hidden) const {
  Eigen::MatrixXd y = head_weight * hidden;
  y.colwise() += head_bias;
  return y;
}

HeadOutput LinearLocalizer::head(const Eigen::Ref<const Eigen::VectorXd>& y) const {
  HeadOutput h;
  h.cls_logits.assign(y.data(), y.data() + cfg_.classes);
  const std::size_t bins = grid_.size();
  h.box.edges.reserve(4);
  for (std::size_t e = 0; e < 4; ++e) {
    const double* begin = y.data() + cfg_.classes + e * bins;
    h.box.edges.emplace_back(std::vector<double>(begin, begin + bins), grid_);
  }
  return h;
}

Eigen::MatrixXd input_matrix(const std::vector<SyntheticSample>& samples) {
  if (samples.empty()) throw std::invalid_argument("input_matrix: no samples");
  const auto dim = static_cast<Eigen::Index>(samples.front().features.size());
  Eigen::MatrixXd x(dim, static_cast<Eigen::Index>(samples.size()));
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (static_cast<Eigen::Index>(samples[i].features.size()) != dim) {
      throw std::invalid_argument("input_matrix: ragged feature vectors");
    }
    x.col(static_cast<Eigen::Index>(i)) = Eigen::Map<const Eigen::VectorXd>(samples[i].features.data(), dim);
  }
  return x;
}

namespace {

struct SchemeInfo {
  Scheme scheme;
  std::string_view name;
};

constexpr std::array<SchemeInfo, 7> kSchemes{{
    {Scheme::Baseline, "baseline"},
    {Scheme::Tbr, "tbr"},
    {Scheme::KdMain, "kd_main"},
    {Scheme::LdMain, "ld_main"},
    {Scheme::LdMainVlr, "ld_main_vlr"},
    {Scheme::KdLdSelective, "kd_ld_selective"},
    {Scheme::FeatureImitation, "feature_imitation"},
}};

}  // namespace

std::string_view scheme_name(Scheme s) {
  for (const auto& info : kSchemes) {
    if (info.scheme == s) return info.name;
  }
  return "unknown";
}

Scheme parse_scheme(std::string_view name) {
  std::string valid;
  for (const auto& info : kSchemes) {
    if (info.name == name) return info.scheme;
    valid += valid.empty() ? "" : ", ";
    valid += info.name;
  }
  throw std::invalid_argument("unknown scheme '" + std::string(name) + "'; valid schemes: " + valid);
}

const std::vector<Scheme>& all_schemes() {
  static const std::vector<Scheme> schemes = [] {
    std::vector<Scheme> v;
    for (const auto& info : kSchemes) v.push_back(info.scheme);
    return v;
  }();
  return schemes;
}

bool needs_teacher(Scheme s) { return s != Scheme::Baseline; }

namespace {

// Keeps only the distillation weights the scheme switches on.
DistillConfig scheme_config(const DistillConfig& base, Scheme scheme) {
  DistillConfig cfg = base;
  std::array<bool, 4> on{};  // ld_main, ld_vlr, kd_main, kd_vlr
  switch (scheme) {
    case Scheme::KdMain: on = {false, false, true, false}; break;
    case Scheme::LdMain: on = {true, false, false, false}; break;
    case Scheme::LdMainVlr: on = {true, true, false, false}; break;
    case Scheme::KdLdSelective: on = {true, true, true, false}; break;
    default: break;
  }
  for (std::size_t k = 0; k < 4; ++k) {
    if (!on[k]) cfg.lambda[3 + k] = 0.0;
  }
  return cfg;
}

struct Forward {
  Eigen::MatrixXd features;
  Eigen::MatrixXd hidden;
  Eigen::MatrixXd logits;
};

Forward forward(const LinearLocalizer& model, const Eigen::MatrixXd& features) {
  Forward f{features, model.hidden(features), {}};
  f.logits = model.logits(f.hidden);
  return f;
}

std::vector<HeadOutput> heads_of(const LinearLocalizer& model, const Eigen::MatrixXd& logits) {
  std::vector<HeadOutput> heads;
  heads.reserve(static_cast<std::size_t>(logits.cols()));
  for (Eigen::Index i = 0; i < logits.cols(); ++i) heads.push_back(model.head(logits.col(i)));
  return heads;
}

void apply_update(LinearLocalizer& model, const Forward& f, const Eigen::MatrixXd& grad_logits,
                  const Eigen::MatrixXd& extra_grad_hidden, double lr) {
  Eigen::MatrixXd grad_hidden = model.head_weight.transpose() * grad_logits;
  if (extra_grad_hidden.size() > 0) grad_hidden += extra_grad_hidden;
  const Eigen::MatrixXd grad_w = grad_logits * f.hidden.transpose();
  const Eigen::VectorXd grad_b = grad_logits.rowwise().sum();
  model.head_weight -= lr * grad_w;
  model.head_bias -= lr * grad_b;
  if (model.config().trainable_projection) {
    model.projection -= lr * (grad_hidden * f.features.transpose());
  }
}

void check_train_config(const TrainConfig& cfg) {
  cfg.distill.validate();
  if (!(cfg.learning_rate > 0.0)) throw std::invalid_argument("train.learning_rate: must be > 0");
  if (!(cfg.tbr_weight >= 0.0)) throw std::invalid_argument("train.tbr_weight: must be >= 0");
  if (!(cfg.fi_weight >= 0.0)) throw std::invalid_argument("train.fi_weight: must be >= 0");
}

}  // namespace

TrainResult train(LinearLocalizer model, const Dataset& data, Scheme scheme,
                  const LinearLocalizer* teacher, const TrainConfig& cfg) {
  check_train_config(cfg);
  if (needs_teacher(scheme) && teacher == nullptr) {
    throw std::invalid_argument("train: scheme '" + std::string(scheme_name(scheme)) +
                                "' requires a teacher");
  }
  if (teacher != nullptr && !(teacher->grid() == model.grid())) {
    throw std::invalid_argument("train: teacher and student use different bin grids");
  }
  if (!(model.grid() == cfg.distill.grid)) {
    throw std::invalid_argument("train: model grid differs from distill.grid");
  }
  const auto& samples = data.train;
  const std::size_t n = samples.size();
  const Eigen::MatrixXd inputs = input_matrix(samples);
  const Eigen::MatrixXd features = model.random_features(inputs);

  std::vector<LocationTarget> targets;
  RegionMasks masks;
  targets.reserve(n);
  for (const auto& s : samples) {
    targets.push_back(s.target());
    masks.main.push_back(s.main);
    masks.vlr.push_back(s.vlr);
  }
  const std::size_t n_main = masks.main_count();

  const DistillConfig dcfg = scheme_config(cfg.distill, scheme);
  std::vector<HeadOutput> teacher_heads;
  Eigen::MatrixXd teacher_hidden;
  if (teacher != nullptr) {
    const Forward tf = forward(*teacher, teacher->random_features(inputs));
    teacher_heads = heads_of(*teacher, tf.logits);
    teacher_hidden = tf.hidden;
    if (scheme == Scheme::FeatureImitation && teacher_hidden.rows() != static_cast<Eigen::Index>(model.config().hidden_dim)) {
      throw std::invalid_argument("train: feature imitation needs equal hidden dimensions");
    }
  }
  const bool use_teacher_heads = dcfg.lambda[3] > 0.0 || dcfg.lambda[4] > 0.0 ||
                                 dcfg.lambda[5] > 0.0 || dcfg.lambda[6] > 0.0;
  const std::vector<bool> whole_region(n, true);

  TrainResult result{std::move(model), {}};
  LinearLocalizer& m = result.model;
  const auto out_dim = static_cast<Eigen::Index>(m.output_dim());
  const auto cls = static_cast<Eigen::Index>(m.config().classes);
  result.trace.reserve(cfg.epochs);

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const Forward f = forward(m, features);
    const auto heads = heads_of(m, f.logits);
    const auto tl = total_loss(heads, use_teacher_heads ? std::span<const HeadOutput>(teacher_heads)
                                                        : std::span<const HeadOutput>(),
                               targets, masks, dcfg);
    Eigen::MatrixXd grad = Eigen::Map<const Eigen::MatrixXd>(tl.grad.data(), out_dim,
                                                             static_cast<Eigen::Index>(n));
    EpochTrace row{epoch, tl.parts, tl.value};

    if (scheme == Scheme::Tbr && n_main > 0) {
      const double w = cfg.tbr_weight / static_cast<double>(n_main);
      for (std::size_t i = 0; i < n; ++i) {
        if (!masks.main[i]) continue;
        const auto s_box = decode_ltrb(heads[i].box, 0.0, 0.0);
        const auto t_box = decode_ltrb(teacher_heads[i].box, 0.0, 0.0);
        const auto r = tbr_loss(s_box, t_box, targets[i].gt_box, dcfg.tbr_margin);
        if (r.value == 0.0) continue;
        row.total += w * r.value;
        const auto g = chain_box_gradient(heads[i].box, {r.grad[0], r.grad[1], r.grad[2], r.grad[3]});
        grad.col(static_cast<Eigen::Index>(i)).tail(out_dim - cls) +=
            w * Eigen::Map<const Eigen::VectorXd>(g.data(), out_dim - cls);
      }
    }

    Eigen::MatrixXd extra_hidden;
    if (scheme == Scheme::FeatureImitation) {
      // Column-major [hidden x N] is row-major [N x hidden].
      const auto fi = feature_imitation_loss(
          std::span<const double>(f.hidden.data(), static_cast<std::size_t>(f.hidden.size())),
          std::span<const double>(teacher_hidden.data(), static_cast<std::size_t>(teacher_hidden.size())),
          static_cast<std::size_t>(f.hidden.rows()), whole_region);
      row.total += cfg.fi_weight * fi.value;
      extra_hidden = cfg.fi_weight *
                     Eigen::Map<const Eigen::MatrixXd>(fi.grad.data(), f.hidden.rows(), f.hidden.cols());
    }

    result.trace.push_back(row);
    apply_update(m, f, grad, extra_hidden, cfg.learning_rate);
  }
  return result;
}

TrainResult train_teacher(LinearLocalizer model, const Dataset& data, const TrainConfig& cfg) {
  check_train_config(cfg);
  if (!(model.grid() == cfg.distill.grid)) {
    throw std::invalid_argument("train_teacher: model grid differs from distill.grid");
  }
  const auto& samples = data.train;
  const std::size_t n = samples.size();
  const Eigen::MatrixXd features = model.random_features(input_matrix(samples));
  const std::size_t classes = model.config().classes;
  const std::size_t bins = model.grid().size();

  std::vector<std::array<std::vector<double>, 4>> soft_targets(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t e = 0; e < 4; ++e) {
      soft_targets[i][e] = bayes_distribution(samples[i].ambiguity[e], model.grid());
    }
  }
  const double w_cls = cfg.distill.lambda[0] / static_cast<double>(n);
  const double w_box = cfg.distill.lambda[2] / static_cast<double>(n);

  TrainResult result{std::move(model), {}};
  LinearLocalizer& m = result.model;
  const auto out_dim = static_cast<Eigen::Index>(m.output_dim());
  result.trace.reserve(cfg.epochs);
  std::vector<double> onehot(classes);

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const Forward f = forward(m, features);
    Eigen::MatrixXd grad(out_dim, static_cast<Eigen::Index>(n));
    EpochTrace row{epoch, {}, 0.0};
    for (std::size_t i = 0; i < n; ++i) {
      const auto col = static_cast<Eigen::Index>(i);
      const double* y = f.logits.col(col).data();
      std::fill(onehot.begin(), onehot.end(), 0.0);
      onehot[static_cast<std::size_t>(samples[i].class_label)] = 1.0;
      const auto c = ce_loss(std::span<const double>(y, classes), onehot);
      row.parts.cls += c.value / static_cast<double>(n);
      for (std::size_t k = 0; k < classes; ++k) {
        grad(static_cast<Eigen::Index>(k), col) = w_cls * c.grad[k];
      }
      for (std::size_t e = 0; e < 4; ++e) {
        const std::size_t off = classes + e * bins;
        const auto d = ce_loss(std::span<const double>(y + off, bins), soft_targets[i][e]);
        row.parts.dfl += d.value / static_cast<double>(n);
        for (std::size_t k = 0; k < bins; ++k) {
          grad(static_cast<Eigen::Index>(off + k), col) = w_box * d.grad[k];
        }
      }
    }
    row.total = cfg.distill.lambda[0] * row.parts.cls + cfg.distill.lambda[2] * row.parts.dfl;
    result.trace.push_back(row);
    apply_update(m, f, grad, {}, cfg.learning_rate);
  }
  return result;
}

double pearson(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.empty()) throw std::invalid_argument("pearson: length mismatch");
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double sab = 0.0;
  double saa = 0.0;
  double sbb = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    sab += (a[k] - ma) * (b[k] - mb);
    saa += (a[k] - ma) * (a[k] - ma);
    sbb += (b[k] - mb) * (b[k] - mb);
  }
  if (saa <= 0.0 || sbb <= 0.0) return 0.0;
  return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

Metrics evaluate(const LinearLocalizer& model, const LinearLocalizer& teacher,
                 const std::vector<SyntheticSample>& samples, double tau) {
  if (samples.empty()) throw std::invalid_argument("evaluate: empty dataset");
  if (!(model.grid() == teacher.grid()) || model.config().classes != teacher.config().classes) {
    throw std::invalid_argument("evaluate: teacher and student heads differ");
  }
  const Eigen::MatrixXd inputs = input_matrix(samples);
  const Forward fs = forward(model, model.random_features(inputs));
  const Forward ft = forward(teacher, teacher.random_features(inputs));
  const bool hidden_match = fs.hidden.rows() == ft.hidden.rows();

  const auto classes = static_cast<std::size_t>(model.config().classes);
  const std::size_t box_len = 4 * model.grid().size();
  const bool any_main = std::any_of(samples.begin(), samples.end(), [](const auto& s) { return s.main; });

  Metrics out;
  std::size_t box_count = 0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto col = static_cast<Eigen::Index>(i);
    const HeadOutput hs = model.head(fs.logits.col(col));
    const HeadOutput ht = teacher.head(ft.logits.col(col));
    out.cls_kl += kd_loss(hs.cls_logits, ht.cls_logits, tau).kl;
    if (hidden_match) {
      out.feature_pearson += pearson(
          std::span<const double>(fs.hidden.col(col).data(), static_cast<std::size_t>(fs.hidden.rows())),
          std::span<const double>(ft.hidden.col(col).data(), static_cast<std::size_t>(ft.hidden.rows())));
    }
    if (any_main && !samples[i].main) continue;
    ++box_count;
    out.box_kl += ld_box_loss(hs.box, ht.box, tau).kl;
    out.box_logit_pearson +=
        pearson(std::span<const double>(fs.logits.col(col).data() + classes, box_len),
                std::span<const double>(ft.logits.col(col).data() + classes, box_len));
    for (std::size_t e = 0; e < 4; ++e) {
      const auto p = hs.box.edges[e].probabilities();
      out.mae += std::abs(decode_expectation(p, model.grid()) - samples[i].true_edges[e]) / 4.0;
      out.flatness += flatness(p) / 4.0;
    }
  }
  const double n = static_cast<double>(samples.size());
  const double nb = static_cast<double>(box_count);
  out.cls_kl /= n;
  out.feature_pearson /= n;
  out.box_kl /= nb;
  out.box_logit_pearson /= nb;
  out.mae /= nb;
  out.flatness /= nb;
  return out;
}

void ExperimentConfig::validate() const {
  if (replicates.empty()) throw std::invalid_argument("experiment.replicates: must not be empty");
  if (schemes.empty()) throw std::invalid_argument("experiment.schemes: must not be empty");
  if (threads == 0) throw std::invalid_argument("threads: must be at least 1");
  data.validate(train.distill.grid);
  train.distill.validate();
  teacher_train.distill.validate();
  if (!(train.distill.grid == teacher_train.distill.grid)) {
    throw std::invalid_argument("teacher_train.distill.grid: must equal the student grid");
  }
  for (Scheme s : schemes) {
    if (s == Scheme::FeatureImitation && student.hidden_dim != teacher.hidden_dim) {
      throw std::invalid_argument("student.hidden_dim: must equal teacher.hidden_dim for feature imitation");
    }
  }
}

const SchemeRun& ExperimentReport::find(Scheme s, std::uint64_t replicate) const {
  for (const auto& r : runs) {
    if (r.scheme == s && r.replicate == replicate) return r;
  }
  throw std::out_of_range("ExperimentReport: no run for scheme '" + std::string(scheme_name(s)) + "'");
}

namespace {

struct CellResult {
  ReplicateSummary summary;
  std::vector<SchemeRun> runs;
};

CellResult run_cell(const ExperimentConfig& cfg, std::uint64_t replicate) {
  const std::uint64_t cell_seed = derive_seed(cfg.seed, replicate);
  const BinGrid& grid = cfg.train.distill.grid;
  const Dataset data = gen_dataset(cfg.data, cfg.train.distill, derive_seed(cell_seed, 1));

  LinearLocalizer teacher(cfg.data.input_dim, cfg.teacher, grid, derive_seed(cell_seed, 2));
  teacher = train_teacher(std::move(teacher), data, cfg.teacher_train).model;
  const LinearLocalizer student(cfg.data.input_dim, cfg.student, grid, derive_seed(cell_seed, 3));

  CellResult cell;
  cell.summary.replicate = replicate;
  cell.summary.teacher = evaluate(teacher, teacher, data.test, cfg.train.distill.tau);
  for (const auto& s : data.train) {
    cell.summary.main_count += s.main ? 1 : 0;
    cell.summary.vlr_count += s.vlr ? 1 : 0;
  }
  for (Scheme scheme : cfg.schemes) {
    auto trained = train(student, data, scheme, &teacher, cfg.train);
    cell.runs.push_back({scheme, replicate, evaluate(trained.model, teacher, data.test, cfg.train.distill.tau),
                         std::move(trained.trace)});
  }
  return cell;
}

}  // namespace

ExperimentReport run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  const std::size_t cells = cfg.replicates.size();
  std::vector<std::optional<CellResult>> results(cells);
  std::vector<std::exception_ptr> errors(cells);

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < cells; i = next++) {
      try {
        results[i] = run_cell(cfg, cfg.replicates[i]);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t workers = std::min(cfg.threads, cells);
  if (workers <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  ExperimentReport report;
  for (std::size_t i = 0; i < cells; ++i) {
    if (errors[i]) std::rethrow_exception(errors[i]);
    report.replicates.push_back(results[i]->summary);
    for (auto& r : results[i]->runs) report.runs.push_back(std::move(r));
  }
  return report;
}

std::string_view sweep_parameter_name(SweepParameter p) {
  switch (p) {
    case SweepParameter::Ambiguity: return "ambiguity";
    case SweepParameter::Gamma: return "gamma";
    case SweepParameter::Tau: return "tau";
  }
  return "unknown";
}

SweepParameter parse_sweep_parameter(std::string_view name) {
  for (auto p : {SweepParameter::Ambiguity, SweepParameter::Gamma, SweepParameter::Tau}) {
    if (sweep_parameter_name(p) == name) return p;
  }
  throw std::invalid_argument("unknown sweep parameter '" + std::string(name) +
                              "'; valid: ambiguity, gamma, tau");
}

std::vector<SweepRow> sweep(const ExperimentConfig& cfg, SweepParameter parameter,
                            const std::vector<double>& values) {
  if (values.empty()) throw std::invalid_argument("sweep: no values to sweep over");
  std::vector<SweepRow> rows;
  for (double v : values) {
    ExperimentConfig c = cfg;
    switch (parameter) {
      case SweepParameter::Ambiguity: c.data.ambiguity = v; break;
      case SweepParameter::Gamma: c.train.distill.gamma_vlr = v; break;
      case SweepParameter::Tau: c.train.distill.tau = v; break;
    }
    rows.push_back({v, run_experiment(c)});
  }
  return rows;
}

}  // namespace ld::harness
