#include "config.hpp"

#include <cmath>
#include <fstream>
#include <initializer_list>
#include <sstream>

#include "json.hpp"

namespace ld::cli {

using nlohmann::json;

namespace {

std::string join(const std::string& path, const std::string& key) {
  return path.empty() ? key : path + "." + key;
}

void check_keys(const json& obj, const std::string& path, std::initializer_list<const char*> allowed) {
  if (!obj.is_object()) throw ConfigError(path + ": expected an object");
  for (const auto& [key, value] : obj.items()) {
    bool known = false;
    for (const char* a : allowed) known = known || key == a;
    if (!known) {
      std::string list;
      for (const char* a : allowed) list += list.empty() ? a : std::string(", ") + a;
      throw ConfigError(join(path, key) + ": unknown field (expected one of " + list + ")");
    }
  }
}

double get_number(const json& v, const std::string& path) {
  if (!v.is_number()) throw ConfigError(path + ": expected a number");
  const double d = v.get<double>();
  if (!std::isfinite(d)) throw ConfigError(path + ": must be finite");
  return d;
}

std::uint64_t get_count(const json& v, const std::string& path) {
  if (v.is_number_unsigned()) return v.get<std::uint64_t>();
  if (v.is_number_integer()) {
    if (v.get<std::int64_t>() < 0) throw ConfigError(path + ": must be >= 0");
    return static_cast<std::uint64_t>(v.get<std::int64_t>());
  }
  throw ConfigError(path + ": expected a non-negative integer");
}

bool get_bool(const json& v, const std::string& path) {
  if (!v.is_boolean()) throw ConfigError(path + ": expected true or false");
  return v.get<bool>();
}

std::string get_string(const json& v, const std::string& path) {
  if (!v.is_string()) throw ConfigError(path + ": expected a string");
  return v.get<std::string>();
}

template <typename F>
void each(const json& v, const std::string& path, F&& f) {
  if (!v.is_array()) throw ConfigError(path + ": expected an array");
  for (std::size_t i = 0; i < v.size(); ++i) f(v[i], path + "[" + std::to_string(i) + "]");
}

// Reads obj[key] through `read` when present.
template <typename F>
void opt(const json& obj, const std::string& path, const char* key, F&& read) {
  if (obj.contains(key)) read(obj.at(key), join(path, key));
}

void read_distill(const json& j, const std::string& path, DistillConfig& d) {
  check_keys(j, path, {"tau", "gamma_vlr", "alpha_pos", "lambda", "tbr_margin", "grid"});
  opt(j, path, "tau", [&](const json& v, const std::string& p) { d.tau = get_number(v, p); });
  opt(j, path, "gamma_vlr", [&](const json& v, const std::string& p) { d.gamma_vlr = get_number(v, p); });
  opt(j, path, "alpha_pos", [&](const json& v, const std::string& p) { d.alpha_pos = get_number(v, p); });
  opt(j, path, "tbr_margin", [&](const json& v, const std::string& p) { d.tbr_margin = get_number(v, p); });
  opt(j, path, "lambda", [&](const json& v, const std::string& p) {
    if (!v.is_array() || v.size() != 7) throw ConfigError(p + ": expected 7 weights");
    for (std::size_t k = 0; k < 7; ++k) d.lambda[k] = get_number(v[k], p + "[" + std::to_string(k) + "]");
  });
  opt(j, path, "grid", [&](const json& v, const std::string& p) {
    check_keys(v, p, {"e_min", "e_max", "n"});
    double lo = d.grid.e_min();
    double hi = d.grid.e_max();
    std::size_t n = d.grid.n();
    opt(v, p, "e_min", [&](const json& x, const std::string& q) { lo = get_number(x, q); });
    opt(v, p, "e_max", [&](const json& x, const std::string& q) { hi = get_number(x, q); });
    opt(v, p, "n", [&](const json& x, const std::string& q) { n = get_count(x, q); });
    try {
      d.grid = make_grid(lo, hi, n);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(p + ": " + e.what());
    }
  });
}

void read_verify(const json& j, const std::string& path, theory::VerifyConfig& v) {
  check_keys(j, path, {"trials", "sizes", "mc_trials", "mc_eta_scale", "mc_sigma", "tolerances",
                       "perturbation"});
  opt(j, path, "trials", [&](const json& x, const std::string& p) { v.trials = get_count(x, p); });
  opt(j, path, "mc_trials", [&](const json& x, const std::string& p) { v.mc_trials = get_count(x, p); });
  opt(j, path, "mc_eta_scale", [&](const json& x, const std::string& p) { v.mc_eta_scale = get_number(x, p); });
  opt(j, path, "mc_sigma", [&](const json& x, const std::string& p) { v.mc_sigma = get_number(x, p); });
  opt(j, path, "perturbation", [&](const json& x, const std::string& p) { v.perturbation = get_number(x, p); });
  opt(j, path, "sizes", [&](const json& x, const std::string& p) {
    v.sizes.clear();
    each(x, p, [&](const json& e, const std::string& q) { v.sizes.push_back(get_count(e, q)); });
  });
  opt(j, path, "tolerances", [&](const json& x, const std::string& p) {
    check_keys(x, p, {"proposition1", "decomposition", "rescaling", "gradient_sum"});
    opt(x, p, "proposition1", [&](const json& t, const std::string& q) { v.tol_proposition1 = get_number(t, q); });
    opt(x, p, "decomposition", [&](const json& t, const std::string& q) { v.tol_decomposition = get_number(t, q); });
    opt(x, p, "rescaling", [&](const json& t, const std::string& q) { v.tol_rescaling = get_number(t, q); });
    opt(x, p, "gradient_sum", [&](const json& t, const std::string& q) { v.tol_gradient_sum = get_number(t, q); });
  });
}

void read_data(const json& j, const std::string& path, harness::DataConfig& d) {
  check_keys(j, path, {"train_size", "test_size", "input_dim", "ambiguity", "mode_gap", "edge_low",
                       "edge_high", "anchor_size", "input_noise"});
  opt(j, path, "train_size", [&](const json& v, const std::string& p) { d.train_size = get_count(v, p); });
  opt(j, path, "test_size", [&](const json& v, const std::string& p) { d.test_size = get_count(v, p); });
  opt(j, path, "input_dim", [&](const json& v, const std::string& p) { d.input_dim = get_count(v, p); });
  opt(j, path, "ambiguity", [&](const json& v, const std::string& p) { d.ambiguity = get_number(v, p); });
  opt(j, path, "mode_gap", [&](const json& v, const std::string& p) { d.mode_gap = get_number(v, p); });
  opt(j, path, "edge_low", [&](const json& v, const std::string& p) { d.edge_low = get_number(v, p); });
  opt(j, path, "edge_high", [&](const json& v, const std::string& p) { d.edge_high = get_number(v, p); });
  opt(j, path, "anchor_size", [&](const json& v, const std::string& p) { d.anchor_size = get_number(v, p); });
  opt(j, path, "input_noise", [&](const json& v, const std::string& p) { d.input_noise = get_number(v, p); });
}

void read_model(const json& j, const std::string& path, harness::ModelConfig& m) {
  check_keys(j, path, {"feature_dim", "hidden_dim", "classes", "feature_gain", "head_init",
                       "trainable_projection"});
  opt(j, path, "feature_dim", [&](const json& v, const std::string& p) { m.feature_dim = get_count(v, p); });
  opt(j, path, "hidden_dim", [&](const json& v, const std::string& p) { m.hidden_dim = get_count(v, p); });
  opt(j, path, "classes", [&](const json& v, const std::string& p) { m.classes = get_count(v, p); });
  opt(j, path, "feature_gain", [&](const json& v, const std::string& p) { m.feature_gain = get_number(v, p); });
  opt(j, path, "head_init", [&](const json& v, const std::string& p) { m.head_init = get_number(v, p); });
  opt(j, path, "trainable_projection",
      [&](const json& v, const std::string& p) { m.trainable_projection = get_bool(v, p); });
}

void read_train(const json& j, const std::string& path, harness::TrainConfig& t) {
  check_keys(j, path, {"epochs", "learning_rate", "tbr_weight", "fi_weight"});
  opt(j, path, "epochs", [&](const json& v, const std::string& p) { t.epochs = get_count(v, p); });
  opt(j, path, "learning_rate", [&](const json& v, const std::string& p) { t.learning_rate = get_number(v, p); });
  opt(j, path, "tbr_weight", [&](const json& v, const std::string& p) { t.tbr_weight = get_number(v, p); });
  opt(j, path, "fi_weight", [&](const json& v, const std::string& p) { t.fi_weight = get_number(v, p); });
}

void read_experiment(const json& j, const std::string& path, RunConfig& cfg) {
  check_keys(j, path, {"replicates", "schemes", "write_dataset"});
  auto& e = cfg.experiment;
  opt(j, path, "replicates", [&](const json& v, const std::string& p) {
    e.replicates.clear();
    each(v, p, [&](const json& x, const std::string& q) { e.replicates.push_back(get_count(x, q)); });
  });
  opt(j, path, "schemes", [&](const json& v, const std::string& p) {
    e.schemes.clear();
    each(v, p, [&](const json& x, const std::string& q) {
      try {
        e.schemes.push_back(harness::parse_scheme(get_string(x, q)));
      } catch (const std::invalid_argument& err) {
        throw ConfigError(q + ": " + err.what());
      }
    });
  });
  opt(j, path, "write_dataset", [&](const json& v, const std::string& p) { cfg.write_dataset = get_bool(v, p); });
}

void read_sweep(const json& j, const std::string& path, RunConfig& cfg) {
  check_keys(j, path, {"parameter", "values"});
  opt(j, path, "parameter", [&](const json& v, const std::string& p) {
    try {
      cfg.sweep_parameter = harness::parse_sweep_parameter(get_string(v, p));
    } catch (const std::invalid_argument& err) {
      throw ConfigError(p + ": " + err.what());
    }
  });
  opt(j, path, "values", [&](const json& v, const std::string& p) {
    cfg.sweep_values.clear();
    each(v, p, [&](const json& x, const std::string& q) { cfg.sweep_values.push_back(get_number(x, q)); });
  });
}

void apply_override(json& root, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigError("override '" + assignment + "': expected key=value");
  }
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  json value;
  try {
    value = json::parse(text);
  } catch (const json::parse_error&) {
    value = text;
  }
  json* node = &root;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (part.empty()) throw ConfigError("override '" + assignment + "': empty key segment");
    if (!node->is_object()) throw ConfigError("override '" + key + "': parent is not an object");
    if (dot == std::string::npos) {
      (*node)[part] = value;
      return;
    }
    node = &(*node)[part];
    if (node->is_null()) *node = json::object();
    start = dot + 1;
  }
}

void validate(const RunConfig& cfg) {
  const auto& v = cfg.verify;
  if (v.trials == 0) throw ConfigError("verify.trials: must be at least 1");
  if (v.mc_trials < 2) throw ConfigError("verify.mc_trials: must be at least 2");
  if (v.sizes.empty()) throw ConfigError("verify.sizes: must not be empty");
  for (std::size_t i = 0; i < v.sizes.size(); ++i) {
    if (v.sizes[i] < 2) {
      throw ConfigError("verify.sizes[" + std::to_string(i) + "]: need at least 2 bins");
    }
  }
  if (!(v.mc_eta_scale >= 0.0)) throw ConfigError("verify.mc_eta_scale: must be >= 0");
  if (!(v.mc_sigma > 0.0)) throw ConfigError("verify.mc_sigma: must be > 0");
  for (auto [name, tol] : {std::pair{"proposition1", v.tol_proposition1},
                           std::pair{"decomposition", v.tol_decomposition},
                           std::pair{"rescaling", v.tol_rescaling},
                           std::pair{"gradient_sum", v.tol_gradient_sum}}) {
    if (!(tol > 0.0)) throw ConfigError(std::string("verify.tolerances.") + name + ": must be > 0");
  }
  if (cfg.sweep_values.empty()) throw ConfigError("sweep.values: must not be empty");
  try {
    cfg.experiment.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

json distill_json(const DistillConfig& d) {
  return {{"tau", d.tau},
          {"gamma_vlr", d.gamma_vlr},
          {"alpha_pos", d.alpha_pos},
          {"lambda", d.lambda},
          {"tbr_margin", d.tbr_margin},
          {"grid", {{"e_min", d.grid.e_min()}, {"e_max", d.grid.e_max()}, {"n", d.grid.n()}}}};
}

json model_json(const harness::ModelConfig& m) {
  return {{"feature_dim", m.feature_dim},   {"hidden_dim", m.hidden_dim},
          {"classes", m.classes},           {"feature_gain", m.feature_gain},
          {"head_init", m.head_init},       {"trainable_projection", m.trainable_projection}};
}

json train_json(const harness::TrainConfig& t) {
  return {{"epochs", t.epochs},
          {"learning_rate", t.learning_rate},
          {"tbr_weight", t.tbr_weight},
          {"fi_weight", t.fi_weight}};
}

}  // namespace

RunConfig parse_config(const std::string& text, const std::vector<std::string>& overrides,
                       const std::filesystem::path& base_dir) {
  json root;
  if (text.find_first_not_of(" \t\r\n") == std::string::npos) {
    root = json::object();
  } else {
    try {
      root = json::parse(text);
    } catch (const json::parse_error& e) {
      throw ConfigError(std::string("config: ") + e.what());
    }
  }
  for (const auto& o : overrides) apply_override(root, o);

  RunConfig cfg;
  check_keys(root, "", {"seed", "threads", "output_dir", "distill", "verify", "experiment", "data",
                        "student", "teacher", "train", "teacher_train", "sweep", "scene"});
  opt(root, "", "seed", [&](const json& v, const std::string& p) { cfg.seed = get_count(v, p); });
  opt(root, "", "threads", [&](const json& v, const std::string& p) { cfg.threads = get_count(v, p); });
  opt(root, "", "output_dir",
      [&](const json& v, const std::string& p) { cfg.output_dir = get_string(v, p); });

  auto& e = cfg.experiment;
  opt(root, "", "distill", [&](const json& v, const std::string& p) { read_distill(v, p, e.train.distill); });
  e.teacher_train.distill = e.train.distill;
  opt(root, "", "verify", [&](const json& v, const std::string& p) { read_verify(v, p, cfg.verify); });
  opt(root, "", "experiment", [&](const json& v, const std::string& p) { read_experiment(v, p, cfg); });
  opt(root, "", "data", [&](const json& v, const std::string& p) { read_data(v, p, e.data); });
  opt(root, "", "student", [&](const json& v, const std::string& p) { read_model(v, p, e.student); });
  opt(root, "", "teacher", [&](const json& v, const std::string& p) { read_model(v, p, e.teacher); });
  opt(root, "", "train", [&](const json& v, const std::string& p) { read_train(v, p, e.train); });
  opt(root, "", "teacher_train", [&](const json& v, const std::string& p) { read_train(v, p, e.teacher_train); });
  opt(root, "", "sweep", [&](const json& v, const std::string& p) { read_sweep(v, p, cfg); });
  opt(root, "", "scene", [&](const json& v, const std::string& p) {
    const std::filesystem::path scene = get_string(v, p);
    cfg.scene_path = scene.is_absolute() ? scene : base_dir / scene;
  });

  cfg.verify.seed = cfg.seed;
  e.seed = cfg.seed;
  e.threads = cfg.threads;
  validate(cfg);
  return cfg;
}

RunConfig load_config(const std::filesystem::path& file, const std::vector<std::string>& overrides) {
  std::ifstream in(file);
  if (!in) throw ConfigError("config: cannot open " + file.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str(), overrides, file.parent_path());
}

std::string default_config_text() {
  const RunConfig cfg;
  const auto& e = cfg.experiment;
  const auto& v = cfg.verify;
  json schemes = json::array();
  for (auto s : e.schemes) schemes.push_back(harness::scheme_name(s));
  const json root = {
      {"seed", cfg.seed},
      {"threads", cfg.threads},
      {"output_dir", cfg.output_dir.string()},
      {"distill", distill_json(e.train.distill)},
      {"verify",
       {{"trials", v.trials},
        {"sizes", v.sizes},
        {"mc_trials", v.mc_trials},
        {"mc_eta_scale", v.mc_eta_scale},
        {"mc_sigma", v.mc_sigma},
        {"perturbation", v.perturbation},
        {"tolerances",
         {{"proposition1", v.tol_proposition1},
          {"decomposition", v.tol_decomposition},
          {"rescaling", v.tol_rescaling},
          {"gradient_sum", v.tol_gradient_sum}}}}},
      {"experiment",
       {{"replicates", e.replicates}, {"schemes", schemes}, {"write_dataset", cfg.write_dataset}}},
      {"data",
       {{"train_size", e.data.train_size},
        {"test_size", e.data.test_size},
        {"input_dim", e.data.input_dim},
        {"ambiguity", e.data.ambiguity},
        {"mode_gap", e.data.mode_gap},
        {"edge_low", e.data.edge_low},
        {"edge_high", e.data.edge_high},
        {"anchor_size", e.data.anchor_size},
        {"input_noise", e.data.input_noise}}},
      {"student", model_json(e.student)},
      {"teacher", model_json(e.teacher)},
      {"train", train_json(e.train)},
      {"teacher_train", train_json(e.teacher_train)},
      {"sweep",
       {{"parameter", harness::sweep_parameter_name(cfg.sweep_parameter)},
        {"values", cfg.sweep_values}}},
  };
  return root.dump(2) + "\n";
}

}  // namespace ld::cli
