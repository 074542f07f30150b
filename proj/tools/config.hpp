#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "ld/harness.hpp"
#include "ld/theory.hpp"

namespace ld::cli {

/// Everything one invocation needs. Built from a JSON config file plus
/// overrides; see docs/config.md for the schema.
struct RunConfig {
  std::uint64_t seed = 0;
  std::size_t threads = 1;
  std::filesystem::path output_dir = "out";

  theory::VerifyConfig verify;
  harness::ExperimentConfig experiment;
  bool write_dataset = false;

  harness::SweepParameter sweep_parameter = harness::SweepParameter::Gamma;
  std::vector<double> sweep_values{0.0, 0.25, 0.5, 0.75, 1.0};

  std::filesystem::path scene_path;  // resolved against the config file directory

  DistillConfig distill() const { return experiment.train.distill; }
};

/// Rejects unknown keys and wrong types with the dotted path of the field.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// `text` is the config file content; `base_dir` resolves relative paths in it.
/// Overrides have the form dotted.key=value, where value is parsed as JSON and
/// falls back to a plain string.
RunConfig parse_config(const std::string& text, const std::vector<std::string>& overrides,
                       const std::filesystem::path& base_dir);

RunConfig load_config(const std::filesystem::path& file, const std::vector<std::string>& overrides);

/// The defaults rendered as a config file.
std::string default_config_text();

}  // namespace ld::cli
