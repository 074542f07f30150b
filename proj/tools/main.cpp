#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "commands.hpp"

namespace {

struct Flags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> threads;
  std::string out;
  std::vector<std::string> set;
};

void add_common(CLI::App* cmd, Flags& f) {
  cmd->add_option("-c,--config", f.config, "JSON config file")->check(CLI::ExistingFile);
  cmd->add_option("--seed", f.seed, "root seed");
  cmd->add_option("--threads", f.threads, "worker threads (default 1)");
  cmd->add_option("-o,--out", f.out, "output directory");
  cmd->add_option("--set", f.set, "override a config field, e.g. --set data.ambiguity=1.0");
}

ld::cli::RunConfig resolve(const Flags& f) {
  std::vector<std::string> overrides = f.set;
  if (const char* env = std::getenv("LD_OUTPUT_DIR"); env != nullptr && *env != '\0') {
    overrides.push_back(std::string("output_dir=\"") + env + "\"");
  }
  if (f.seed) overrides.push_back("seed=" + std::to_string(*f.seed));
  if (f.threads) overrides.push_back("threads=" + std::to_string(*f.threads));
  auto cfg = f.config.empty() ? ld::cli::parse_config("", overrides, ".")
                              : ld::cli::load_config(f.config, overrides);
  if (!f.out.empty()) cfg.output_dir = f.out;
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Localization distillation toolkit"};
  app.require_subcommand(1);

  Flags flags;
  using Command = int (*)(const ld::cli::RunConfig&, std::ostream&);
  Command selected = nullptr;

  const std::pair<const char*, const char*> names[] = {
      {"verify", "numerically certify the gradient identities"},
      {"experiment", "train and compare distillation schemes on synthetic data"},
      {"sweep", "repeat the experiment over a parameter grid"},
      {"dump-assignment", "write per-anchor region flags for a scene"},
  };
  const Command commands[] = {ld::cli::cmd_verify, ld::cli::cmd_experiment, ld::cli::cmd_sweep,
                              ld::cli::cmd_dump_assignment};
  for (std::size_t i = 0; i < std::size(names); ++i) {
    auto* cmd = app.add_subcommand(names[i].first, names[i].second);
    add_common(cmd, flags);
    cmd->callback([&selected, c = commands[i]] { selected = c; });
  }
  auto* defaults = app.add_subcommand("print-config", "print the default config");
  defaults->callback([] { std::cout << ld::cli::default_config_text(); });

  CLI11_PARSE(app, argc, argv);
  if (selected == nullptr) return ld::cli::kOk;

  try {
    const auto cfg = resolve(flags);
    return selected(cfg, std::cout);
  } catch (const ld::cli::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return ld::cli::kUsageError;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return ld::cli::kUsageError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return ld::cli::kCheckFailed;
  }
}
