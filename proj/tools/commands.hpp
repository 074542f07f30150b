#pragma once

#include <iosfwd>

#include "config.hpp"

namespace ld::cli {

enum ExitCode : int { kOk = 0, kCheckFailed = 1, kUsageError = 2 };

/// Each command writes its files under cfg.output_dir and a short human
/// summary to `log`. The return value is the process exit code.
int cmd_verify(const RunConfig& cfg, std::ostream& log);
int cmd_experiment(const RunConfig& cfg, std::ostream& log);
int cmd_sweep(const RunConfig& cfg, std::ostream& log);
int cmd_dump_assignment(const RunConfig& cfg, std::ostream& log);

}  // namespace ld::cli
