#pragma once

// Command orchestration behind the hwm tool. Each command loads a config,
// writes its artifacts and a manifest into the output directory and returns
// a process exit code.

#include "hwm/config.hpp"

#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace hwm {

enum ExitCode : int {
    kExitOk = 0,
    kExitVerifyFailed = 1,
    kExitConfig = 2,
    kExitNotConverged = 3,
};

struct RunOptions {
    std::optional<std::string> out_dir;  // overrides HWM_OUT_DIR and run.out_dir
    std::optional<int> threads;          // overrides run.threads
    bool quiet = false;
};

struct RunOutcome {
    int exit_code = kExitOk;
    std::string out_dir;
    std::vector<std::string> files;  // names relative to out_dir
};

/// Output directory precedence: option, then HWM_OUT_DIR, then run.out_dir.
std::string resolve_out_dir(const RunConfig& cfg, const RunOptions& opt);

RunOutcome run_solve(const RunConfig& cfg, const RunOptions& opt, std::ostream& log);
RunOutcome run_simulate(const RunConfig& cfg, const RunOptions& opt, std::ostream& log);
RunOutcome run_verify(const RunConfig& cfg, const RunOptions& opt, std::ostream& log);
RunOutcome run_sweep(const RunConfig& cfg, const RunOptions& opt, std::ostream& log);

/// Loads `config_path` and dispatches `command` (solve, simulate, verify,
/// sweep). Config and input errors are reported on `err` and mapped to exit 2.
int run_command(const std::string& command, const std::string& config_path,
                const RunOptions& opt, std::ostream& out, std::ostream& err);

}  // namespace hwm
