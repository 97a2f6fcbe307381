#pragma once

// Sectioned key = value run configuration.
//
//   schema = hwm/1
//   [market]
//   r = 0.02
//   mu = 0.07, 0.05
//   sigma = 0.20, 0, 0.05, 0.15     # row-major 2x2
//   ...
//
// Comments start with '#'. Unknown sections or keys, duplicates and
// malformed values are rejected with the offending line number.

#include "hwm/dynamics.hpp"
#include "hwm/grid.hpp"
#include "hwm/hjb.hpp"
#include "hwm/model.hpp"
#include "hwm/verify.hpp"

#include <istream>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace hwm {

inline constexpr const char* kSchemaVersion = "hwm/1";

class ConfigError : public std::runtime_error {
public:
    ConfigError(const std::string& origin, int line, const std::string& key, const std::string& what);
    int line() const noexcept { return line_; }
    const std::string& key() const noexcept { return key_; }

private:
    int line_;
    std::string key_;
};

enum class PolicySource { Constant, Field };
enum class SweepAxis { Epsilon, Q, LambdaD };

std::string to_string(SweepAxis a);

struct SweepConfig {
    SweepAxis axis = SweepAxis::Epsilon;
    std::vector<double> values;
    std::vector<State> probes;
    bool zero_ambiguity_baseline = false;
};

struct RunConfig {
    std::string origin;  // file name used in error messages
    std::string schema = kSchemaVersion;

    MarketParams market;
    int nx = 0;
    int ny1 = 0;
    int ny2 = 0;
    std::optional<double> y_max;  // empty: default_y_max
    SolverConfig solver;

    SimConfig sim;
    bool t_max_auto = true;
    double truncation_budget = 1e-6;
    State start{0.0, 0.0, 0.0};
    bool start_set = false;
    PolicySource policy = PolicySource::Constant;
    Vec2 pi = Vec2::Zero();
    Vec2 theta = Vec2::Zero();
    std::string policy_file;
    int trajectory_paths = 10;

    VerifyPlan verify;
    SweepConfig sweep;

    int threads = 1;
    std::string out_dir = "hwm_out";
    int slice_y2_index = 0;

    std::map<std::string, int> key_lines;  // "section.key" -> line

    /// Resolved configuration as config text; a valid input itself. Threads
    /// and the output directory are left out since they do not affect results.
    std::string canonical() const;
    /// SHA-256 of canonical(), lower-case hex.
    std::string hash() const;
};

RunConfig parse_config(std::istream& in, const std::string& origin = "<config>");
RunConfig load_config(const std::string& path);

/// Domain validation of a parsed config. ValidationErrors are rethrown as
/// ConfigErrors anchored at the line of the matching key.
void validate_run_config(const RunConfig& cfg);

Grid make_grid(const RunConfig& cfg);
SimConfig effective_sim(const RunConfig& cfg);
State effective_start(const RunConfig& cfg);

std::string sha256_hex(const std::string& data);

}  // namespace hwm
