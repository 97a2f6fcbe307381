#pragma once

// Executable checks of the solver against the closed-form bounds and
// reductions, Monte Carlo and grid-sensitivity studies.

#include "hwm/dynamics.hpp"
#include "hwm/grid.hpp"
#include "hwm/hjb.hpp"
#include "hwm/model.hpp"

#include <string>
#include <vector>

namespace hwm {

struct CheckResult {
    std::string name;
    bool passed = false;
    double measured = 0.0;
    double tolerance = 0.0;
    std::string detail;
    bool informational = false;  // reported, never fails the suite
};

class VerifyReport {
public:
    /// Throws std::logic_error if a check with the same name is present.
    void add(CheckResult r);
    const std::vector<CheckResult>& checks() const noexcept { return checks_; }
    bool passed() const;
    std::vector<std::string> failed_names() const;

    std::string json() const;
    std::string table() const;

private:
    std::vector<CheckResult> checks_;
};

struct VerifyTolerances {
    double sandwich = 2e-2;
    double frictionless_error = 2e-2;
    double order_min = 0.7;
    double order_max = 1.3;
    double y_variation = 5e-3;
    double noinvest_error = 1e-2;
    double slope_rel = 0.05;
    double c_disc = 1.0;
    double truncation = 5e-3;
    double epsilon_slack = 1e-3;
    double epsilon_limit = 5e-3;
    double watermark = 1e-10;
    double mc_sigmas = 3.0;
};

/// Worst violation of U(x) - tol <= field <= p(x) + tol over the nodes;
/// measured is the larger of the two one-sided excesses beyond the bounds.
CheckResult sandwich_check(const DiscreteField& field, const MarketParams& p, const Grid& grid,
                           double tol);

struct ReductionOutcome {
    double error = 0.0;         // sup error on the given grid
    double error_refined = 0.0; // sup error on the refined grid
    double interior_error = 0.0; // sup error off the y = 0 faces
    double order = 0.0;         // log2(error / error_refined)
    double y_variation = 0.0;   // max over x-lines of max - min along y
    double face_error = 0.0;    // sup error on the Dirichlet faces
    double slope_error = 0.0;   // relative log-slope error, middle third
    bool covers_policy = true;  // control set contains the frictionless optimiser range
    bool converged = false;
    SolveReport report;
    SolveReport report_refined;
};

/// q = 0 and theta = 0 applied to p; compares against U. The refinement
/// halves hx only.
ReductionOutcome reduction_frictionless(const MarketParams& p, const Grid& grid,
                                        const SolverConfig& cfg);
std::vector<CheckResult> reduction_check_frictionless(const MarketParams& p, const Grid& grid,
                                                      const SolverConfig& cfg,
                                                      const VerifyTolerances& tol,
                                                      const std::string& prefix = "frictionless");

/// K = {0} applied to p; compares against the never-invest value. The
/// refinement halves every spacing.
ReductionOutcome reduction_noinvest(const MarketParams& p, const Grid& grid,
                                    const SolverConfig& cfg);
std::vector<CheckResult> reduction_check_noinvest(const MarketParams& p, const Grid& grid,
                                                  const SolverConfig& cfg,
                                                  const VerifyTolerances& tol);

struct ProbeOutcome {
    State probe;
    double field_value = 0.0;
    ObjectiveEstimate estimate;
    double allowed = 0.0;  // mc_sigmas * stderr + c_disc * (hx + hy1 + hy2)
    bool passed = false;
};

/// Throws ValidationError for probes outside the grid box.
std::vector<ProbeOutcome> mc_crosscheck(const DiscreteField& field, const PolicyField& policy,
                                        const MarketParams& p, const std::vector<State>& probes,
                                        const SimConfig& sim, const VerifyTolerances& tol);

struct TruncationOutcome {
    double difference = 0.0;  // sup over the original nodes
    double factor = 2.0;
    bool converged = false;
};

/// Re-solves with y_max scaled by `factor`. For factor > 1 the y node counts
/// grow so the original nodes stay nodes; for factor < 1 the spacing is kept
/// and the comparison runs on the shared nodes.
TruncationOutcome truncation_sensitivity(const MarketParams& p, const Grid& grid,
                                         const SolverConfig& cfg, double factor = 2.0);

struct EpsilonOutcome {
    std::vector<double> epsilons;
    std::vector<std::vector<double>> probe_values;  // [epsilon][probe]
    std::vector<double> zero_ambiguity_values;      // theta = 0 baseline
    double worst_decrease = 0.0;   // largest drop between consecutive epsilons
    double limit_difference = 0.0; // sup |field(eps_min) - field(theta = 0)|
    bool all_converged = true;
    std::vector<SolveReport> reports;
};

EpsilonOutcome epsilon_study(const MarketParams& p, const Grid& grid, const SolverConfig& cfg,
                             const std::vector<double>& epsilons, const std::vector<State>& probes);

struct WatermarkOutcome {
    std::int64_t paths = 0;
    Vec2 max_residual = Vec2::Zero();
    double max_oracle_residual = 0.0;  // M-bar vs accumulated (1+q) dM
    std::int64_t complementarity_violations = 0;
    std::int64_t reflection_steps = 0;
    std::int64_t negative_y = 0;
    std::int64_t decreasing_watermark = 0;
};

/// Simulates paths one at a time with stored trajectories and audits them.
WatermarkOutcome watermark_audit(const MarketParams& p, const Policy& policy,
                                 const SimConfig& sim, const State& z0);

/// Largest increase of the field along y-lines (0 when non-increasing in y).
double max_y_increase(const DiscreteField& field, const Grid& grid);

/// Three interior probes at a quarter, half and three quarters of [R, c/r].
std::vector<State> default_probes(const MarketParams& p, const Grid& grid);

enum class Suite { Quick, Full };
Suite parse_suite(const std::string& name);
std::string to_string(Suite s);

struct VerifyPlan {
    Suite suite = Suite::Quick;
    VerifyTolerances tol;
    std::vector<State> probes;
    std::int64_t mc_paths = 100000;
    std::int64_t watermark_paths = 10000;
    std::vector<double> epsilons{1e-4, 1e-2, 1.0, 10.0};
};

/// Runs the selected suite. Quick: sandwich, boundary residuals, both
/// reductions, the never-invest Monte Carlo probe, watermark identity and
/// y-monotonicity. Full adds the feedback Monte Carlo probes, truncation
/// sensitivity and the epsilon study.
VerifyReport run_suite(const MarketParams& p, const Grid& grid, const SolverConfig& cfg,
                       const SimConfig& sim, const VerifyPlan& plan);

}  // namespace hwm
