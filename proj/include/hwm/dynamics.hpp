#pragma once

// Euler-Maruyama simulation of the fee-charged state (X, Y, M) under a
// theta-shifted measure, with per-step Skorokhod projection for the
// high-watermark mechanism and an exponential default clock.

#include "hwm/model.hpp"

#include <cmath>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

namespace hwm {

enum class PathStatus { Alive, Ruined, Defaulted, Truncated };

std::string to_string(PathStatus s);

struct PathState {
    double t = 0.0;
    double x = 0.0;
    Vec2 y = Vec2::Zero();
    Vec2 y0 = Vec2::Zero();    // initial distances, anchor of both watermarks
    Vec2 m = Vec2::Zero();     // net watermark M
    Vec2 m_raw = Vec2::Zero(); // raw watermark M-bar
    Vec2 dm = Vec2::Zero();    // watermark increment of the last step
    double penalty = 0.0;      // (1/(2 eps)) int |theta|^2 ds
    PathStatus status = PathStatus::Alive;
    double status_time = 0.0;

    static PathState start(const State& z);
    State state() const { return {x, y[0], y[1]}; }
};

struct SimConfig {
    double dt = 1e-2;
    double t_max = 200.0;
    std::int64_t n_paths = 10000;
    std::uint64_t seed = 42;
    bool store_trajectories = false;
    int threads = 1;
};

/// Throws ValidationError on dt <= 0, t_max <= 0, n_paths <= 0.
void validate_sim_config(const SimConfig& cfg);

/// Horizon whose survival probability exp(-lambda_d t) equals `budget`.
double horizon_for_budget(double lambda_d, double budget);

/// Feedback controls of the observable state. Outputs are clamped into the
/// model's sets by the simulator.
struct Policy {
    std::function<Vec2(const State&)> pi_of;
    std::function<Vec2(const State&)> theta_of;
    /// Optional joint evaluation (pi, theta); used instead of the two maps
    /// when set.
    std::function<std::pair<Vec2, Vec2>(const State&)> controls_of;
    /// Both controls vanish for every x >= c/r, which makes {x >= c/r}
    /// absorbing and ruin-free.
    bool idle_beyond_safe_level = false;

    static Policy constant(Vec2 pi, Vec2 theta);
};

struct ObjectiveEstimate {
    double mean = 0.0;
    double std_err = 0.0;
    std::int64_t n = 0;
    double truncation_fraction = 0.0;
    double ruin_fraction = 0.0;
    double penalty_mean = 0.0;
    double exit_time_mean = 0.0;  // mean of min(tau_R, tau_D, t_max)
};

/// Exponential default time by inversion, so a fixed uniform maps to a
/// smaller time for a larger intensity.
template <class Urbg>
double sample_default(Urbg& rng, double lambda_d) {
    const double u = std::generate_canonical<double, 53>(rng);
    return -std::log1p(-u) / lambda_d;
}

/// Per-path engine derived from (master seed, path index) only.
std::mt19937_64 path_engine(std::uint64_t seed, std::uint64_t path);

/// One Euler step of length dt with Brownian increment dW, followed by the
/// per-fund reflection. Ruin is flagged when the post-step wealth is <= R.
PathState euler_step(const PathState& s, const Vec2& pi, const Vec2& theta, double dt,
                     const Vec2& dW, const MarketParams& p, const DerivedParams& d);

struct PathResult {
    PathState terminal;
    std::vector<PathState> trajectory;  // filled when store_trajectories
};

PathResult simulate_path(const MarketParams& p, const DerivedParams& d, const Policy& policy,
                         const SimConfig& cfg, const State& z0, std::mt19937_64& rng);

ObjectiveEstimate estimate_objective(const MarketParams& p, const DerivedParams& d,
                                     const Policy& policy, const SimConfig& cfg,
                                     const State& z0);

struct WatermarkReport {
    Vec2 max_residual = Vec2::Zero();
    std::int64_t complementarity_violations = 0;
    std::int64_t reflection_steps = 0;
};

/// Residual of M-bar - y0 = (1 + q)(M - y0) along a stored trajectory, and the
/// number of steps with dM > 0 but post-step Y != 0.
WatermarkReport watermark_report(const std::vector<PathState>& trajectory, const Vec2& q);

/// Columns t,x,y1,y2,m1,m2,penalty,status.
void write_trajectory_csv(std::ostream& os, const std::vector<PathState>& trajectory);

}  // namespace hwm
