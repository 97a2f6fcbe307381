#include "hwm/dynamics.hpp"

#include "hwm/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <ostream>

namespace hwm {

std::string to_string(PathStatus s) {
    switch (s) {
        case PathStatus::Alive: return "alive";
        case PathStatus::Ruined: return "ruined";
        case PathStatus::Defaulted: return "defaulted";
        case PathStatus::Truncated: return "truncated";
    }
    return "unknown";
}

PathState PathState::start(const State& z) {
    PathState s;
    s.x = z.x;
    s.y = Vec2(z.y1, z.y2);
    s.y0 = s.y;
    s.m = s.y;
    s.m_raw = s.y;
    return s;
}

void validate_sim_config(const SimConfig& cfg) {
    if (!(cfg.dt > 0) || !std::isfinite(cfg.dt)) throw ValidationError("dt", "must be > 0");
    if (!(cfg.t_max > 0) || !std::isfinite(cfg.t_max))
        throw ValidationError("t_max", "must be > 0");
    if (cfg.n_paths <= 0) throw ValidationError("n_paths", "must be > 0");
    if (cfg.threads < 1) throw ValidationError("threads", "must be >= 1");
}

double horizon_for_budget(double lambda_d, double budget) {
    return -std::log(budget) / lambda_d;
}

Policy Policy::constant(Vec2 pi, Vec2 theta) {
    Policy pol;
    pol.pi_of = [pi](const State&) { return pi; };
    pol.theta_of = [theta](const State&) { return theta; };
    pol.idle_beyond_safe_level = pi.isZero(0) && theta.isZero(0);
    return pol;
}

std::mt19937_64 path_engine(std::uint64_t seed, std::uint64_t path) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(path), static_cast<std::uint32_t>(path >> 32)};
    return std::mt19937_64(seq);
}

PathState euler_step(const PathState& s, const Vec2& pi, const Vec2& theta, double dt,
                     const Vec2& dW, const MarketParams& p, const DerivedParams& d) {
    if (!pi.allFinite() || !theta.allFinite() || !dW.allFinite() || !std::isfinite(dt) ||
        !std::isfinite(s.x))
        throw ValidationError("euler_step", "non-finite input");

    PathState n = s;
    const double x_tent = s.x + (p.r * s.x - p.c + pi.dot(d.mu_r_delta + p.sigma * theta)) * dt +
                          pi.dot(p.sigma * dW);
    const Vec2 y_tent =
        s.y - pi.cwiseProduct((d.mu_b_delta + d.sigma_b_delta * theta) * dt + d.sigma_b_delta * dW);

    // One-step Skorokhod problem per fund: Y' = Y~ + (1+q) dM, dM >= 0,
    // Y' >= 0, dM Y' = 0.
    n.x = x_tent;
    for (int i = 0; i < 2; ++i) {
        const double push = std::max(0.0, -y_tent[i]);
        const double dm = push / (1.0 + p.q[i]);
        n.dm[i] = dm;
        n.y[i] = push > 0.0 ? 0.0 : y_tent[i];
        n.x -= p.q[i] * dm;
        n.m[i] += dm;
        n.m_raw[i] += push;
    }
    n.penalty += theta.squaredNorm() * dt / (2.0 * p.epsilon);
    n.t = s.t + dt;
    if (n.x <= p.R) {
        n.status = PathStatus::Ruined;
        n.status_time = n.t;
    }
    return n;
}

namespace {

std::pair<Vec2, Vec2> clamped_controls(const Policy& pol, const MarketParams& p, const State& z) {
    if (pol.controls_of) {
        const auto [pi, theta] = pol.controls_of(z);
        return {p.control_set.clamp(pi), p.ambiguity_set.project(theta)};
    }
    return {p.control_set.clamp(pol.pi_of(z)), p.ambiguity_set.project(pol.theta_of(z))};
}

}  // namespace

PathResult simulate_path(const MarketParams& p, const DerivedParams& d, const Policy& policy,
                         const SimConfig& cfg, const State& z0, std::mt19937_64& rng) {
    if (!(z0.x >= p.R) || z0.y1 < 0 || z0.y2 < 0)
        throw ValidationError("x0", "initial state must have x >= R and y >= 0");

    PathResult out;
    PathState s = PathState::start(z0);
    const double tau_d = sample_default(rng, p.lambda_d);
    std::normal_distribution<double> normal;
    if (cfg.store_trajectories) out.trajectory.push_back(s);

    if (s.x <= p.R) {
        s.status = PathStatus::Ruined;
        s.status_time = 0.0;
        out.terminal = s;
        return out;
    }
    const double stop = std::min(tau_d, cfg.t_max);
    const double safe = p.safe_level();
    while (s.status == PathStatus::Alive) {
        if (s.t >= stop) {
            s.status = tau_d <= cfg.t_max ? PathStatus::Defaulted : PathStatus::Truncated;
            s.status_time = stop;
            break;
        }
        if (policy.idle_beyond_safe_level && s.x >= safe) {
            // Deterministic, ruin-free remainder: x(t) = c/r + (x - c/r) e^{r t}.
            PathState f = s;
            f.dm.setZero();
            f.x = safe + (s.x - safe) * std::exp(p.r * (stop - s.t));
            f.t = stop;
            f.status = tau_d <= cfg.t_max ? PathStatus::Defaulted : PathStatus::Truncated;
            f.status_time = stop;
            s = f;
            if (cfg.store_trajectories) out.trajectory.push_back(s);
            break;
        }
        const double h = std::min(cfg.dt, stop - s.t);
        const State z = s.state();
        const auto [pi, theta] = clamped_controls(policy, p, z);
        Vec2 dW = Vec2::Zero();
        if (!pi.isZero(0)) {
            const double sq = std::sqrt(h);
            dW[0] = normal(rng) * sq;
            dW[1] = normal(rng) * sq;
        }
        s = euler_step(s, pi, theta, h, dW, p, d);
        if (s.t >= stop - 1e-12 * std::max(1.0, stop) && s.status == PathStatus::Alive)
            s.t = stop;
        if (cfg.store_trajectories) out.trajectory.push_back(s);
    }
    out.terminal = s;
    return out;
}

ObjectiveEstimate estimate_objective(const MarketParams& p, const DerivedParams& d,
                                     const Policy& policy, const SimConfig& cfg,
                                     const State& z0) {
    validate_sim_config(cfg);
    const auto n = static_cast<std::size_t>(cfg.n_paths);
    std::vector<double> contrib(n), contrib_sq(n), truncated(n), ruined(n), penalty(n), exit_t(n);
    SimConfig local = cfg;
    local.store_trajectories = false;

    parallel_for(n, cfg.threads, [&](std::size_t i) {
        auto rng = path_engine(cfg.seed, i);
        const auto res = simulate_path(p, d, policy, local, z0, rng);
        const auto& t = res.terminal;
        const double ruin = t.status == PathStatus::Ruined ? 1.0 : 0.0;
        contrib[i] = ruin - t.penalty;
        contrib_sq[i] = contrib[i] * contrib[i];
        truncated[i] = t.status == PathStatus::Truncated ? 1.0 : 0.0;
        ruined[i] = ruin;
        penalty[i] = t.penalty;
        exit_t[i] = t.status_time;
    });

    const double nn = static_cast<double>(n);
    ObjectiveEstimate e;
    e.n = cfg.n_paths;
    e.mean = pairwise_sum(contrib.begin(), contrib.end()) / nn;
    const double second = pairwise_sum(contrib_sq.begin(), contrib_sq.end()) / nn;
    const double var = n > 1 ? std::max(second - e.mean * e.mean, 0.0) * nn / (nn - 1.0) : 0.0;
    e.std_err = std::sqrt(var / nn);
    e.truncation_fraction = pairwise_sum(truncated.begin(), truncated.end()) / nn;
    e.ruin_fraction = pairwise_sum(ruined.begin(), ruined.end()) / nn;
    e.penalty_mean = pairwise_sum(penalty.begin(), penalty.end()) / nn;
    e.exit_time_mean = pairwise_sum(exit_t.begin(), exit_t.end()) / nn;
    return e;
}

WatermarkReport watermark_report(const std::vector<PathState>& trajectory, const Vec2& q) {
    WatermarkReport rep;
    for (const auto& s : trajectory) {
        for (int i = 0; i < 2; ++i) {
            const double res = std::abs((s.m_raw[i] - s.y0[i]) - (1.0 + q[i]) * (s.m[i] - s.y0[i]));
            rep.max_residual[i] = std::max(rep.max_residual[i], res);
            if (s.dm[i] > 0.0) {
                ++rep.reflection_steps;
                if (s.y[i] != 0.0) ++rep.complementarity_violations;
            }
        }
    }
    return rep;
}

void write_trajectory_csv(std::ostream& os, const std::vector<PathState>& trajectory) {
    os << "t,x,y1,y2,m1,m2,penalty,status\n";
    os << std::setprecision(17);
    for (const auto& s : trajectory) {
        os << s.t << ',' << s.x << ',' << s.y[0] << ',' << s.y[1] << ',' << s.m[0] << ','
           << s.m[1] << ',' << s.penalty << ',' << to_string(s.status) << '\n';
    }
}

}  // namespace hwm
