#include "hwm/runs.hpp"

#include "hwm/dynamics.hpp"
#include "hwm/hjb.hpp"
#include "hwm/verify.hpp"

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>

namespace hwm {

namespace fs = std::filesystem;

namespace {

std::string utc_now() {
    const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

class Artifacts {
public:
    Artifacts(const RunConfig& cfg, const RunOptions& opt, std::string command)
        : command_(std::move(command)),
          dir_(resolve_out_dir(cfg, opt)),
          hash_(cfg.hash()),
          started_(utc_now()) {
        fs::create_directories(dir_);
    }

    std::string name(const std::string& suffix) const {
        return command_ + "-" + hash_.substr(0, 12) + "-" + suffix;
    }

    void write(const std::string& suffix, const std::string& content) {
        const std::string file = name(suffix);
        std::ofstream os(fs::path(dir_) / file, std::ios::binary);
        os << content;
        if (!os) throw std::runtime_error("cannot write " + (fs::path(dir_) / file).string());
        files_.push_back(file);
    }

    RunOutcome finish(const RunConfig& cfg, int threads, int exit_code,
                      nlohmann::ordered_json extra = nlohmann::ordered_json::object()) {
        nlohmann::ordered_json m;
        m["schema_version"] = cfg.schema;
        m["tool_version"] = HWM_VERSION;
        m["command"] = command_;
        m["config_hash"] = hash_;
        m["config"] = cfg.canonical();
        m["threads"] = threads;
        m["seeds"] = {{"sim", cfg.sim.seed}};
        m["started_at"] = started_;
        m["finished_at"] = utc_now();
        m["exit_code"] = exit_code;
        for (auto& [k, v] : extra.items()) m[k] = v;
        const std::string manifest = name("manifest.json");
        m["files"] = files_;
        m["files"].push_back(manifest);
        std::ofstream os(fs::path(dir_) / manifest, std::ios::binary);
        os << m.dump(2) << '\n';
        if (!os) throw std::runtime_error("cannot write manifest");
        files_.push_back(manifest);
        return {exit_code, dir_, files_};
    }

private:
    std::string command_;
    std::string dir_;
    std::string hash_;
    std::string started_;
    std::vector<std::string> files_;
};

int threads_of(const RunConfig& cfg, const RunOptions& opt) {
    const int t = opt.threads ? *opt.threads : cfg.threads;
    if (t < 1) throw ConfigError(cfg.origin, 0, "threads", "must be >= 1");
    return t;
}

SolverConfig solver_of(const RunConfig& cfg, int threads) {
    SolverConfig s = cfg.solver;
    s.threads = threads;
    return s;
}

SimConfig sim_of(const RunConfig& cfg, int threads) {
    SimConfig s = effective_sim(cfg);
    s.threads = threads;
    return s;
}

std::ostream& say(std::ostream& log, const RunOptions& opt) {
    static std::ostream null(nullptr);
    return opt.quiet ? null : log;
}

std::string estimate_json(const ObjectiveEstimate& e, const State& z0, const SimConfig& sim) {
    nlohmann::ordered_json j;
    j["mean"] = e.mean;
    j["stderr"] = e.std_err;
    j["n"] = e.n;
    j["truncation_fraction"] = e.truncation_fraction;
    j["ruin_fraction"] = e.ruin_fraction;
    j["penalty_mean"] = e.penalty_mean;
    j["exit_time_mean"] = e.exit_time_mean;
    j["start"] = {z0.x, z0.y1, z0.y2};
    j["dt"] = sim.dt;
    j["t_max"] = sim.t_max;
    j["seed"] = sim.seed;
    return j.dump(2) + "\n";
}

// Report JSON without the wall clock, so equal inputs give equal bytes.
std::string deterministic_report(const SolveReport& r) {
    auto j = nlohmann::ordered_json::parse(report_json(r));
    j.erase("wall_seconds");
    return j.dump(2) + "\n";
}

}  // namespace

std::string resolve_out_dir(const RunConfig& cfg, const RunOptions& opt) {
    if (opt.out_dir) return *opt.out_dir;
    if (const char* env = std::getenv("HWM_OUT_DIR"); env && *env) return env;
    return cfg.out_dir;
}

RunOutcome run_solve(const RunConfig& cfg, const RunOptions& opt, std::ostream& log) {
    const int threads = threads_of(cfg, opt);
    const Grid grid = make_grid(cfg);
    const SolveResult res = howard_solve(cfg.market, grid, solver_of(cfg, threads));
    Artifacts art(cfg, opt, "solve");

    std::ostringstream field, slice;
    write_field_csv(field, grid, res.field, res.policy);
    write_slice_csv(slice, grid, res.field, cfg.slice_y2_index);
    art.write("field.csv", field.str());
    art.write("slice.csv", slice.str());
    art.write("report.json", deterministic_report(res.report));

    const int code = res.report.converged ? kExitOk : kExitNotConverged;
    say(log, opt) << "solve: " << (res.report.converged ? "converged" : "NOT converged") << " after "
                  << res.report.iterations << " iterations, residual "
                  << (res.report.residual_history.empty() ? 0.0 : res.report.residual_history.back())
                  << ", " << res.report.wall_seconds << " s\n";
    nlohmann::ordered_json extra;
    extra["wall_seconds"] = res.report.wall_seconds;
    return art.finish(cfg, threads, code, extra);
}

RunOutcome run_simulate(const RunConfig& cfg, const RunOptions& opt, std::ostream& log) {
    const int threads = threads_of(cfg, opt);
    const SimConfig sim = sim_of(cfg, threads);
    const DerivedParams d = validate_params(cfg.market);
    const State z0 = effective_start(cfg);

    Policy policy;
    nlohmann::ordered_json extra = nlohmann::ordered_json::object();
    if (cfg.policy == PolicySource::Constant) {
        if (!cfg.market.control_set.contains(cfg.pi, 1e-12))
            throw ConfigError(cfg.origin, cfg.key_lines.count("sim.pi") ? cfg.key_lines.at("sim.pi") : 0,
                              "sim.pi", "outside the control set");
        if (!cfg.market.ambiguity_set.contains(cfg.theta))
            throw ConfigError(cfg.origin, cfg.key_lines.count("sim.theta") ? cfg.key_lines.at("sim.theta") : 0,
                              "sim.theta", "outside the ambiguity set");
        policy = Policy::constant(cfg.pi, cfg.theta);
    } else {
        std::ifstream in(cfg.policy_file, std::ios::binary);
        if (!in) throw std::runtime_error("cannot open policy file '" + cfg.policy_file + "'");
        const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        std::istringstream is(text);
        const LoadedField lf = read_field_csv(is);
        const double scale = std::max(1.0, cfg.market.safe_level());
        if (std::abs(lf.grid.xs.front() - cfg.market.R) > 1e-9 * scale ||
            std::abs(lf.grid.xs.back() - cfg.market.safe_level()) > 1e-9 * scale)
            throw std::runtime_error("policy file x-range does not match [R, c/r] of the config");
        policy = lf.policy.to_policy(cfg.market);
        extra["policy_file"] = cfg.policy_file;
        extra["policy_sha256"] = sha256_hex(text);
    }

    const ObjectiveEstimate e = estimate_objective(cfg.market, d, policy, sim, z0);
    Artifacts art(cfg, opt, "simulate");
    art.write("estimate.json", estimate_json(e, z0, sim));
    if (sim.store_trajectories) {
        for (int k = 0; k < cfg.trajectory_paths && k < sim.n_paths; ++k) {
            auto rng = path_engine(sim.seed, static_cast<std::uint64_t>(k));
            const PathResult pr = simulate_path(cfg.market, d, policy, sim, z0, rng);
            std::ostringstream os;
            write_trajectory_csv(os, pr.trajectory);
            char suffix[32];
            std::snprintf(suffix, sizeof suffix, "path-%04d.csv", k);
            art.write(suffix, os.str());
        }
    }
    say(log, opt) << "simulate: mean " << e.mean << " +- " << e.std_err << " over " << e.n
                  << " paths, truncated fraction " << e.truncation_fraction << '\n';
    return art.finish(cfg, threads, kExitOk, extra);
}

RunOutcome run_verify(const RunConfig& cfg, const RunOptions& opt, std::ostream& log) {
    const int threads = threads_of(cfg, opt);
    const Grid grid = make_grid(cfg);
    const VerifyReport rep = run_suite(cfg.market, grid, solver_of(cfg, threads), sim_of(cfg, threads), cfg.verify);
    Artifacts art(cfg, opt, "verify");
    art.write("report.json", rep.json());
    art.write("summary.txt", rep.table());
    say(log, opt) << rep.table();
    if (!rep.passed()) {
        std::ostream& os = say(log, opt);
        os << "failing checks:";
        for (const auto& n : rep.failed_names()) os << ' ' << n;
        os << '\n';
    }
    nlohmann::ordered_json extra;
    extra["suite"] = to_string(cfg.verify.suite);
    extra["failed_checks"] = rep.failed_names();
    return art.finish(cfg, threads, rep.passed() ? kExitOk : kExitVerifyFailed, extra);
}

RunOutcome run_sweep(const RunConfig& cfg, const RunOptions& opt, std::ostream& log) {
    if (cfg.sweep.values.empty()) {
        const auto it = cfg.key_lines.find("sweep.values");
        throw ConfigError(cfg.origin, it == cfg.key_lines.end() ? 0 : it->second, "sweep.values",
                          "sweep needs at least one value");
    }
    const int threads = threads_of(cfg, opt);
    const SolverConfig scfg = solver_of(cfg, threads);
    const Grid grid = make_grid(cfg);
    const std::vector<State> probes = cfg.sweep.probes.empty() ? default_probes(cfg.market, grid) : cfg.sweep.probes;
    for (const auto& z : probes)
        if (z.x < grid.xs.front() || z.x > grid.xs.back() || z.y1 < 0 || z.y1 > grid.y1_max() ||
            z.y2 < 0 || z.y2 > grid.y2_max())
            throw ConfigError(cfg.origin, cfg.key_lines.count("sweep.probes") ? cfg.key_lines.at("sweep.probes") : 0,
                              "sweep.probes", "probe outside the grid box");

    struct Row {
        std::string axis;
        double value;
        std::vector<double> probe;
        SolveReport report;
        std::string flag;
    };
    std::vector<Row> rows;
    bool all_converged = true;
    auto solve_row = [&](const std::string& axis, double value, const MarketParams& p) {
        validate_params(p);
        const SolveResult r = howard_solve(p, grid, scfg);
        Row row{axis, value, {}, r.report, ""};
        for (const auto& z : probes) row.probe.push_back(interpolate(grid, r.field.values, z));
        all_converged = all_converged && r.report.converged;
        say(log, opt) << "sweep: " << axis << " = " << value << (r.report.converged ? "" : " (NOT converged)") << '\n';
        rows.push_back(std::move(row));
    };
    for (double v : cfg.sweep.values) {
        MarketParams p = cfg.market;
        switch (cfg.sweep.axis) {
            case SweepAxis::Epsilon: p.epsilon = v; break;
            case SweepAxis::Q: p.q = Vec2::Constant(v); break;
            case SweepAxis::LambdaD: p.lambda_d = v; break;
        }
        solve_row(to_string(cfg.sweep.axis), v, p);
    }
    if (cfg.sweep.axis == SweepAxis::Epsilon) {
        // Flag each row against the next smaller epsilon.
        std::vector<std::size_t> order(rows.size());
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return rows[a].value < rows[b].value; });
        for (std::size_t k = 0; k < order.size(); ++k) {
            Row& row = rows[order[k]];
            bool ok = true;
            if (k > 0)
                for (std::size_t i = 0; i < probes.size(); ++i)
                    ok = ok && row.probe[i] >= rows[order[k - 1]].probe[i] - cfg.verify.tol.epsilon_slack;
            row.flag = ok ? "1" : "0";
        }
    }
    if (cfg.sweep.zero_ambiguity_baseline) {
        MarketParams p = cfg.market;
        p.ambiguity_set = AmbiguitySet::zero();
        solve_row("zero_ambiguity", 0.0, p);
    }

    std::ostringstream csv;
    csv << std::setprecision(17) << "axis,value";
    for (std::size_t i = 0; i < probes.size(); ++i) csv << ",probe" << i + 1;
    csv << ",iterations,converged,residual_interior,residual_b1,residual_b2,monotone_eps\n";
    for (const auto& row : rows) {
        csv << row.axis << ',' << row.value;
        for (double v : row.probe) csv << ',' << v;
        csv << ',' << row.report.iterations << ',' << (row.report.converged ? 1 : 0) << ','
            << row.report.residual_interior << ',' << row.report.residual_b1 << ','
            << row.report.residual_b2 << ',' << row.flag << '\n';
    }
    Artifacts art(cfg, opt, "sweep");
    art.write("sweep.csv", csv.str());
    return art.finish(cfg, threads, all_converged ? kExitOk : kExitNotConverged);
}

int run_command(const std::string& command, const std::string& config_path, const RunOptions& opt,
                std::ostream& out, std::ostream& err) {
    try {
        const RunConfig cfg = load_config(config_path);
        RunOutcome o;
        if (command == "solve") o = run_solve(cfg, opt, out);
        else if (command == "simulate") o = run_simulate(cfg, opt, out);
        else if (command == "verify") o = run_verify(cfg, opt, out);
        else if (command == "sweep") o = run_sweep(cfg, opt, out);
        else {
            err << "error: unknown command '" << command << "'\n";
            return kExitConfig;
        }
        if (!opt.quiet)
            for (const auto& f : o.files) out << "wrote " << (fs::path(o.out_dir) / f).string() << '\n';
        return o.exit_code;
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << '\n';
    } catch (const ValidationError& e) {
        err << "config error: " << config_path << ": '" << e.field() << "': " << e.message() << '\n';
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
    }
    return kExitConfig;
}

}  // namespace hwm
