#include "hwm/config.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <iomanip>
#include <set>
#include <sstream>

namespace hwm {

ConfigError::ConfigError(const std::string& origin, int line, const std::string& key,
                         const std::string& what)
    : std::runtime_error(origin + (line > 0 ? ":" + std::to_string(line) : std::string()) + ": " +
                         (key.empty() ? std::string() : "'" + key + "': ") + what),
      line_(line),
      key_(key) {}

std::string to_string(SweepAxis a) {
    switch (a) {
        case SweepAxis::Epsilon: return "epsilon";
        case SweepAxis::Q: return "q";
        case SweepAxis::LambdaD: return "lambda_d";
    }
    return "unknown";
}

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    std::istringstream is(s);
    while (std::getline(is, cur, sep)) out.push_back(trim(cur));
    if (!s.empty() && s.back() == sep) out.emplace_back();
    return out;
}

double to_double(const std::string& s) {
    const std::string t = trim(s);
    double v = 0.0;
    const auto res = std::from_chars(t.data(), t.data() + t.size(), v);
    if (t.empty() || res.ec != std::errc() || res.ptr != t.data() + t.size())
        throw std::invalid_argument("expected a number, got '" + t + "'");
    if (!std::isfinite(v)) throw std::invalid_argument("non-finite number '" + t + "'");
    return v;
}

template <class Int>
Int to_int(const std::string& s) {
    const std::string t = trim(s);
    Int v = 0;
    const auto res = std::from_chars(t.data(), t.data() + t.size(), v);
    if (t.empty() || res.ec != std::errc() || res.ptr != t.data() + t.size())
        throw std::invalid_argument("expected an integer, got '" + t + "'");
    return v;
}

bool to_bool(const std::string& s) {
    if (s == "true" || s == "1" || s == "yes") return true;
    if (s == "false" || s == "0" || s == "no") return false;
    throw std::invalid_argument("expected true or false, got '" + s + "'");
}

std::vector<double> to_list(const std::string& s) {
    std::vector<double> out;
    if (trim(s).empty()) return out;
    for (const auto& part : split(s, ',')) out.push_back(to_double(part));
    return out;
}

Vec2 to_vec2(const std::string& s) {
    const auto v = to_list(s);
    if (v.size() != 2) throw std::invalid_argument("expected 2 comma-separated numbers");
    return {v[0], v[1]};
}

Mat2 to_mat2(const std::string& s) {
    const auto v = to_list(s);
    if (v.size() != 4) throw std::invalid_argument("expected 4 comma-separated numbers (row-major)");
    Mat2 m;
    m << v[0], v[1], v[2], v[3];
    return m;
}

std::vector<State> to_states(const std::string& s) {
    std::vector<State> out;
    if (trim(s).empty()) return out;
    for (const auto& part : split(s, ';')) {
        const auto v = to_list(part);
        if (v.size() != 3) throw std::invalid_argument("each state needs x, y1, y2");
        out.push_back({v[0], v[1], v[2]});
    }
    return out;
}

std::vector<Vec2> to_points(const std::string& s) {
    std::vector<Vec2> out;
    for (const auto& part : split(s, ';')) out.push_back(to_vec2(part));
    return out;
}

std::string num(double v) {
    std::ostringstream os;
    os << std::setprecision(17) << v;
    return os.str();
}

std::string vec(const Vec2& v) { return num(v[0]) + ", " + num(v[1]); }

std::string states(const std::vector<State>& zs) {
    std::string out;
    for (std::size_t k = 0; k < zs.size(); ++k) {
        if (k) out += "; ";
        out += num(zs[k].x) + ", " + num(zs[k].y1) + ", " + num(zs[k].y2);
    }
    return out;
}

std::string list(const std::vector<double>& v) {
    std::string out;
    for (std::size_t k = 0; k < v.size(); ++k) out += (k ? ", " : "") + num(v[k]);
    return out;
}

// Raw set descriptions, resolved into ControlSet/AmbiguitySet after parsing
// because the lattice size lives in [solver].
struct SetSpec {
    std::string control = "box";
    Vec2 pi_lo{-5.0, -5.0};
    Vec2 pi_hi{5.0, 5.0};
    std::vector<Vec2> pi_points;
    std::string ambiguity = "unconstrained";
    double theta_radius = 1.0;
    Vec2 theta_lo{-1.0, -1.0};
    Vec2 theta_hi{1.0, 1.0};
};

using Setter = std::function<void(RunConfig&, SetSpec&, const std::string&)>;

struct KeyDef {
    const char* name;  // "section.key"
    bool required;
    Setter set;
};

const std::vector<KeyDef>& key_table() {
    static const std::vector<KeyDef> table = {
        {"market.r", true, [](RunConfig& c, SetSpec&, const std::string& v) { c.market.r = to_double(v); }},
        {"market.c", true, [](RunConfig& c, SetSpec&, const std::string& v) { c.market.c = to_double(v); }},
        {"market.R", true, [](RunConfig& c, SetSpec&, const std::string& v) { c.market.R = to_double(v); }},
        {"market.lambda_d", true, [](RunConfig& c, SetSpec&, const std::string& v) { c.market.lambda_d = to_double(v); }},
        {"market.mu", true, [](RunConfig& c, SetSpec&, const std::string& v) { c.market.mu = to_vec2(v); }},
        {"market.sigma", true, [](RunConfig& c, SetSpec&, const std::string& v) { c.market.sigma = to_mat2(v); }},
        {"market.mu_b", true, [](RunConfig& c, SetSpec&, const std::string& v) { c.market.mu_b = to_vec2(v); }},
        {"market.sigma_b", true, [](RunConfig& c, SetSpec&, const std::string& v) { c.market.sigma_b = to_mat2(v); }},
        {"market.q", true, [](RunConfig& c, SetSpec&, const std::string& v) { c.market.q = to_vec2(v); }},
        {"market.epsilon", true, [](RunConfig& c, SetSpec&, const std::string& v) { c.market.epsilon = to_double(v); }},
        {"market.control_set", false, [](RunConfig&, SetSpec& s, const std::string& v) {
             if (v != "box" && v != "finite") throw std::invalid_argument("expected box or finite");
             s.control = v;
         }},
        {"market.pi_lo", false, [](RunConfig&, SetSpec& s, const std::string& v) { s.pi_lo = to_vec2(v); }},
        {"market.pi_hi", false, [](RunConfig&, SetSpec& s, const std::string& v) { s.pi_hi = to_vec2(v); }},
        {"market.pi_points", false, [](RunConfig&, SetSpec& s, const std::string& v) { s.pi_points = to_points(v); }},
        {"market.ambiguity_set", false, [](RunConfig&, SetSpec& s, const std::string& v) {
             if (v != "unconstrained" && v != "zero" && v != "ball" && v != "box")
                 throw std::invalid_argument("expected unconstrained, zero, ball or box");
             s.ambiguity = v;
         }},
        {"market.theta_radius", false, [](RunConfig&, SetSpec& s, const std::string& v) { s.theta_radius = to_double(v); }},
        {"market.theta_lo", false, [](RunConfig&, SetSpec& s, const std::string& v) { s.theta_lo = to_vec2(v); }},
        {"market.theta_hi", false, [](RunConfig&, SetSpec& s, const std::string& v) { s.theta_hi = to_vec2(v); }},

        {"grid.nx", true, [](RunConfig& c, SetSpec&, const std::string& v) { c.nx = to_int<int>(v); }},
        {"grid.ny1", true, [](RunConfig& c, SetSpec&, const std::string& v) { c.ny1 = to_int<int>(v); }},
        {"grid.ny2", true, [](RunConfig& c, SetSpec&, const std::string& v) { c.ny2 = to_int<int>(v); }},
        {"grid.y_max", false, [](RunConfig& c, SetSpec&, const std::string& v) {
             if (v == "auto") c.y_max.reset();
             else c.y_max = to_double(v);
         }},

        {"solver.tol", false, [](RunConfig& c, SetSpec&, const std::string& v) { c.solver.tol = to_double(v); }},
        {"solver.max_iterations", false, [](RunConfig& c, SetSpec&, const std::string& v) { c.solver.max_iterations = to_int<int>(v); }},
        {"solver.linear_solver", false, [](RunConfig& c, SetSpec&, const std::string& v) {
             try {
                 c.solver.linear_solver = parse_linear_solver(v);
             } catch (const ValidationError& e) {
                 throw std::invalid_argument(e.message());
             }
         }},
        {"solver.linear_tol", false, [](RunConfig& c, SetSpec&, const std::string& v) { c.solver.linear_tol = to_double(v); }},
        {"solver.max_sweeps", false, [](RunConfig& c, SetSpec&, const std::string& v) { c.solver.max_sweeps = to_int<int>(v); }},
        {"solver.relaxation", false, [](RunConfig& c, SetSpec&, const std::string& v) { c.solver.relaxation = to_double(v); }},
        {"solver.pi_lattice", false, [](RunConfig& c, SetSpec&, const std::string& v) { c.solver.pi_lattice = to_int<int>(v); }},
        {"solver.monotone_augmentation", false, [](RunConfig& c, SetSpec&, const std::string& v) { c.solver.monotone_augmentation = to_bool(v); }},

        {"sim.dt", false, [](RunConfig& c, SetSpec&, const std::string& v) { c.sim.dt = to_double(v); }},
        {"sim.t_max", false, [](RunConfig& c, SetSpec&, const std::string& v) {
             if (v == "auto") {
                 c.t_max_auto = true;
             } else {
                 c.t_max_auto = false;
                 c.sim.t_max = to_double(v);
             }
         }},
        {"sim.truncation_budget", false, [](RunConfig& c, SetSpec&, const std::string& v) { c.truncation_budget = to_double(v); }},
        {"sim.n_paths", false, [](RunConfig& c, SetSpec&, const std::string& v) { c.sim.n_paths = to_int<std::int64_t>(v); }},
        {"sim.seed", false, [](RunConfig& c, SetSpec&, const std::string& v) { c.sim.seed = to_int<std::uint64_t>(v); }},
        {"sim.start", false, [](RunConfig& c, SetSpec&, const std::string& v) {
             const auto zs = to_states(v);
             if (zs.size() != 1) throw std::invalid_argument("expected one state x, y1, y2");
             c.start = zs[0];
             c.start_set = true;
         }},
        {"sim.policy", false, [](RunConfig& c, SetSpec&, const std::string& v) {
             if (v == "constant") c.policy = PolicySource::Constant;
             else if (v == "field") c.policy = PolicySource::Field;
             else throw std::invalid_argument("expected constant or field");
         }},
        {"sim.pi", false, [](RunConfig& c, SetSpec&, const std::string& v) { c.pi = to_vec2(v); }},
        {"sim.theta", false, [](RunConfig& c, SetSpec&, const std::string& v) { c.theta = to_vec2(v); }},
        {"sim.policy_file", false, [](RunConfig& c, SetSpec&, const std::string& v) { c.policy_file = v; }},
        {"sim.store_trajectories", false, [](RunConfig& c, SetSpec&, const std::string& v) { c.sim.store_trajectories = to_bool(v); }},
        {"sim.trajectory_paths", false, [](RunConfig& c, SetSpec&, const std::string& v) { c.trajectory_paths = to_int<int>(v); }},

        {"verify.suite", false, [](RunConfig& c, SetSpec&, const std::string& v) {
             try {
                 c.verify.suite = parse_suite(v);
             } catch (const ValidationError& e) {
                 throw std::invalid_argument(e.message());
             }
         }},
        {"verify.probes", false, [](RunConfig& c, SetSpec&, const std::string& v) { c.verify.probes = to_states(v); }},
        {"verify.mc_paths", false, [](RunConfig& c, SetSpec&, const std::string& v) { c.verify.mc_paths = to_int<std::int64_t>(v); }},
        {"verify.watermark_paths", false, [](RunConfig& c, SetSpec&, const std::string& v) { c.verify.watermark_paths = to_int<std::int64_t>(v); }},
        {"verify.epsilons", false, [](RunConfig& c, SetSpec&, const std::string& v) { c.verify.epsilons = to_list(v); }},
        {"verify.sandwich_tol", false, [](RunConfig& c, SetSpec&, const std::string& v) { c.verify.tol.sandwich = to_double(v); }},
        {"verify.frictionless_tol", false, [](RunConfig& c, SetSpec&, const std::string& v) { c.verify.tol.frictionless_error = to_double(v); }},
        {"verify.order_min", false, [](RunConfig& c, SetSpec&, const std::string& v) { c.verify.tol.order_min = to_double(v); }},
        {"verify.order_max", false, [](RunConfig& c, SetSpec&, const std::string& v) { c.verify.tol.order_max = to_double(v); }},
        {"verify.y_variation_tol", false, [](RunConfig& c, SetSpec&, const std::string& v) { c.verify.tol.y_variation = to_double(v); }},
        {"verify.noinvest_tol", false, [](RunConfig& c, SetSpec&, const std::string& v) { c.verify.tol.noinvest_error = to_double(v); }},
        {"verify.slope_tol", false, [](RunConfig& c, SetSpec&, const std::string& v) { c.verify.tol.slope_rel = to_double(v); }},
        {"verify.c_disc", false, [](RunConfig& c, SetSpec&, const std::string& v) { c.verify.tol.c_disc = to_double(v); }},
        {"verify.truncation_tol", false, [](RunConfig& c, SetSpec&, const std::string& v) { c.verify.tol.truncation = to_double(v); }},
        {"verify.epsilon_slack", false, [](RunConfig& c, SetSpec&, const std::string& v) { c.verify.tol.epsilon_slack = to_double(v); }},
        {"verify.epsilon_limit_tol", false, [](RunConfig& c, SetSpec&, const std::string& v) { c.verify.tol.epsilon_limit = to_double(v); }},
        {"verify.watermark_tol", false, [](RunConfig& c, SetSpec&, const std::string& v) { c.verify.tol.watermark = to_double(v); }},
        {"verify.mc_sigmas", false, [](RunConfig& c, SetSpec&, const std::string& v) { c.verify.tol.mc_sigmas = to_double(v); }},

        {"sweep.axis", false, [](RunConfig& c, SetSpec&, const std::string& v) {
             if (v == "epsilon") c.sweep.axis = SweepAxis::Epsilon;
             else if (v == "q") c.sweep.axis = SweepAxis::Q;
             else if (v == "lambda_d") c.sweep.axis = SweepAxis::LambdaD;
             else throw std::invalid_argument("expected epsilon, q or lambda_d");
         }},
        {"sweep.values", false, [](RunConfig& c, SetSpec&, const std::string& v) { c.sweep.values = to_list(v); }},
        {"sweep.probes", false, [](RunConfig& c, SetSpec&, const std::string& v) { c.sweep.probes = to_states(v); }},
        {"sweep.zero_ambiguity_baseline", false, [](RunConfig& c, SetSpec&, const std::string& v) { c.sweep.zero_ambiguity_baseline = to_bool(v); }},

        {"run.threads", false, [](RunConfig& c, SetSpec&, const std::string& v) { c.threads = to_int<int>(v); }},
        {"run.out_dir", false, [](RunConfig& c, SetSpec&, const std::string& v) { c.out_dir = v; }},
        {"run.slice_y2_index", false, [](RunConfig& c, SetSpec&, const std::string& v) { c.slice_y2_index = to_int<int>(v); }},
    };
    return table;
}

const std::set<std::string>& sections() {
    static const std::set<std::string> s{"market", "grid", "solver", "sim", "verify", "sweep", "run"};
    return s;
}

// Validation-error field names mapped to the config key that feeds them.
std::string key_for_field(const std::string& field) {
    static const std::map<std::string, std::string> alias{
        {"control_set", "market.control_set"}, {"theta_box", "market.theta_lo"},
        {"pi_lattice", "solver.pi_lattice"},   {"x0", "sim.start"},
        {"x", "sim.start"},                    {"probes", "verify.probes"},
        {"epsilons", "verify.epsilons"},       {"suite", "verify.suite"},
    };
    if (auto it = alias.find(field); it != alias.end()) return it->second;
    for (const auto& k : key_table()) {
        const std::string name = k.name;
        if (name.substr(name.find('.') + 1) == field) return name;
    }
    return {};
}

}  // namespace

RunConfig parse_config(std::istream& in, const std::string& origin) {
    RunConfig cfg;
    cfg.origin = origin;
    cfg.solver.pi_lattice = 11;
    SetSpec sets;
    std::map<std::string, const KeyDef*> defs;
    for (const auto& k : key_table()) defs[k.name] = &k;

    std::string section;
    std::string line;
    int lineno = 0;
    bool schema_seen = false;
    while (std::getline(in, line)) {
        ++lineno;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') throw ConfigError(origin, lineno, "", "malformed section header");
            section = trim(line.substr(1, line.size() - 2));
            if (!sections().count(section))
                throw ConfigError(origin, lineno, section, "unknown section");
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError(origin, lineno, "", "expected key = value");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (section.empty()) {
            if (key != "schema") throw ConfigError(origin, lineno, key, "only 'schema' may precede the first section");
            if (value != kSchemaVersion)
                throw ConfigError(origin, lineno, key, "unsupported schema '" + value + "', expected " + kSchemaVersion);
            schema_seen = true;
            cfg.key_lines["schema"] = lineno;
            continue;
        }
        const std::string full = section + "." + key;
        const auto it = defs.find(full);
        if (it == defs.end()) throw ConfigError(origin, lineno, full, "unknown key");
        if (cfg.key_lines.count(full)) throw ConfigError(origin, lineno, full, "duplicate key");
        cfg.key_lines[full] = lineno;
        try {
            it->second->set(cfg, sets, value);
        } catch (const std::invalid_argument& e) {
            throw ConfigError(origin, lineno, full, e.what());
        } catch (const std::out_of_range&) {
            throw ConfigError(origin, lineno, full, "value out of range");
        }
    }
    if (!schema_seen) throw ConfigError(origin, 0, "schema", std::string("missing; expected 'schema = ") + kSchemaVersion + "'");
    for (const auto& k : key_table())
        if (k.required && !cfg.key_lines.count(k.name))
            throw ConfigError(origin, 0, k.name, "required key missing");

    auto at = [&](const std::string& key) {
        const auto it = cfg.key_lines.find(key);
        return it == cfg.key_lines.end() ? 0 : it->second;
    };
    try {
        if (sets.control == "box") {
            if (cfg.key_lines.count("market.pi_points"))
                throw ConfigError(origin, at("market.pi_points"), "market.pi_points", "only valid with control_set = finite");
            cfg.market.control_set = ControlSet::box(sets.pi_lo, sets.pi_hi, cfg.solver.pi_lattice);
        } else {
            if (sets.pi_points.empty())
                throw ConfigError(origin, at("market.control_set"), "market.pi_points", "required with control_set = finite");
            cfg.market.control_set = ControlSet::finite(sets.pi_points);
            cfg.solver.pi_lattice = 0;
        }
        if (sets.ambiguity == "zero") cfg.market.ambiguity_set = AmbiguitySet::zero();
        else if (sets.ambiguity == "unconstrained") cfg.market.ambiguity_set = AmbiguitySet::unconstrained();
        else if (sets.ambiguity == "ball") cfg.market.ambiguity_set = AmbiguitySet::ball(sets.theta_radius);
        else cfg.market.ambiguity_set = AmbiguitySet::box(sets.theta_lo, sets.theta_hi);
    } catch (const ValidationError& e) {
        const std::string key = key_for_field(e.field());
        throw ConfigError(origin, at(key), key.empty() ? e.field() : key, e.message());
    }
    validate_run_config(cfg);
    return cfg;
}

RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError(path, 0, "", "cannot open config file");
    return parse_config(in, path);
}

void validate_run_config(const RunConfig& cfg) {
    auto fail = [&](const std::string& key, const std::string& what) {
        const auto it = cfg.key_lines.find(key);
        throw ConfigError(cfg.origin, it == cfg.key_lines.end() ? 0 : it->second, key, what);
    };
    try {
        validate_params(cfg.market);
        validate_solver_config(cfg.solver);
        make_grid(cfg);
        validate_sim_config(effective_sim(cfg));
    } catch (const ValidationError& e) {
        const std::string key = key_for_field(e.field());
        fail(key.empty() ? e.field() : key, e.message());
    }
    if (cfg.y_max && !(*cfg.y_max > 0)) fail("grid.y_max", "must be 'auto' or > 0");
    if (!(cfg.truncation_budget > 0) || cfg.truncation_budget >= 1)
        fail("sim.truncation_budget", "must lie in (0, 1)");
    if (cfg.threads < 1) fail("run.threads", "must be >= 1");
    if (cfg.trajectory_paths < 0) fail("sim.trajectory_paths", "must be >= 0");
    if (cfg.slice_y2_index < 0 || cfg.slice_y2_index >= cfg.ny2)
        fail("run.slice_y2_index", "outside [0, ny2)");
    if (cfg.start_set) {
        const State& z = cfg.start;
        if (z.x < cfg.market.R || z.x > cfg.market.safe_level() || z.y1 < 0 || z.y2 < 0)
            fail("sim.start", "needs R <= x <= c/r and y >= 0");
    }
    if (cfg.policy == PolicySource::Field && cfg.policy_file.empty())
        fail("sim.policy_file", "required with policy = field");
    if (cfg.verify.mc_paths < 1) fail("verify.mc_paths", "must be >= 1");
    if (cfg.verify.watermark_paths < 1) fail("verify.watermark_paths", "must be >= 1");
    if (cfg.verify.epsilons.empty()) fail("verify.epsilons", "must not be empty");
    for (double e : cfg.verify.epsilons)
        if (!(e > 0)) fail("verify.epsilons", "entries must be > 0");
    const VerifyTolerances& t = cfg.verify.tol;
    for (const auto& [key, v] : std::vector<std::pair<std::string, double>>{
             {"verify.sandwich_tol", t.sandwich},        {"verify.frictionless_tol", t.frictionless_error},
             {"verify.y_variation_tol", t.y_variation},  {"verify.noinvest_tol", t.noinvest_error},
             {"verify.slope_tol", t.slope_rel},          {"verify.c_disc", t.c_disc},
             {"verify.truncation_tol", t.truncation},    {"verify.epsilon_slack", t.epsilon_slack},
             {"verify.epsilon_limit_tol", t.epsilon_limit}, {"verify.watermark_tol", t.watermark},
             {"verify.mc_sigmas", t.mc_sigmas}})
        if (!(v >= 0)) fail(key, "must be >= 0");
    if (t.order_min > t.order_max) fail("verify.order_min", "exceeds verify.order_max");
    if (cfg.sweep.axis == SweepAxis::Epsilon || cfg.sweep.axis == SweepAxis::LambdaD)
        for (double v : cfg.sweep.values)
            if (!(v > 0)) fail("sweep.values", "entries must be > 0 on this axis");
    if (cfg.sweep.axis == SweepAxis::Q)
        for (double v : cfg.sweep.values)
            if (!(v >= 0)) fail("sweep.values", "entries must be >= 0 on this axis");
}

Grid make_grid(const RunConfig& cfg) {
    const double y = cfg.y_max ? *cfg.y_max : default_y_max(cfg.market);
    return build_grid(cfg.market, cfg.nx, cfg.ny1, cfg.ny2, y);
}

SimConfig effective_sim(const RunConfig& cfg) {
    SimConfig s = cfg.sim;
    s.threads = cfg.threads;
    if (cfg.t_max_auto) s.t_max = horizon_for_budget(cfg.market.lambda_d, cfg.truncation_budget);
    return s;
}

State effective_start(const RunConfig& cfg) {
    if (cfg.start_set) return cfg.start;
    return {0.5 * (cfg.market.R + cfg.market.safe_level()), 0.0, 0.0};
}

std::string RunConfig::canonical() const {
    std::ostringstream os;
    const MarketParams& m = market;
    os << "schema = " << schema << "\n\n[market]\n";
    os << "r = " << num(m.r) << "\nc = " << num(m.c) << "\nR = " << num(m.R)
       << "\nlambda_d = " << num(m.lambda_d) << "\nmu = " << vec(m.mu)
       << "\nsigma = " << num(m.sigma(0, 0)) << ", " << num(m.sigma(0, 1)) << ", "
       << num(m.sigma(1, 0)) << ", " << num(m.sigma(1, 1)) << "\nmu_b = " << vec(m.mu_b)
       << "\nsigma_b = " << num(m.sigma_b(0, 0)) << ", " << num(m.sigma_b(0, 1)) << ", "
       << num(m.sigma_b(1, 0)) << ", " << num(m.sigma_b(1, 1)) << "\nq = " << vec(m.q)
       << "\nepsilon = " << num(m.epsilon) << '\n';
    const ControlSet& cs = m.control_set;
    if (cs.kind() == ControlSet::Kind::Box) {
        os << "control_set = box\npi_lo = " << vec(cs.lo()) << "\npi_hi = " << vec(cs.hi()) << '\n';
    } else {
        os << "control_set = finite\npi_points = ";
        for (std::size_t k = 0; k < cs.candidates().size(); ++k)
            os << (k ? "; " : "") << vec(cs.candidates()[k]);
        os << '\n';
    }
    const AmbiguitySet& as = m.ambiguity_set;
    switch (as.kind()) {
        case AmbiguitySet::Kind::Zero: os << "ambiguity_set = zero\n"; break;
        case AmbiguitySet::Kind::Unconstrained: os << "ambiguity_set = unconstrained\n"; break;
        case AmbiguitySet::Kind::Ball:
            os << "ambiguity_set = ball\ntheta_radius = " << num(as.radius()) << '\n';
            break;
        case AmbiguitySet::Kind::Box:
            os << "ambiguity_set = box\ntheta_lo = " << vec(as.lo()) << "\ntheta_hi = " << vec(as.hi()) << '\n';
            break;
    }
    os << "\n[grid]\nnx = " << nx << "\nny1 = " << ny1 << "\nny2 = " << ny2
       << "\ny_max = " << (y_max ? num(*y_max) : std::string("auto")) << '\n';
    os << "\n[solver]\ntol = " << num(solver.tol) << "\nmax_iterations = " << solver.max_iterations
       << "\nlinear_solver = " << to_string(solver.linear_solver)
       << "\nlinear_tol = " << num(solver.linear_tol) << "\nmax_sweeps = " << solver.max_sweeps
       << "\nrelaxation = " << num(solver.relaxation);
    if (cs.kind() == ControlSet::Kind::Box) os << "\npi_lattice = " << solver.pi_lattice;
    os << "\nmonotone_augmentation = " << (solver.monotone_augmentation ? "true" : "false") << '\n';
    os << "\n[sim]\ndt = " << num(sim.dt) << "\nt_max = " << (t_max_auto ? std::string("auto") : num(sim.t_max))
       << "\ntruncation_budget = " << num(truncation_budget) << "\nn_paths = " << sim.n_paths
       << "\nseed = " << sim.seed;
    if (start_set) os << "\nstart = " << states({start});
    os << "\npolicy = " << (policy == PolicySource::Constant ? "constant" : "field")
       << "\npi = " << vec(pi) << "\ntheta = " << vec(theta);
    if (!policy_file.empty()) os << "\npolicy_file = " << policy_file;
    os << "\nstore_trajectories = " << (sim.store_trajectories ? "true" : "false")
       << "\ntrajectory_paths = " << trajectory_paths << '\n';
    const VerifyTolerances& t = verify.tol;
    os << "\n[verify]\nsuite = " << to_string(verify.suite);
    if (!verify.probes.empty()) os << "\nprobes = " << states(verify.probes);
    os << "\nmc_paths = " << verify.mc_paths << "\nwatermark_paths = " << verify.watermark_paths
       << "\nepsilons = " << list(verify.epsilons) << "\nsandwich_tol = " << num(t.sandwich)
       << "\nfrictionless_tol = " << num(t.frictionless_error) << "\norder_min = " << num(t.order_min)
       << "\norder_max = " << num(t.order_max) << "\ny_variation_tol = " << num(t.y_variation)
       << "\nnoinvest_tol = " << num(t.noinvest_error) << "\nslope_tol = " << num(t.slope_rel)
       << "\nc_disc = " << num(t.c_disc) << "\ntruncation_tol = " << num(t.truncation)
       << "\nepsilon_slack = " << num(t.epsilon_slack) << "\nepsilon_limit_tol = " << num(t.epsilon_limit)
       << "\nwatermark_tol = " << num(t.watermark) << "\nmc_sigmas = " << num(t.mc_sigmas) << '\n';
    os << "\n[sweep]\naxis = " << to_string(sweep.axis);
    if (!sweep.values.empty()) os << "\nvalues = " << list(sweep.values);
    if (!sweep.probes.empty()) os << "\nprobes = " << states(sweep.probes);
    os << "\nzero_ambiguity_baseline = " << (sweep.zero_ambiguity_baseline ? "true" : "false") << '\n';
    os << "\n[run]\nslice_y2_index = " << slice_y2_index << '\n';
    return os.str();
}

std::string sha256_hex(const std::string& data) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) != 1)
        throw std::runtime_error("SHA-256 digest failed");
    std::ostringstream os;
    for (unsigned int k = 0; k < len; ++k)
        os << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(digest[k]);
    return os.str();
}

std::string RunConfig::hash() const { return sha256_hex(canonical()); }

}  // namespace hwm
