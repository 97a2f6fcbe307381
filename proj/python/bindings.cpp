#include "hwm/config.hpp"
#include "hwm/runs.hpp"
#include "hwm/verify.hpp"

#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

namespace py = pybind11;
using namespace hwm;

namespace {

py::array_t<double> field_array(const Grid& g, const std::vector<double>& v) {
    py::array_t<double> a({g.nx, g.ny1, g.ny2});
    std::copy(v.begin(), v.end(), a.mutable_data());
    return a;
}

py::array_t<double> control_array(const Grid& g, const std::vector<Vec2>& v) {
    py::array_t<double> a({g.nx, g.ny1, g.ny2, 2});
    double* out = a.mutable_data();
    for (std::size_t n = 0; n < v.size(); ++n) {
        out[2 * n] = v[n](0);
        out[2 * n + 1] = v[n](1);
    }
    return a;
}

SolveResult solve(const MarketParams& p, int nx, int ny1, int ny2, std::optional<double> y_max,
                  const SolverConfig& cfg) {
    const Grid g = build_grid(p, nx, ny1, ny2, y_max ? *y_max : default_y_max(p));
    py::gil_scoped_release release;
    return howard_solve(p, g, cfg);
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Robust lifetime-ruin solver with high-watermark fees";
    m.attr("__version__") = HWM_VERSION;

    py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);

    py::class_<State>(m, "State")
        .def(py::init<double, double, double>(), py::arg("x"), py::arg("y1") = 0.0, py::arg("y2") = 0.0)
        .def_readwrite("x", &State::x)
        .def_readwrite("y1", &State::y1)
        .def_readwrite("y2", &State::y2)
        .def("__repr__", [](const State& z) {
            std::ostringstream os;
            os << "State(" << z.x << ", " << z.y1 << ", " << z.y2 << ")";
            return os.str();
        });

    py::class_<ControlSet>(m, "ControlSet")
        .def_static("box", &ControlSet::box, py::arg("lo"), py::arg("hi"), py::arg("lattice_per_axis"))
        .def_static("finite", &ControlSet::finite, py::arg("points"))
        .def_static("zero", &ControlSet::zero)
        .def("contains", &ControlSet::contains, py::arg("pi"), py::arg("tol") = 1e-12);

    py::class_<AmbiguitySet>(m, "AmbiguitySet")
        .def_static("zero", &AmbiguitySet::zero)
        .def_static("unconstrained", &AmbiguitySet::unconstrained)
        .def_static("ball", &AmbiguitySet::ball, py::arg("radius"))
        .def_static("box", &AmbiguitySet::box, py::arg("lo"), py::arg("hi"))
        .def("contains", &AmbiguitySet::contains, py::arg("theta"), py::arg("tol") = 1e-12);

    py::class_<MarketParams>(m, "MarketParams")
        .def(py::init<>())
        .def_readwrite("r", &MarketParams::r)
        .def_readwrite("c", &MarketParams::c)
        .def_readwrite("R", &MarketParams::R)
        .def_readwrite("lambda_d", &MarketParams::lambda_d)
        .def_readwrite("mu", &MarketParams::mu)
        .def_readwrite("sigma", &MarketParams::sigma)
        .def_readwrite("mu_b", &MarketParams::mu_b)
        .def_readwrite("sigma_b", &MarketParams::sigma_b)
        .def_readwrite("q", &MarketParams::q)
        .def_readwrite("epsilon", &MarketParams::epsilon)
        .def_readwrite("control_set", &MarketParams::control_set)
        .def_readwrite("ambiguity_set", &MarketParams::ambiguity_set)
        .def_property_readonly("safe_level", &MarketParams::safe_level);

    py::class_<DerivedParams>(m, "DerivedParams")
        .def_readonly("mu_r_delta", &DerivedParams::mu_r_delta)
        .def_readonly("cov_inv", &DerivedParams::cov_inv)
        .def_readonly("sharpe", &DerivedParams::sharpe)
        .def_readonly("kappa", &DerivedParams::kappa);

    m.def("validate_params", &validate_params, py::arg("market"));
    m.def("frictionless_value", py::overload_cast<const MarketParams&, double>(&frictionless_value),
          py::arg("market"), py::arg("x"));
    m.def("frictionless_policy", [](const MarketParams& p, double x) {
        return frictionless_policy(p, validate_params(p), x);
    }, py::arg("market"), py::arg("x"));
    m.def("no_invest_value", &no_invest_value, py::arg("market"), py::arg("x"));
    m.def("default_y_max", &default_y_max, py::arg("market"));

    py::class_<Grid>(m, "Grid")
        .def_readonly("nx", &Grid::nx)
        .def_readonly("ny1", &Grid::ny1)
        .def_readonly("ny2", &Grid::ny2)
        .def_readonly("hx", &Grid::hx)
        .def_readonly("hy1", &Grid::hy1)
        .def_readonly("hy2", &Grid::hy2)
        .def_readonly("xs", &Grid::xs)
        .def_readonly("y1s", &Grid::y1s)
        .def_readonly("y2s", &Grid::y2s);

    py::enum_<LinearSolver>(m, "LinearSolver")
        .value("BiCGSTAB", LinearSolver::BiCGSTAB)
        .value("SparseLU", LinearSolver::SparseLU)
        .value("Jacobi", LinearSolver::Jacobi);

    py::class_<SolverConfig>(m, "SolverConfig")
        .def(py::init<>())
        .def_readwrite("tol", &SolverConfig::tol)
        .def_readwrite("max_iterations", &SolverConfig::max_iterations)
        .def_readwrite("linear_solver", &SolverConfig::linear_solver)
        .def_readwrite("linear_tol", &SolverConfig::linear_tol)
        .def_readwrite("pi_lattice", &SolverConfig::pi_lattice)
        .def_readwrite("monotone_augmentation", &SolverConfig::monotone_augmentation)
        .def_readwrite("threads", &SolverConfig::threads);

    py::class_<SolveReport>(m, "SolveReport")
        .def_readonly("iterations", &SolveReport::iterations)
        .def_readonly("converged", &SolveReport::converged)
        .def_readonly("residual_interior", &SolveReport::residual_interior)
        .def_readonly("residual_b1", &SolveReport::residual_b1)
        .def_readonly("residual_b2", &SolveReport::residual_b2)
        .def_readonly("residual_corner", &SolveReport::residual_corner)
        .def_readonly("residual_history", &SolveReport::residual_history)
        .def_readonly("augmented_nodes", &SolveReport::augmented_nodes)
        .def_readonly("message", &SolveReport::message)
        .def("json", &report_json);

    py::class_<SimConfig>(m, "SimConfig")
        .def(py::init<>())
        .def_readwrite("dt", &SimConfig::dt)
        .def_readwrite("t_max", &SimConfig::t_max)
        .def_readwrite("n_paths", &SimConfig::n_paths)
        .def_readwrite("seed", &SimConfig::seed)
        .def_readwrite("threads", &SimConfig::threads);

    py::class_<ObjectiveEstimate>(m, "ObjectiveEstimate")
        .def_readonly("mean", &ObjectiveEstimate::mean)
        .def_readonly("std_err", &ObjectiveEstimate::std_err)
        .def_readonly("n", &ObjectiveEstimate::n)
        .def_readonly("truncation_fraction", &ObjectiveEstimate::truncation_fraction)
        .def_readonly("ruin_fraction", &ObjectiveEstimate::ruin_fraction);

    m.def("horizon_for_budget", &horizon_for_budget, py::arg("lambda_d"), py::arg("budget"));

    py::class_<SolveResult>(m, "Solution")
        .def_property_readonly("grid", [](const SolveResult& s) { return s.policy.grid(); })
        .def_property_readonly("report", [](const SolveResult& s) { return s.report; })
        .def_property_readonly("values", [](const SolveResult& s) {
            return field_array(s.policy.grid(), s.field.values);
        })
        .def_property_readonly("pi", [](const SolveResult& s) { return control_array(s.policy.grid(), s.policy.pi()); })
        .def_property_readonly("theta", [](const SolveResult& s) {
            return control_array(s.policy.grid(), s.policy.theta());
        })
        .def("value_at", [](const SolveResult& s, const State& z) {
            return interpolate(s.policy.grid(), s.field.values, z);
        }, py::arg("state"))
        .def("controls_at", [](const SolveResult& s, const MarketParams& p, const State& z) {
            return s.policy.at(p, z);
        }, py::arg("market"), py::arg("state"))
        .def("simulate", [](const SolveResult& s, const MarketParams& p, const SimConfig& sim, const State& z0) {
            const DerivedParams d = validate_params(p);
            const Policy pol = s.policy.to_policy(p);
            py::gil_scoped_release release;
            return estimate_objective(p, d, pol, sim, z0);
        }, py::arg("market"), py::arg("sim"), py::arg("start"), "Monte Carlo objective under the solved feedback.");

    m.def("solve", &solve, py::arg("market"), py::arg("nx"), py::arg("ny1"), py::arg("ny2"),
          py::arg("y_max") = py::none(), py::arg("solver") = SolverConfig{});

    m.def("simulate_constant", [](const MarketParams& p, const Vec2& pi, const Vec2& theta, const SimConfig& sim,
                                  const State& z0) {
        const DerivedParams d = validate_params(p);
        py::gil_scoped_release release;
        return estimate_objective(p, d, Policy::constant(pi, theta), sim, z0);
    }, py::arg("market"), py::arg("pi"), py::arg("theta"), py::arg("sim"), py::arg("start"));

    m.def("config_hash", [](const std::string& path) { return load_config(path).hash(); }, py::arg("path"));

    m.def("run", [](const std::string& command, const std::string& config, std::optional<std::string> out_dir,
                    std::optional<int> threads, bool quiet) {
        RunOptions opt;
        opt.out_dir = std::move(out_dir);
        opt.threads = threads;
        opt.quiet = quiet;
        std::ostringstream out, err;
        int code;
        {
            py::gil_scoped_release release;
            code = run_command(command, config, opt, out, err);
        }
        return py::make_tuple(code, out.str(), err.str());
    }, py::arg("command"), py::arg("config"), py::arg("out_dir") = py::none(), py::arg("threads") = py::none(),
       py::arg("quiet") = true, "Runs a tool command; returns (exit_code, stdout, stderr).");
}
