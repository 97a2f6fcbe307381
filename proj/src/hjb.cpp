#include "hwm/hjb.hpp"

#include "hwm/parallel.hpp"

#include <Eigen/IterativeLinearSolvers>
#include <Eigen/Sparse>
#include <Eigen/SparseLU>
#include <json.hpp>

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <istream>
#include <limits>
#include <map>
#include <memory>
#include <ostream>
#include <set>
#include <sstream>
#include <stdexcept>

namespace hwm {

LinearSolver parse_linear_solver(const std::string& name) {
    if (name == "bicgstab") return LinearSolver::BiCGSTAB;
    if (name == "sparse_lu") return LinearSolver::SparseLU;
    if (name == "jacobi") return LinearSolver::Jacobi;
    throw ValidationError("linear_solver", "expected bicgstab, sparse_lu or jacobi, got '" + name + "'");
}

std::string to_string(LinearSolver s) {
    switch (s) {
        case LinearSolver::BiCGSTAB: return "bicgstab";
        case LinearSolver::SparseLU: return "sparse_lu";
        case LinearSolver::Jacobi: return "jacobi";
    }
    return "unknown";
}

void validate_solver_config(const SolverConfig& cfg) {
    if (!(cfg.tol > 0)) throw ValidationError("tol", "must be > 0");
    if (cfg.max_iterations < 1) throw ValidationError("max_iterations", "must be >= 1");
    if (!(cfg.linear_tol > 0)) throw ValidationError("linear_tol", "must be > 0");
    if (cfg.max_sweeps < 1) throw ValidationError("max_sweeps", "must be >= 1");
    if (!(cfg.relaxation > 0) || cfg.relaxation > 1)
        throw ValidationError("relaxation", "must lie in (0, 1]");
    if (cfg.pi_lattice < 0 || (cfg.pi_lattice > 0 && cfg.pi_lattice % 2 == 0))
        throw ValidationError("pi_lattice", "must be 0 or a positive odd integer");
    if (cfg.threads < 1) throw ValidationError("threads", "must be >= 1");
}

NodeKind classify(const Grid& g, int i, int j, int k) {
    if (i == 0) return NodeKind::DirichletRuin;
    if (i == g.nx - 1) return NodeKind::DirichletSafe;
    if (j == 0 && k == 0) return NodeKind::ObliqueCorner;
    if (j == 0) return NodeKind::Oblique1;
    if (k == 0) return NodeKind::Oblique2;
    const bool top1 = j == g.ny1 - 1;
    const bool top2 = k == g.ny2 - 1;
    if (top1 && top2) return NodeKind::TopCorner;
    if (top1) return NodeKind::Top1;
    if (top2) return NodeKind::Top2;
    return NodeKind::Interior;
}

double ResidualField::combined() const {
    return std::max({interior, b1, b2, corner, dirichlet, neumann});
}

MarketParams solver_params(const MarketParams& p, const SolverConfig& cfg) {
    MarketParams out = p;
    if (cfg.pi_lattice > 0 && p.control_set.kind() == ControlSet::Kind::Box)
        out.control_set = ControlSet::box(p.control_set.lo(), p.control_set.hi(), cfg.pi_lattice);
    return out;
}

namespace {

// Stencil neighbours: six axis neighbours, then the two diagonals of each
// coordinate plane in the order (+,+), (-,-), (+,-), (-,+).
constexpr int kAxis = 6;
constexpr int kStencil = 18;
constexpr std::array<std::array<int, 3>, kStencil> kOffsets{{
    {1, 0, 0}, {-1, 0, 0}, {0, 1, 0}, {0, -1, 0}, {0, 0, 1}, {0, 0, -1},
    {1, 1, 0}, {-1, -1, 0}, {1, -1, 0}, {-1, 1, 0},
    {1, 0, 1}, {-1, 0, -1}, {1, 0, -1}, {-1, 0, 1},
    {0, 1, 1}, {0, -1, -1}, {0, 1, -1}, {0, -1, 1},
}};

struct Candidate {
    Vec2 pi;
    Vec2 sigma_pi;     // sigma^T pi
    Mat2 delta_pi;     // sigma_b_delta^T diag(pi)
    double excess;     // pi^T mu_r_delta
    Vec2 y_drift;      // -diag(pi) mu_b_delta
    Mat2 y_theta;      // -diag(pi) sigma_b_delta
    std::array<double, kStencil> diffusion{};
    bool raw_dominant = true;
};

struct Choice {
    int candidate = 0;
    Vec2 theta = Vec2::Zero();
    double value = 0.0;  // G_h at the chosen pair
};

class Discretization {
public:
    Discretization(const MarketParams& p, const Grid& g, const SolverConfig& cfg)
        : p_(p), d_(validate_params(p)), g_(g), cfg_(cfg) {
        const std::array<double, 3> h{g.hx, g.hy1, g.hy2};
        for (int k = 0; k < kStencil; ++k)
            offset_[k] = static_cast<std::ptrdiff_t>(
                (static_cast<std::ptrdiff_t>(kOffsets[k][0]) * g.ny1 + kOffsets[k][1]) * g.ny2 +
                kOffsets[k][2]);
        const auto& cands = p.control_set.candidates();
        if (cands.empty()) throw ValidationError("control_set", "empty control grid");
        for (const auto& pi : cands) {
            Candidate c;
            c.pi = pi;
            c.sigma_pi = p.sigma.transpose() * pi;
            c.delta_pi = d_.sigma_b_delta.transpose() * pi.asDiagonal();
            c.excess = pi.dot(d_.mu_r_delta);
            c.y_drift = -(pi.asDiagonal() * d_.mu_b_delta);
            c.y_theta = -(pi.asDiagonal() * d_.sigma_b_delta);
            const Mat3 a = diffusion_matrix(p, d_, pi);
            std::array<double, 3> diag{};
            for (int i = 0; i < 3; ++i) {
                double need = 0.0;
                for (int j = 0; j < 3; ++j)
                    if (j != i) need += std::abs(a(i, j)) * h[i] / h[j];
                diag[i] = a(i, i);
                if (a(i, i) < need * (1.0 - 1e-12)) {
                    c.raw_dominant = false;
                    if (cfg.monotone_augmentation) diag[i] = need;
                }
            }
            for (int i = 0; i < 3; ++i) {
                double w = 0.5 * diag[i] / (h[i] * h[i]);
                for (int j = 0; j < 3; ++j)
                    if (j != i) w -= std::abs(a(i, j)) / (2.0 * h[i] * h[j]);
                c.diffusion[2 * i] = w;
                c.diffusion[2 * i + 1] = w;
            }
            // Planes (0,1), (0,2), (1,2) start at stencil slots 6, 10, 14.
            const std::array<std::array<int, 2>, 3> planes{{{0, 1}, {0, 2}, {1, 2}}};
            for (int pl = 0; pl < 3; ++pl) {
                const int ia = planes[pl][0];
                const int ib = planes[pl][1];
                const double v = a(ia, ib);
                const double w = std::abs(v) / (2.0 * h[ia] * h[ib]);
                const int base = kAxis + 4 * pl;
                c.diffusion[base + 0] = v > 0 ? w : 0.0;
                c.diffusion[base + 1] = v > 0 ? w : 0.0;
                c.diffusion[base + 2] = v < 0 ? w : 0.0;
                c.diffusion[base + 3] = v < 0 ? w : 0.0;
            }
            cands_.push_back(c);
        }
        kinds_.resize(g.size());
        for (int i = 0; i < g.nx; ++i)
            for (int j = 0; j < g.ny1; ++j)
                for (int k = 0; k < g.ny2; ++k) kinds_[g.index(i, j, k)] = classify(g, i, j, k);
    }

    const MarketParams& params() const { return p_; }
    const DerivedParams& derived() const { return d_; }
    const std::vector<Candidate>& candidates() const { return cands_; }
    NodeKind kind(std::size_t n) const { return kinds_[n]; }

    /// Interior row weights for a control pair: G_h = lambda phi0 +
    /// sum w (phi0 - phi_nb) + |theta|^2/(2 eps).
    void weights(const Candidate& c, double x, const Vec2& theta,
                 std::array<double, kStencil>& w) const {
        w = c.diffusion;
        const double dx = p_.r * x - p_.c + c.excess + c.sigma_pi.dot(theta);
        const Vec2 dy = c.y_drift + c.y_theta * theta;
        const std::array<double, 3> drift{dx, dy[0], dy[1]};
        const std::array<double, 3> h{g_.hx, g_.hy1, g_.hy2};
        for (int a = 0; a < 3; ++a) {
            if (drift[a] > 0)
                w[2 * a] += drift[a] / h[a];
            else
                w[2 * a + 1] -= drift[a] / h[a];
        }
    }

    Choice improve(const std::vector<double>& phi, int i, std::size_t n) const {
        const double phi0 = phi[n];
        std::array<double, kStencil> diff;
        for (int k = 0; k < kStencil; ++k) diff[k] = phi0 - phi[n + offset_[k]];
        const double x = g_.xs[i];
        const double gx = (phi[n + offset_[0]] - phi[n + offset_[1]]) / (2.0 * g_.hx);
        const Vec2 gy((phi[n + offset_[2]] - phi[n + offset_[3]]) / (2.0 * g_.hy1),
                      (phi[n + offset_[4]] - phi[n + offset_[5]]) / (2.0 * g_.hy2));
        const std::array<double, 3> h{g_.hx, g_.hy1, g_.hy2};

        Choice best;
        best.value = -std::numeric_limits<double>::infinity();
        for (std::size_t ci = 0; ci < cands_.size(); ++ci) {
            const Candidate& c = cands_[ci];
            const Vec2 theta =
                optimal_theta(p_.ambiguity_set, p_.epsilon, c.sigma_pi * gx - c.delta_pi * gy);
            double gval = p_.lambda_d * phi0 + theta.squaredNorm() / (2.0 * p_.epsilon);
            for (int k = 0; k < kStencil; ++k) gval += c.diffusion[k] * diff[k];
            const double dx = p_.r * x - p_.c + c.excess + c.sigma_pi.dot(theta);
            const Vec2 dy = c.y_drift + c.y_theta * theta;
            const std::array<double, 3> drift{dx, dy[0], dy[1]};
            for (int a = 0; a < 3; ++a)
                gval += drift[a] > 0 ? drift[a] * diff[2 * a] / h[a]
                                     : -drift[a] * diff[2 * a + 1] / h[a];
            if (gval > best.value) {
                best.value = gval;
                best.candidate = static_cast<int>(ci);
                best.theta = theta;
            }
        }
        return best;
    }

    struct Entry {
        std::ptrdiff_t offset;
        double coeff;
    };

    /// Linear boundary rows: residual = sum coeff * phi[n + offset] - rhs.
    void boundary_row(std::size_t n, std::vector<Entry>& row, double& rhs) const {
        row.clear();
        rhs = 0.0;
        const auto add = [&](std::ptrdiff_t off, double c) { row.push_back({off, c}); };
        const double q1 = p_.q[0];
        const double q2 = p_.q[1];
        switch (kinds_[n]) {
            case NodeKind::DirichletRuin:
                add(0, 1.0);
                rhs = 1.0;
                break;
            case NodeKind::DirichletSafe:
                add(0, 1.0);
                break;
            case NodeKind::Oblique1:
                add(0, q1 / g_.hx + (1 + q1) / g_.hy1);
                add(offset_[1], -q1 / g_.hx);
                add(offset_[2], -(1 + q1) / g_.hy1);
                break;
            case NodeKind::Oblique2:
                add(0, q2 / g_.hx + (1 + q2) / g_.hy2);
                add(offset_[1], -q2 / g_.hx);
                add(offset_[4], -(1 + q2) / g_.hy2);
                break;
            case NodeKind::ObliqueCorner:
                add(0, (q1 + q2) / g_.hx + (1 + q1) / g_.hy1 + (1 + q2) / g_.hy2);
                add(offset_[1], -(q1 + q2) / g_.hx);
                add(offset_[2], -(1 + q1) / g_.hy1);
                add(offset_[4], -(1 + q2) / g_.hy2);
                break;
            case NodeKind::Top1:
                add(0, 1.0 / g_.hy1);
                add(offset_[3], -1.0 / g_.hy1);
                break;
            case NodeKind::Top2:
                add(0, 1.0 / g_.hy2);
                add(offset_[5], -1.0 / g_.hy2);
                break;
            case NodeKind::TopCorner:
                add(0, 1.0 / g_.hy1 + 1.0 / g_.hy2);
                add(offset_[3], -1.0 / g_.hy1);
                add(offset_[5], -1.0 / g_.hy2);
                break;
            case NodeKind::Interior:
                break;
        }
    }

    double oblique(const std::vector<double>& phi, std::size_t n, int fund) const {
        const double q = p_.q[fund - 1];
        const double dx = (phi[n] - phi[n + offset_[1]]) / g_.hx;
        const double dy = fund == 1 ? (phi[n + offset_[2]] - phi[n]) / g_.hy1
                                    : (phi[n + offset_[4]] - phi[n]) / g_.hy2;
        return q * dx - (1 + q) * dy;
    }

    std::ptrdiff_t offset(int k) const { return offset_[k]; }

private:
    MarketParams p_;
    DerivedParams d_;
    Grid g_;
    SolverConfig cfg_;
    std::array<std::ptrdiff_t, kStencil> offset_{};
    std::vector<Candidate> cands_;
    std::vector<NodeKind> kinds_;
};

struct Improvement {
    std::vector<Choice> choice;  // valid on interior nodes
    double interior_residual = 0.0;
};

Improvement improve_all(const Discretization& disc, const Grid& g, const std::vector<double>& phi,
                        int threads) {
    Improvement out;
    out.choice.assign(g.size(), Choice{});
    // One task per x-plane keeps chunks coarse; each writes only its own nodes.
    std::vector<double> plane_sup(g.nx, 0.0);
    parallel_for(static_cast<std::size_t>(g.nx), threads, [&](std::size_t ii) {
        const int i = static_cast<int>(ii);
        double sup = 0.0;
        for (int j = 0; j < g.ny1; ++j)
            for (int k = 0; k < g.ny2; ++k) {
                const std::size_t n = g.index(i, j, k);
                if (disc.kind(n) != NodeKind::Interior) continue;
                out.choice[n] = disc.improve(phi, i, n);
                sup = std::max(sup, std::abs(out.choice[n].value));
            }
        plane_sup[ii] = sup;
    });
    out.interior_residual = *std::max_element(plane_sup.begin(), plane_sup.end());
    return out;
}

ResidualField residual_from(const Discretization& disc, const Grid& g,
                            const std::vector<double>& phi, const Improvement& imp) {
    ResidualField r;
    r.values.assign(g.size(), 0.0);
    r.interior = imp.interior_residual;
    std::vector<Discretization::Entry> row;
    for (std::size_t n = 0; n < g.size(); ++n) {
        const NodeKind kind = disc.kind(n);
        if (kind == NodeKind::Interior) {
            r.values[n] = imp.choice[n].value;
            continue;
        }
        double rhs;
        disc.boundary_row(n, row, rhs);
        double v = -rhs;
        for (const auto& e : row) v += e.coeff * phi[n + e.offset];
        r.values[n] = v;
        const double a = std::abs(v);
        switch (kind) {
            case NodeKind::DirichletRuin:
            case NodeKind::DirichletSafe: r.dirichlet = std::max(r.dirichlet, a); break;
            case NodeKind::Oblique1: r.b1 = std::max(r.b1, a); break;
            case NodeKind::Oblique2: r.b2 = std::max(r.b2, a); break;
            case NodeKind::ObliqueCorner: {
                r.corner = std::max(r.corner, a);
                const double b1 = disc.oblique(phi, n, 1);
                const double b2 = disc.oblique(phi, n, 2);
                const double env = std::max(0.0, std::min(b1, b2)) + std::max(0.0, -std::max(b1, b2));
                r.corner_envelope = std::max(r.corner_envelope, env);
                break;
            }
            case NodeKind::Top1:
            case NodeKind::Top2:
            case NodeKind::TopCorner: r.neumann = std::max(r.neumann, a); break;
            case NodeKind::Interior: break;
        }
    }
    return r;
}

using RowMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

void assemble_system(const Discretization& disc, const Grid& g, const std::vector<Choice>& choice,
                     RowMatrix& A, Eigen::VectorXd& b) {
    const MarketParams& p = disc.params();
    std::vector<Eigen::Triplet<double>> trips;
    trips.reserve(g.size() * 13);
    b.setZero(static_cast<Eigen::Index>(g.size()));
    std::vector<Discretization::Entry> row;
    std::array<double, kStencil> w;
    for (int i = 0; i < g.nx; ++i)
        for (int j = 0; j < g.ny1; ++j)
            for (int k = 0; k < g.ny2; ++k) {
                const std::size_t n = g.index(i, j, k);
                const auto rn = static_cast<Eigen::Index>(n);
                if (disc.kind(n) == NodeKind::Interior) {
                    const Choice& ch = choice[n];
                    disc.weights(disc.candidates()[ch.candidate], g.xs[i], ch.theta, w);
                    double diag = p.lambda_d;
                    for (int s = 0; s < kStencil; ++s) {
                        if (w[s] == 0.0) continue;
                        diag += w[s];
                        trips.emplace_back(rn, rn + disc.offset(s), -w[s]);
                    }
                    trips.emplace_back(rn, rn, diag);
                    b[rn] = -ch.theta.squaredNorm() / (2.0 * p.epsilon);
                } else {
                    double rhs;
                    disc.boundary_row(n, row, rhs);
                    for (const auto& e : row) trips.emplace_back(rn, rn + e.offset, e.coeff);
                    b[rn] = rhs;
                }
            }
    A.resize(static_cast<Eigen::Index>(g.size()), static_cast<Eigen::Index>(g.size()));
    A.setFromTriplets(trips.begin(), trips.end());
    A.makeCompressed();
}

struct LinearOutcome {
    std::int64_t iterations = 0;
    bool fallback = false;
};

LinearOutcome solve_linear(const RowMatrix& A, const Eigen::VectorXd& b, Eigen::VectorXd& x,
                           const SolverConfig& cfg) {
    LinearOutcome out;
    auto direct = [&] {
        Eigen::SparseMatrix<double> Ac(A);
        Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
        lu.compute(Ac);
        if (lu.info() != Eigen::Success) throw std::runtime_error("sparse LU factorisation failed");
        x = lu.solve(b);
    };
    switch (cfg.linear_solver) {
        case LinearSolver::SparseLU:
            direct();
            return out;
        case LinearSolver::BiCGSTAB: {
            Eigen::BiCGSTAB<RowMatrix, Eigen::IncompleteLUT<double>> solver;
            solver.preconditioner().setDroptol(1e-3);
            solver.preconditioner().setFillfactor(2);
            solver.setTolerance(cfg.linear_tol);
            solver.setMaxIterations(cfg.max_sweeps);
            solver.compute(A);
            Eigen::VectorXd guess = x;
            x = solver.solveWithGuess(b, guess);
            out.iterations = solver.iterations();
            const double rel = (b - A * x).norm() / std::max(b.norm(), 1e-300);
            if (solver.info() != Eigen::Success || !(rel <= 10 * cfg.linear_tol)) {
                out.fallback = true;
                direct();
            }
            return out;
        }
        case LinearSolver::Jacobi: {
            const auto n = A.rows();
            Eigen::VectorXd diag(n);
            for (Eigen::Index r = 0; r < n; ++r) diag[r] = A.coeff(r, r);
            Eigen::VectorXd next(n);
            for (int sweep = 0; sweep < cfg.max_sweeps; ++sweep) {
                double change = 0.0;
                parallel_for(static_cast<std::size_t>(n), cfg.threads, [&](std::size_t rr) {
                    const auto r = static_cast<Eigen::Index>(rr);
                    double off = 0.0;
                    for (RowMatrix::InnerIterator it(A, r); it; ++it)
                        if (it.col() != r) off += it.value() * x[it.col()];
                    const double target = (b[r] - off) / diag[r];
                    next[r] = x[r] + cfg.relaxation * (target - x[r]);
                });
                for (Eigen::Index r = 0; r < n; ++r) change = std::max(change, std::abs(next[r] - x[r]));
                x.swap(next);
                out.iterations = sweep + 1;
                if (change < cfg.linear_tol) break;
            }
            return out;
        }
    }
    return out;
}

PolicyField policy_from(const Discretization& disc, const Grid& g, const Improvement& imp) {
    std::vector<Vec2> pi(g.size(), Vec2::Zero());
    std::vector<Vec2> theta(g.size(), Vec2::Zero());
    for (int i = 1; i < g.nx - 1; ++i)
        for (int j = 0; j < g.ny1; ++j)
            for (int k = 0; k < g.ny2; ++k) {
                const int jj = std::clamp(j, 1, g.ny1 - 2);
                const int kk = std::clamp(k, 1, g.ny2 - 2);
                const Choice& ch = imp.choice[g.index(i, jj, kk)];
                pi[g.index(i, j, k)] = disc.candidates()[ch.candidate].pi;
                theta[g.index(i, j, k)] = ch.theta;
            }
    return PolicyField(g, std::move(pi), std::move(theta));
}

void check_sizes(const DiscreteField& field, const Grid& grid) {
    if (field.size() != grid.size())
        throw ValidationError("field", "size " + std::to_string(field.size()) +
                                           " does not match grid size " +
                                           std::to_string(grid.size()));
}

}  // namespace

PolicyField::PolicyField(Grid grid, std::vector<Vec2> pi, std::vector<Vec2> theta)
    : grid_(std::move(grid)), pi_(std::move(pi)), theta_(std::move(theta)) {
    if (pi_.size() != grid_.size() || theta_.size() != grid_.size())
        throw ValidationError("policy", "control arrays do not match the grid");
    packed_.resize(grid_.size());
    for (std::size_t n = 0; n < grid_.size(); ++n)
        packed_[n] = {pi_[n][0], pi_[n][1], theta_[n][0], theta_[n][1]};
}

std::pair<Vec2, Vec2> PolicyField::raw_at(const State& z) const {
    if (z.x >= grid_.xs.back()) return {Vec2::Zero(), Vec2::Zero()};
    const CellWeights cw = cell_weights(grid_, z);
    std::array<double, 4> acc{};
    for (int s = 0; s < 8; ++s) {
        const double w = cw.weight[s];
        if (w == 0.0) continue;
        const auto& v = packed_[cw.node[s]];
        for (int c = 0; c < 4; ++c) acc[c] += w * v[c];
    }
    return {Vec2(acc[0], acc[1]), Vec2(acc[2], acc[3])};
}

std::pair<Vec2, Vec2> PolicyField::at(const MarketParams& p, const State& z) const {
    const auto [pi, th] = raw_at(z);
    return {p.control_set.clamp(pi), p.ambiguity_set.project(th)};
}

Policy PolicyField::to_policy(const MarketParams& p) const {
    auto self = std::make_shared<const PolicyField>(*this);
    const ControlSet cs = p.control_set;
    const AmbiguitySet as = p.ambiguity_set;
    Policy pol;
    pol.pi_of = [self, cs](const State& z) { return cs.clamp(self->raw_at(z).first); };
    pol.theta_of = [self, as](const State& z) { return as.project(self->raw_at(z).second); };
    pol.controls_of = [self, cs, as](const State& z) {
        const auto [pi, th] = self->raw_at(z);
        return std::make_pair(cs.clamp(pi), as.project(th));
    };
    pol.idle_beyond_safe_level = true;
    return pol;
}

ResidualField assemble_residual(const DiscreteField& field, const MarketParams& p,
                                const Grid& grid, const SolverConfig& cfg) {
    check_sizes(field, grid);
    const Discretization disc(solver_params(p, cfg), grid, cfg);
    const auto imp = improve_all(disc, grid, field.values, cfg.threads);
    return residual_from(disc, grid, field.values, imp);
}

PolicyField extract_policy(const DiscreteField& field, const MarketParams& p, const Grid& grid,
                           const SolverConfig& cfg) {
    check_sizes(field, grid);
    const Discretization disc(solver_params(p, cfg), grid, cfg);
    return policy_from(disc, grid, improve_all(disc, grid, field.values, cfg.threads));
}

SolveResult howard_solve(const MarketParams& p, const Grid& grid, const SolverConfig& cfg) {
    validate_solver_config(cfg);
    const auto start = std::chrono::steady_clock::now();
    const MarketParams ps = solver_params(p, cfg);
    const Discretization disc(ps, grid, cfg);

    // Start from the never-invest value, which already satisfies the x-faces.
    std::vector<double> phi(grid.size());
    for (int i = 0; i < grid.nx; ++i) {
        const double v = i == 0 ? 1.0 : i == grid.nx - 1 ? 0.0 : no_invest_value(ps, grid.xs[i]);
        for (int j = 0; j < grid.ny1; ++j)
            for (int k = 0; k < grid.ny2; ++k) phi[grid.index(i, j, k)] = v;
    }

    SolveResult result;
    SolveReport& rep = result.report;
    std::vector<int> previous(grid.size(), -1);
    Improvement imp;
    double omega = 1.0;
    RowMatrix A;
    Eigen::VectorXd b;
    Eigen::VectorXd x = Eigen::Map<Eigen::VectorXd>(phi.data(), static_cast<Eigen::Index>(phi.size()));

    for (int it = 0;; ++it) {
        imp = improve_all(disc, grid, phi, cfg.threads);
        const ResidualField res = residual_from(disc, grid, phi, imp);
        const double r = res.combined();
        std::int64_t changes = 0;
        for (std::size_t n = 0; n < grid.size(); ++n) {
            if (disc.kind(n) != NodeKind::Interior) continue;
            if (imp.choice[n].candidate != previous[n]) ++changes;
            previous[n] = imp.choice[n].candidate;
        }
        rep.policy_changes.push_back(changes);
        if (it >= 2 && r > rep.residual_history.back()) {
            rep.damping_engaged = true;
            omega = std::max(0.5 * omega, 0.125);
        } else if (it >= 2) {
            omega = std::min(1.0, 2.0 * omega);
        }
        rep.residual_history.push_back(r);
        rep.iterations = it;
        if (!std::isfinite(r)) {
            rep.message = "non-finite residual";
            break;
        }
        if (r < cfg.tol) {
            rep.converged = true;
            break;
        }
        if (it == cfg.max_iterations) {
            rep.message = "iteration budget exhausted";
            break;
        }
        assemble_system(disc, grid, imp.choice, A, b);
        Eigen::VectorXd prev = x;
        const auto lin = solve_linear(A, b, x, cfg);
        rep.linear_iterations += lin.iterations;
        rep.linear_fallback_used = rep.linear_fallback_used || lin.fallback;
        if (omega < 1.0) x = prev + omega * (x - prev);
        std::copy(x.data(), x.data() + x.size(), phi.begin());
    }

    // Residual certificate and audit from the returned field.
    const ResidualField fin = residual_from(disc, grid, phi, imp);
    rep.residual_interior = fin.interior;
    rep.residual_b1 = fin.b1;
    rep.residual_b2 = fin.b2;
    rep.residual_corner = fin.corner;
    rep.residual_corner_envelope = fin.corner_envelope;
    rep.residual_dirichlet = fin.dirichlet;
    rep.residual_neumann = fin.neumann;
    for (std::size_t n = 0; n < grid.size(); ++n)
        if (disc.kind(n) == NodeKind::Interior &&
            !disc.candidates()[imp.choice[n].candidate].raw_dominant)
            ++rep.augmented_nodes;
    rep.diag_dominance_ok = rep.augmented_nodes == 0 || cfg.monotone_augmentation;
    if (rep.converged) rep.message = "converged";

    result.field.values = std::move(phi);
    result.policy = policy_from(disc, grid, imp);
    rep.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return result;
}

FaceStats boundary_residuals(const DiscreteField& field, const MarketParams& p, const Grid& grid) {
    check_sizes(field, grid);
    SolverConfig cfg;
    // Only the linear boundary rows are needed; a singleton control set keeps
    // the discretisation cheap.
    MarketParams light = p;
    light.control_set = ControlSet::zero();
    const Discretization disc(light, grid, cfg);
    FaceStats fs;
    std::int64_t n1 = 0, n2 = 0;
    const auto& phi = field.values;
    for (int i = 0; i < grid.nx; ++i)
        for (int j = 0; j < grid.ny1; ++j)
            for (int k = 0; k < grid.ny2; ++k) {
                const std::size_t n = grid.index(i, j, k);
                switch (disc.kind(n)) {
                    case NodeKind::DirichletRuin:
                        fs.ruin_face_sup = std::max(fs.ruin_face_sup, std::abs(phi[n] - 1.0));
                        break;
                    case NodeKind::DirichletSafe:
                        fs.safe_face_sup = std::max(fs.safe_face_sup, std::abs(phi[n]));
                        break;
                    case NodeKind::Oblique1: {
                        const double v = std::abs(disc.oblique(phi, n, 1));
                        fs.b1_sup = std::max(fs.b1_sup, v);
                        fs.b1_mean += v;
                        ++n1;
                        break;
                    }
                    case NodeKind::Oblique2: {
                        const double v = std::abs(disc.oblique(phi, n, 2));
                        fs.b2_sup = std::max(fs.b2_sup, v);
                        fs.b2_mean += v;
                        ++n2;
                        break;
                    }
                    case NodeKind::ObliqueCorner: {
                        const double b1 = disc.oblique(phi, n, 1);
                        const double b2 = disc.oblique(phi, n, 2);
                        fs.corner_sup = std::max(fs.corner_sup, std::abs(b1 + b2));
                        fs.corner_envelope_sup =
                            std::max(fs.corner_envelope_sup,
                                     std::max(0.0, std::min(b1, b2)) + std::max(0.0, -std::max(b1, b2)));
                        break;
                    }
                    default: break;
                }
            }
    if (n1) fs.b1_mean /= static_cast<double>(n1);
    if (n2) fs.b2_mean /= static_cast<double>(n2);
    return fs;
}

double max_x_increase(const DiscreteField& field, const Grid& grid) {
    double worst = 0.0;
    for (int i = 1; i < grid.nx; ++i)
        for (int j = 0; j < grid.ny1; ++j)
            for (int k = 0; k < grid.ny2; ++k)
                worst = std::max(worst, field[grid.index(i, j, k)] - field[grid.index(i - 1, j, k)]);
    return worst;
}

void write_field_csv(std::ostream& os, const Grid& grid, const DiscreteField& field,
                     const PolicyField& policy) {
    check_sizes(field, grid);
    os << "x,y1,y2,value,pi1,pi2,theta1,theta2\n";
    os << std::setprecision(17);
    for (int i = 0; i < grid.nx; ++i)
        for (int j = 0; j < grid.ny1; ++j)
            for (int k = 0; k < grid.ny2; ++k) {
                const std::size_t n = grid.index(i, j, k);
                os << grid.xs[i] << ',' << grid.y1s[j] << ',' << grid.y2s[k] << ',' << field[n] << ','
                   << policy.pi()[n][0] << ',' << policy.pi()[n][1] << ',' << policy.theta()[n][0]
                   << ',' << policy.theta()[n][1] << '\n';
            }
}

void write_slice_csv(std::ostream& os, const Grid& grid, const DiscreteField& field, int y2_index) {
    check_sizes(field, grid);
    if (y2_index < 0 || y2_index >= grid.ny2)
        throw ValidationError("slice_y2_index", "outside the grid");
    os << "x,y1,value\n";
    os << std::setprecision(17);
    for (int i = 0; i < grid.nx; ++i)
        for (int j = 0; j < grid.ny1; ++j)
            os << grid.xs[i] << ',' << grid.y1s[j] << ',' << field[grid.index(i, j, y2_index)] << '\n';
}

std::string report_json(const SolveReport& r) {
    nlohmann::ordered_json j;
    j["iterations"] = r.iterations;
    j["converged"] = r.converged;
    j["residual_interior"] = r.residual_interior;
    j["residual_b1"] = r.residual_b1;
    j["residual_b2"] = r.residual_b2;
    j["residual_corner"] = r.residual_corner;
    j["residual_corner_envelope"] = r.residual_corner_envelope;
    j["residual_dirichlet"] = r.residual_dirichlet;
    j["residual_neumann"] = r.residual_neumann;
    j["diag_dominance_ok"] = r.diag_dominance_ok;
    j["augmented_nodes"] = r.augmented_nodes;
    j["damping_engaged"] = r.damping_engaged;
    j["linear_iterations"] = r.linear_iterations;
    j["linear_fallback_used"] = r.linear_fallback_used;
    j["residual_history"] = r.residual_history;
    j["policy_changes"] = r.policy_changes;
    j["message"] = r.message;
    j["wall_seconds"] = r.wall_seconds;
    return j.dump(2) + "\n";
}

LoadedField read_field_csv(std::istream& is) {
    std::string line;
    if (!std::getline(is, line)) throw std::runtime_error("field CSV: empty input");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != "x,y1,y2,value,pi1,pi2,theta1,theta2")
        throw std::runtime_error("field CSV: unexpected header '" + line + "'");
    struct Row {
        double v[8];
    };
    std::vector<Row> rows;
    std::set<double> xs, y1s, y2s;
    int lineno = 1;
    while (std::getline(is, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        Row row{};
        std::stringstream ss(line);
        std::string cell;
        int c = 0;
        while (std::getline(ss, cell, ',')) {
            if (c >= 8) throw std::runtime_error("field CSV line " + std::to_string(lineno) + ": too many columns");
            try {
                std::size_t used = 0;
                row.v[c] = std::stod(cell, &used);
                if (used != cell.size()) throw std::invalid_argument(cell);
            } catch (const std::exception&) {
                throw std::runtime_error("field CSV line " + std::to_string(lineno) + ": bad number '" + cell + "'");
            }
            if (!std::isfinite(row.v[c]))
                throw std::runtime_error("field CSV line " + std::to_string(lineno) + ": non-finite value");
            ++c;
        }
        if (c != 8) throw std::runtime_error("field CSV line " + std::to_string(lineno) + ": expected 8 columns");
        xs.insert(row.v[0]);
        y1s.insert(row.v[1]);
        y2s.insert(row.v[2]);
        rows.push_back(row);
    }
    if (xs.size() < 3 || y1s.size() < 3 || y2s.size() < 3)
        throw std::runtime_error("field CSV: fewer than 3 nodes on some axis");
    if (rows.size() != xs.size() * y1s.size() * y2s.size())
        throw std::runtime_error("field CSV: rows do not form a tensor grid");

    LoadedField out;
    Grid& g = out.grid;
    g.xs.assign(xs.begin(), xs.end());
    g.y1s.assign(y1s.begin(), y1s.end());
    g.y2s.assign(y2s.begin(), y2s.end());
    g.nx = static_cast<int>(g.xs.size());
    g.ny1 = static_cast<int>(g.y1s.size());
    g.ny2 = static_cast<int>(g.y2s.size());
    g.hx = (g.xs.back() - g.xs.front()) / (g.nx - 1);
    g.hy1 = (g.y1s.back() - g.y1s.front()) / (g.ny1 - 1);
    g.hy2 = (g.y2s.back() - g.y2s.front()) / (g.ny2 - 1);

    auto pos = [](const std::vector<double>& axis, double v) {
        return static_cast<int>(std::lower_bound(axis.begin(), axis.end(), v) - axis.begin());
    };
    out.field = DiscreteField(g.size(), std::numeric_limits<double>::quiet_NaN());
    std::vector<Vec2> pi(g.size()), theta(g.size());
    for (const auto& row : rows) {
        const std::size_t n = g.index(pos(g.xs, row.v[0]), pos(g.y1s, row.v[1]), pos(g.y2s, row.v[2]));
        if (!std::isnan(out.field[n])) throw std::runtime_error("field CSV: duplicate node");
        out.field[n] = row.v[3];
        pi[n] = Vec2(row.v[4], row.v[5]);
        theta[n] = Vec2(row.v[6], row.v[7]);
    }
    out.policy = PolicyField(g, std::move(pi), std::move(theta));
    return out;
}

}  // namespace hwm
