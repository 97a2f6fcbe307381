#pragma once

// Finite-difference solver for the HJB system
//
//   F[phi] = 0        interior nodes
//   B^i[phi] = 0      on y^i = 0 (both at the y1 = y2 = 0 line, see below)
//   phi = 1 / 0       on x = R / x = c/r (including their y = 0 edges)
//   d phi/d y^i = 0   on the artificial y^i = y_max faces
//
// Interior rows use upwind first differences chosen from the sign of the
// drift of each candidate control, central second differences and the
// seven-point positive-coefficient cross stencil. Where the raw diffusion
// matrix is not diagonally dominant on the mesh, its diagonal is raised to
// the smallest dominant value (first-order artificial diffusion), so every
// assembled row is monotone.
//
// On the y1 = y2 = 0 line the row imposes B^1 + B^2 = 0. The envelope
// residual reported there is the distance of zero from
// [min(B^1, B^2), max(B^1, B^2)], which vanishes for every solution of that row.

#include "hwm/dynamics.hpp"
#include "hwm/grid.hpp"
#include "hwm/model.hpp"

#include <array>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace hwm {

enum class LinearSolver { BiCGSTAB, SparseLU, Jacobi };

LinearSolver parse_linear_solver(const std::string& name);
std::string to_string(LinearSolver s);

struct SolverConfig {
    double tol = 1e-8;
    int max_iterations = 200;
    LinearSolver linear_solver = LinearSolver::BiCGSTAB;
    double linear_tol = 1e-13;
    int max_sweeps = 200000;
    double relaxation = 1.0;  // Jacobi damping factor in (0, 1]
    int pi_lattice = 0;       // > 0 re-enumerates a box control set per axis
    bool monotone_augmentation = true;
    int threads = 1;
};

void validate_solver_config(const SolverConfig& cfg);

/// Node roles; Dirichlet takes precedence over the oblique faces, which take
/// precedence over the artificial top faces.
enum class NodeKind : std::uint8_t {
    Interior,
    DirichletRuin,
    DirichletSafe,
    Oblique1,
    Oblique2,
    ObliqueCorner,
    Top1,
    Top2,
    TopCorner,
};

NodeKind classify(const Grid& g, int i, int j, int k);

struct ResidualField {
    std::vector<double> values;  // row residual per node
    double interior = 0.0;       // sup |F_h|
    double b1 = 0.0;             // sup |B^1_h| on y1 = 0 (corner line excluded)
    double b2 = 0.0;             // sup |B^2_h| on y2 = 0 (corner line excluded)
    double corner = 0.0;         // sup |B^1_h + B^2_h| on y1 = y2 = 0
    double corner_envelope = 0.0;
    double dirichlet = 0.0;
    double neumann = 0.0;

    double combined() const;
};

struct SolveReport {
    int iterations = 0;
    bool converged = false;
    double residual_interior = 0.0;
    double residual_b1 = 0.0;
    double residual_b2 = 0.0;
    double residual_corner = 0.0;
    double residual_corner_envelope = 0.0;
    double residual_dirichlet = 0.0;
    double residual_neumann = 0.0;
    std::vector<double> residual_history;
    std::vector<std::int64_t> policy_changes;
    bool damping_engaged = false;
    bool diag_dominance_ok = true;
    std::int64_t augmented_nodes = 0;
    std::int64_t linear_iterations = 0;
    bool linear_fallback_used = false;
    double wall_seconds = 0.0;
    std::string message;
};

/// Per-node optimal controls with trilinear interpolation. Dirichlet nodes
/// carry zero controls; the remaining boundary nodes carry the controls of
/// the nearest interior node.
class PolicyField {
public:
    PolicyField() = default;
    PolicyField(Grid grid, std::vector<Vec2> pi, std::vector<Vec2> theta);

    const Grid& grid() const noexcept { return grid_; }
    const std::vector<Vec2>& pi() const noexcept { return pi_; }
    const std::vector<Vec2>& theta() const noexcept { return theta_; }

    /// Controls at an arbitrary state, clamped into the model's sets. Zero at
    /// and beyond x = c/r.
    std::pair<Vec2, Vec2> at(const MarketParams& p, const State& z) const;

    /// Feedback policy for the simulator.
    Policy to_policy(const MarketParams& p) const;

private:
    std::pair<Vec2, Vec2> raw_at(const State& z) const;

    Grid grid_;
    std::vector<Vec2> pi_;
    std::vector<Vec2> theta_;
    std::vector<std::array<double, 4>> packed_;
};

struct SolveResult {
    DiscreteField field;
    PolicyField policy;
    SolveReport report;
};

/// The model with the solver's control lattice applied.
MarketParams solver_params(const MarketParams& p, const SolverConfig& cfg);

ResidualField assemble_residual(const DiscreteField& field, const MarketParams& p,
                                const Grid& grid, const SolverConfig& cfg = {});

SolveResult howard_solve(const MarketParams& p, const Grid& grid, const SolverConfig& cfg);

PolicyField extract_policy(const DiscreteField& field, const MarketParams& p, const Grid& grid,
                           const SolverConfig& cfg = {});

struct FaceStats {
    double b1_sup = 0.0;
    double b1_mean = 0.0;
    double b2_sup = 0.0;
    double b2_mean = 0.0;
    double corner_sup = 0.0;
    double corner_envelope_sup = 0.0;
    double ruin_face_sup = 0.0;  // sup |phi - 1| on x = R
    double safe_face_sup = 0.0;  // sup |phi| on x = c/r
};

FaceStats boundary_residuals(const DiscreteField& field, const MarketParams& p, const Grid& grid);

/// Largest violation of "non-increasing in x" along x grid lines (0 if monotone).
double max_x_increase(const DiscreteField& field, const Grid& grid);

// Artifact writers.
void write_field_csv(std::ostream& os, const Grid& grid, const DiscreteField& field,
                     const PolicyField& policy);
void write_slice_csv(std::ostream& os, const Grid& grid, const DiscreteField& field, int y2_index);
std::string report_json(const SolveReport& report);

struct LoadedField {
    Grid grid;
    DiscreteField field;
    PolicyField policy;
};

/// Reads a field CSV written by write_field_csv. Throws std::runtime_error on
/// malformed or non-tensor input.
LoadedField read_field_csv(std::istream& is);

}  // namespace hwm
