#pragma once

// Model constants, closed-form benchmark solutions and the pointwise
// Hamiltonian shared by the grid solver, the simulator and the verifier.
//
// Conventions: the state is z = (x, y1, y2) with x the investor's wealth and
// y_i the distance of fund i's net profit to its (benchmark-adjusted)
// high-watermark. Row i of `sigma` is the volatility row of fund i.

#include <Eigen/Dense>

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace hwm {

using Vec2 = Eigen::Vector2d;
using Mat2 = Eigen::Matrix2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

/// Thrown by every input validation; `field()` names the offending key.
class ValidationError : public std::invalid_argument {
public:
    ValidationError(std::string field, const std::string& what)
        : std::invalid_argument(field + ": " + what), field_(std::move(field)), message_(what) {}
    const std::string& field() const noexcept { return field_; }
    const std::string& message() const noexcept { return message_; }

private:
    std::string field_;
    std::string message_;
};

/// Admissible investment positions. Always compact and always containing (0,0).
///
/// A box is enumerated on an odd per-axis lattice so that the origin is an
/// exact lattice point; a finite set is used as given (origin appended if
/// missing).
class ControlSet {
public:
    enum class Kind { Box, Finite };

    static ControlSet box(Vec2 lo, Vec2 hi, int lattice_per_axis);
    static ControlSet finite(std::vector<Vec2> points);
    static ControlSet zero() { return finite({Vec2::Zero()}); }

    Kind kind() const noexcept { return kind_; }
    Vec2 lo() const noexcept { return lo_; }
    Vec2 hi() const noexcept { return hi_; }
    int lattice_per_axis() const noexcept { return lattice_; }

    /// Candidate positions ordered by Euclidean norm, then lexicographically.
    /// The minimiser search takes the first candidate among equals, so ties
    /// resolve towards liquidation.
    const std::vector<Vec2>& candidates() const noexcept { return points_; }

    /// Nearest point of the convex hull box [lo, hi] (componentwise clamp).
    Vec2 clamp(const Vec2& pi) const;
    bool contains(const Vec2& pi, double tol = 1e-12) const;

private:
    Kind kind_ = Kind::Finite;
    Vec2 lo_ = Vec2::Zero();
    Vec2 hi_ = Vec2::Zero();
    int lattice_ = 1;
    std::vector<Vec2> points_{Vec2::Zero()};
};

/// Closed set of admissible drift distortions theta.
class AmbiguitySet {
public:
    enum class Kind { Zero, Ball, Box, Unconstrained };

    static AmbiguitySet zero() { return AmbiguitySet(Kind::Zero); }
    static AmbiguitySet unconstrained() { return AmbiguitySet(Kind::Unconstrained); }
    static AmbiguitySet ball(double radius);
    static AmbiguitySet box(Vec2 lo, Vec2 hi);

    Kind kind() const noexcept { return kind_; }
    double radius() const noexcept { return radius_; }
    Vec2 lo() const noexcept { return lo_; }
    Vec2 hi() const noexcept { return hi_; }

    /// Euclidean projection onto the set.
    Vec2 project(const Vec2& theta) const;
    bool contains(const Vec2& theta, double tol = 1e-12) const;

private:
    explicit AmbiguitySet(Kind k) : kind_(k) {}
    Kind kind_;
    double radius_ = 0.0;
    Vec2 lo_ = Vec2::Zero();
    Vec2 hi_ = Vec2::Zero();
};

struct MarketParams {
    double r = 0.02;         // interest rate, 1/year
    double c = 1.0;          // consumption rate
    double R = 10.0;         // ruin level, R < c/r
    double lambda_d = 0.04;  // default intensity, 1/year
    Vec2 mu{0.07, 0.05};
    Mat2 sigma = (Mat2() << 0.20, 0.0, 0.05, 0.15).finished();
    Vec2 mu_b{0.03, 0.02};
    Mat2 sigma_b = (Mat2() << 0.15, 0.0, 0.05, 0.10).finished();
    Vec2 q{0.2, 0.2};
    double epsilon = 1.0;
    ControlSet control_set = ControlSet::box(Vec2(-5, -5), Vec2(5, 5), 11);
    AmbiguitySet ambiguity_set = AmbiguitySet::unconstrained();

    double safe_level() const noexcept { return c / r; }
};

struct DerivedParams {
    Vec2 mu_r_delta;      // mu - r 1
    Vec2 mu_b_delta;      // mu - mu_b
    Mat2 sigma_b_delta;   // sigma - sigma_b
    Mat2 cov_inv;         // (sigma sigma^T)^{-1}
    double sharpe = 0.0;  // 1/2 mu_r_delta^T (sigma sigma^T)^{-1} mu_r_delta
    double kappa = 0.0;
};

struct State {
    double x = 0.0;
    double y1 = 0.0;
    double y2 = 0.0;
};

/// Value, gradient (d/dx, d/dy1, d/dy2) and Hessian of a test function at a point.
struct Jet {
    double value = 0.0;
    Vec3 grad = Vec3::Zero();
    Mat3 hess = Mat3::Zero();
};

constexpr double kSigmaDetTolerance = 1e-12;

/// Validates every model constant and returns the derived quantities.
/// Throws ValidationError naming the first invalid field.
DerivedParams validate_params(const MarketParams& p);

/// Larger root of r k^2 - (r + lambda_d + sharpe) k + lambda_d = 0.
double kappa_from(double r, double lambda_d, double sharpe);
double kappa(const MarketParams& p);

/// Minimal ruin probability without fees: ((c - r x)/(c - r R))^kappa on
/// [R, c/r], zero beyond. Throws for x < R.
double frictionless_value(const MarketParams& p, const DerivedParams& d, double x);
double frictionless_value(const MarketParams& p, double x);

/// Unconstrained minimiser of the frictionless Hamiltonian at wealth x.
Vec2 frictionless_policy(const MarketParams& p, const DerivedParams& d, double x);

/// Ruin probability of the never-invest strategy: ((c - r x)/(c - r R))^(lambda_d / r).
double no_invest_value(const MarketParams& p, double x);

Vec3 drift_b(const MarketParams& p, const DerivedParams& d, const Vec2& pi, const Vec2& theta);

/// Rows of the noise loading G: [pi^T sigma; -diag(pi) sigma_b_delta].
Eigen::Matrix<double, 3, 2> noise_loading(const DerivedParams& d, const MarketParams& p,
                                          const Vec2& pi);
/// G G^T.
Mat3 diffusion_matrix(const MarketParams& p, const DerivedParams& d, const Vec2& pi);

/// Coefficient of theta in b[pi, theta]^T grad(phi).
Vec2 theta_coefficient(const MarketParams& p, const DerivedParams& d, const Vec2& pi,
                       const Vec3& grad);

/// Maximiser of -|theta|^2/(2 eps) + theta^T g over the ambiguity set.
Vec2 optimal_theta(const AmbiguitySet& set, double epsilon, const Vec2& g);

struct ThetaSup {
    Vec2 theta;
    double value;  // A^{pi, theta*}[phi] including the pi-only terms
};

ThetaSup inner_sup_theta(const MarketParams& p, const DerivedParams& d, const Vec2& pi,
                         const Jet& jet);

struct HamiltonianValue {
    double f_value;
    Vec2 pi;
    Vec2 theta;
};

/// F[phi](z) = lambda_d phi - (r x - c) phi_x - inf_pi sup_theta A^{pi,theta}[phi],
/// with the infimum taken over ControlSet::candidates().
HamiltonianValue hamiltonian(const MarketParams& p, const DerivedParams& d, const State& z,
                             const Jet& jet);

/// B^i[phi] = q^i phi_x - (1 + q^i) phi_{y^i}; `fund` is 1 or 2.
double oblique_b(const MarketParams& p, int fund, const Jet& jet);

}  // namespace hwm
