#include "hwm/model.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <limits>

namespace hwm {

namespace {

bool all_finite(const Vec2& v) { return v.allFinite(); }

bool norm_lex_less(const Vec2& a, const Vec2& b) {
    const double na = a.squaredNorm();
    const double nb = b.squaredNorm();
    if (na != nb) return na < nb;
    if (a[0] != b[0]) return a[0] < b[0];
    return a[1] < b[1];
}

}  // namespace

ControlSet ControlSet::box(Vec2 lo, Vec2 hi, int lattice_per_axis) {
    if (!all_finite(lo) || !all_finite(hi) || lo[0] > 0 || lo[1] > 0 || hi[0] < 0 || hi[1] < 0)
        throw ValidationError("control_set", "box must be finite and contain (0,0)");
    if (lattice_per_axis < 1 || lattice_per_axis % 2 == 0)
        throw ValidationError("pi_lattice", "lattice count per axis must be a positive odd integer");

    ControlSet s;
    s.kind_ = Kind::Box;
    s.lo_ = lo;
    s.hi_ = hi;
    s.lattice_ = lattice_per_axis;
    s.points_.clear();

    // Each half-axis gets (n-1)/2 uniform steps so the origin is a node even
    // for asymmetric boxes.
    const int half = (lattice_per_axis - 1) / 2;
    auto axis = [&](int a) {
        std::vector<double> v;
        if (half == 0) return std::vector<double>{0.0};
        for (int k = half; k >= 1; --k) v.push_back(lo[a] * k / half);
        v.push_back(0.0);
        for (int k = 1; k <= half; ++k) v.push_back(hi[a] * k / half);
        v.erase(std::unique(v.begin(), v.end()), v.end());
        return v;
    };
    for (double a : axis(0))
        for (double b : axis(1)) s.points_.emplace_back(a, b);
    std::sort(s.points_.begin(), s.points_.end(), norm_lex_less);
    return s;
}

ControlSet ControlSet::finite(std::vector<Vec2> points) {
    ControlSet s;
    s.kind_ = Kind::Finite;
    for (const auto& pt : points)
        if (!pt.allFinite()) throw ValidationError("control_set", "non-finite control point");
    if (std::none_of(points.begin(), points.end(), [](const Vec2& v) { return v.isZero(0); }))
        points.push_back(Vec2::Zero());
    std::sort(points.begin(), points.end(), norm_lex_less);
    points.erase(std::unique(points.begin(), points.end()), points.end());
    s.points_ = std::move(points);
    s.lo_ = s.points_.front();
    s.hi_ = s.points_.front();
    for (const auto& pt : s.points_) {
        s.lo_ = s.lo_.cwiseMin(pt);
        s.hi_ = s.hi_.cwiseMax(pt);
    }
    s.lattice_ = static_cast<int>(s.points_.size());
    return s;
}

Vec2 ControlSet::clamp(const Vec2& pi) const { return pi.cwiseMax(lo_).cwiseMin(hi_); }

bool ControlSet::contains(const Vec2& pi, double tol) const {
    if (kind_ == Kind::Box)
        return (pi.array() >= lo_.array() - tol).all() && (pi.array() <= hi_.array() + tol).all();
    return std::any_of(points_.begin(), points_.end(),
                       [&](const Vec2& v) { return (v - pi).lpNorm<Eigen::Infinity>() <= tol; });
}

AmbiguitySet AmbiguitySet::ball(double radius) {
    if (!(radius >= 0.0) || !std::isfinite(radius))
        throw ValidationError("theta_radius", "must be finite and >= 0");
    AmbiguitySet s(Kind::Ball);
    s.radius_ = radius;
    return s;
}

AmbiguitySet AmbiguitySet::box(Vec2 lo, Vec2 hi) {
    if (!lo.allFinite() || !hi.allFinite() || lo[0] > 0 || lo[1] > 0 || hi[0] < 0 || hi[1] < 0)
        throw ValidationError("theta_box", "box must be finite and contain (0,0)");
    AmbiguitySet s(Kind::Box);
    s.lo_ = lo;
    s.hi_ = hi;
    return s;
}

Vec2 AmbiguitySet::project(const Vec2& theta) const {
    switch (kind_) {
        case Kind::Zero:
            return Vec2::Zero();
        case Kind::Unconstrained:
            return theta;
        case Kind::Box:
            return theta.cwiseMax(lo_).cwiseMin(hi_);
        case Kind::Ball: {
            const double n = theta.norm();
            return n <= radius_ ? theta : Vec2(theta * (radius_ / n));
        }
    }
    return Vec2::Zero();
}

bool AmbiguitySet::contains(const Vec2& theta, double tol) const {
    return (project(theta) - theta).norm() <= tol;
}

DerivedParams validate_params(const MarketParams& p) {
    auto positive = [](double v, const char* name) {
        if (!std::isfinite(v) || !(v > 0)) throw ValidationError(name, "must be finite and > 0");
    };
    positive(p.r, "r");
    positive(p.c, "c");
    positive(p.lambda_d, "lambda_d");
    positive(p.epsilon, "epsilon");
    if (!std::isfinite(p.R) || p.R < 0) throw ValidationError("R", "must be finite and >= 0");
    if (!(p.R < p.c / p.r)) throw ValidationError("R", "ruin level must satisfy R < c/r");
    if (!p.mu.allFinite() || (p.mu.array() < 0).any())
        throw ValidationError("mu", "fund drifts must be finite and >= 0");
    if (!p.mu_b.allFinite()) throw ValidationError("mu_b", "must be finite");
    if (!p.sigma_b.allFinite()) throw ValidationError("sigma_b", "must be finite");
    if (!p.q.allFinite() || (p.q.array() < 0).any())
        throw ValidationError("q", "fee rates must be finite and >= 0");
    if (!p.sigma.allFinite() || std::abs(p.sigma.determinant()) < kSigmaDetTolerance)
        throw ValidationError("sigma", "volatility matrix must be invertible");

    DerivedParams d;
    d.mu_r_delta = p.mu - Vec2::Constant(p.r);
    d.mu_b_delta = p.mu - p.mu_b;
    d.sigma_b_delta = p.sigma - p.sigma_b;
    d.cov_inv = (p.sigma * p.sigma.transpose()).inverse();
    d.sharpe = 0.5 * d.mu_r_delta.dot(d.cov_inv * d.mu_r_delta);
    d.kappa = kappa_from(p.r, p.lambda_d, d.sharpe);
    return d;
}

double kappa_from(double r, double lambda_d, double sharpe) {
    const double b = r + lambda_d + sharpe;
    const double disc = b * b - 4.0 * r * lambda_d;
    // disc >= (r - lambda_d)^2 >= 0 whenever sharpe >= 0.
    return (b + std::sqrt(std::max(disc, 0.0))) / (2.0 * r);
}

double kappa(const MarketParams& p) { return validate_params(p).kappa; }

double frictionless_value(const MarketParams& p, const DerivedParams& d, double x) {
    if (!(x >= p.R)) throw ValidationError("x", "wealth below the ruin level");
    if (x >= p.safe_level()) return 0.0;
    return std::pow((p.c - p.r * x) / (p.c - p.r * p.R), d.kappa);
}

double frictionless_value(const MarketParams& p, double x) {
    return frictionless_value(p, validate_params(p), x);
}

Vec2 frictionless_policy(const MarketParams& p, const DerivedParams& d, double x) {
    if (!(d.kappa > 1.0)) throw std::logic_error("frictionless_policy: kappa must exceed 1");
    const double gap = std::max(p.c - p.r * x, 0.0);
    return d.cov_inv * d.mu_r_delta * (gap / (p.r * (d.kappa - 1.0)));
}

double no_invest_value(const MarketParams& p, double x) {
    if (!(x >= p.R) || !(x <= p.safe_level()))
        throw ValidationError("x", "wealth outside [R, c/r]");
    return std::pow((p.c - p.r * x) / (p.c - p.r * p.R), p.lambda_d / p.r);
}

Vec3 drift_b(const MarketParams& p, const DerivedParams& d, const Vec2& pi, const Vec2& theta) {
    Vec3 b;
    b[0] = pi.dot(d.mu_r_delta + p.sigma * theta);
    const Vec2 yb = -(pi.asDiagonal() * (d.mu_b_delta + d.sigma_b_delta * theta));
    b[1] = yb[0];
    b[2] = yb[1];
    return b;
}

Eigen::Matrix<double, 3, 2> noise_loading(const DerivedParams& d, const MarketParams& p,
                                          const Vec2& pi) {
    Eigen::Matrix<double, 3, 2> g;
    g.row(0) = pi.transpose() * p.sigma;
    g.bottomRows<2>() = -(pi.asDiagonal() * d.sigma_b_delta);
    return g;
}

Mat3 diffusion_matrix(const MarketParams& p, const DerivedParams& d, const Vec2& pi) {
    const auto g = noise_loading(d, p, pi);
    return g * g.transpose();
}

Vec2 theta_coefficient(const MarketParams& p, const DerivedParams& d, const Vec2& pi,
                       const Vec3& grad) {
    const Vec2 grad_y(grad[1], grad[2]);
    return p.sigma.transpose() * pi * grad[0] -
           d.sigma_b_delta.transpose() * (pi.asDiagonal() * grad_y);
}

Vec2 optimal_theta(const AmbiguitySet& set, double epsilon, const Vec2& g) {
    // Separable concave quadratic with unconstrained maximiser eps*g; both the
    // box clamp and the radial projection are exact maximisers on their sets.
    return set.project(epsilon * g);
}

ThetaSup inner_sup_theta(const MarketParams& p, const DerivedParams& d, const Vec2& pi,
                         const Jet& jet) {
    const Vec2 theta = optimal_theta(p.ambiguity_set, p.epsilon, theta_coefficient(p, d, pi, jet.grad));
    const double value = -theta.squaredNorm() / (2.0 * p.epsilon) +
                         drift_b(p, d, pi, theta).dot(jet.grad) +
                         0.5 * (diffusion_matrix(p, d, pi) * jet.hess).trace();
    return {theta, value};
}

HamiltonianValue hamiltonian(const MarketParams& p, const DerivedParams& d, const State& z,
                             const Jet& jet) {
    const auto& cands = p.control_set.candidates();
    if (cands.empty()) throw ValidationError("control_set", "empty control grid");
    double best = std::numeric_limits<double>::infinity();
    Vec2 best_pi = Vec2::Zero();
    Vec2 best_theta = Vec2::Zero();
    for (const auto& pi : cands) {
        const auto s = inner_sup_theta(p, d, pi, jet);
        if (s.value < best) {
            best = s.value;
            best_pi = pi;
            best_theta = s.theta;
        }
    }
    const double f = p.lambda_d * jet.value - (p.r * z.x - p.c) * jet.grad[0] - best;
    return {f, best_pi, best_theta};
}

double oblique_b(const MarketParams& p, int fund, const Jet& jet) {
    assert(fund == 1 || fund == 2);
    const double q = p.q[fund - 1];
    return q * jet.grad[0] - (1.0 + q) * jet.grad[fund];
}

}  // namespace hwm
