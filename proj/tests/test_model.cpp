#include "hwm/model.hpp"
#include "support.hpp"

#include <doctest.h>

#include <Eigen/Eigenvalues>

#include <cmath>
#include <random>

using namespace hwm;
using hwm::testing::example_market;

namespace {

double quadratic_residual(double r, double lambda, double s, double k) {
    return r * k * k - (r + lambda + s) * k + lambda;
}

// Root by bisection on [max(1, lambda/r), upper]; the quadratic is negative
// between its roots and positive beyond the larger one.
double bisect_larger_root(double r, double lambda, double s) {
    double lo = std::max(1.0, lambda / r);
    double hi = lo + 1.0;
    while (quadratic_residual(r, lambda, s, hi) < 0) hi *= 2.0;
    for (int i = 0; i < 200; ++i) {
        const double mid = 0.5 * (lo + hi);
        (quadratic_residual(r, lambda, s, mid) < 0 ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

MarketParams frictionless_market() {
    MarketParams p = example_market();
    p.q = Vec2::Zero();
    p.ambiguity_set = AmbiguitySet::zero();
    return p;
}

Jet y_flat_jet(double v, double vx, double vxx) {
    Jet j;
    j.value = v;
    j.grad = Vec3(vx, 0, 0);
    j.hess(0, 0) = vxx;
    return j;
}

Jet random_jet(std::mt19937_64& rng) {
    std::normal_distribution<double> n;
    Jet j;
    j.value = std::abs(n(rng));
    j.grad = Vec3(n(rng), n(rng), n(rng));
    Mat3 a;
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) a(r, c) = n(rng);
    j.hess = 0.5 * (a + a.transpose());
    return j;
}

// A^{pi,theta}[phi] written out term by term.
double generator(const MarketParams& p, const DerivedParams& d, const Vec2& pi, const Vec2& theta,
                 const Jet& jet) {
    return -theta.squaredNorm() / (2.0 * p.epsilon) + drift_b(p, d, pi, theta).dot(jet.grad) +
           0.5 * (diffusion_matrix(p, d, pi) * jet.hess).trace();
}

}  // namespace

TEST_CASE("sharpe term of the worked example by explicit inversion") {
    const MarketParams p = example_market();
    const DerivedParams d = validate_params(p);
    const double oracle = hwm::testing::sharpe_by_hand(0.02, 0.07, 0.05, 0.20, 0.0, 0.05, 0.15);
    CHECK(oracle == doctest::Approx(0.0380556).epsilon(1e-6));
    CHECK(d.sharpe == doctest::Approx(oracle).epsilon(1e-12));
    CHECK(d.mu_r_delta.isApprox(Vec2(0.05, 0.03)));
    CHECK(d.kappa == doctest::Approx(4.45371).epsilon(1e-5));
}

TEST_CASE("sharpe vanishes without excess return") {
    MarketParams p = example_market();
    p.sigma = Mat2::Identity();
    p.mu = Vec2::Constant(p.r);
    const DerivedParams d = validate_params(p);
    CHECK(d.sharpe == 0.0);
    CHECK(d.kappa == doctest::Approx(p.lambda_d / p.r).epsilon(1e-14));
    CHECK(frictionless_policy(p, d, 25.0).isZero(0));
}

TEST_CASE("kappa matches a bisection root and the worked value") {
    CHECK(kappa_from(0.02, 0.04, 0.09) == doctest::Approx(7.2231).epsilon(1e-4));
    CHECK(kappa_from(0.02, 0.04, 0.09) == doctest::Approx(bisect_larger_root(0.02, 0.04, 0.09)).epsilon(1e-12));
    CHECK(kappa_from(0.02, 0.04, 0.0) == doctest::Approx(2.0).epsilon(1e-14));
    const double k = kappa_from(0.02, 0.04, 0.09);
    CHECK(std::pow(0.5, k) == doctest::Approx(6.70e-3).epsilon(1e-2));
}

TEST_CASE("kappa solves the quadratic and exceeds lambda/r for random parameters") {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(0.001, 0.2);
    for (int i = 0; i < 1000; ++i) {
        const double r = u(rng), l = u(rng), s = u(rng);
        const double k = kappa_from(r, l, s);
        CHECK(std::abs(quadratic_residual(r, l, s, k)) < 1e-12 * std::max(1.0, r * k * k));
        CHECK(k > l / r);
        CHECK(k > 1.0);
    }
}

TEST_CASE("frictionless value solves its ODE at interior points") {
    const MarketParams p = example_market();
    const DerivedParams d = validate_params(p);
    const double k = d.kappa;
    for (int i = 1; i <= 100; ++i) {
        const double x = p.R + (p.safe_level() - p.R) * i / 101.0;
        const double u = frictionless_value(p, d, x);
        const double g = p.c - p.r * x;
        const double u1 = -p.r * k * u / g;
        const double u2 = p.r * p.r * k * (k - 1) * u / (g * g);
        // lambda U + sharpe U'^2 / U'' + (c - r x) U' = 0
        const double res = p.lambda_d * u + d.sharpe * u1 * u1 / u2 + g * u1;
        CHECK(std::abs(res) < 1e-10);
    }
}

TEST_CASE("closed forms at the boundaries and the worked point") {
    const MarketParams p = example_market();
    CHECK(frictionless_value(p, p.R) == 1.0);
    CHECK(frictionless_value(p, p.safe_level()) == 0.0);
    CHECK(frictionless_value(p, 80.0) == 0.0);
    CHECK_THROWS_AS(frictionless_value(p, p.R - 1.0), ValidationError);
    CHECK(no_invest_value(p, p.R) == 1.0);
    CHECK(no_invest_value(p, p.safe_level()) == 0.0);
    CHECK(no_invest_value(p, 30.0) == doctest::Approx(0.25).epsilon(1e-14));
    CHECK_THROWS_AS(no_invest_value(p, 60.0), ValidationError);
    MarketParams fast = p;
    fast.lambda_d = 40.0;
    CHECK(no_invest_value(fast, 11.0) < 1e-20);
    CHECK(no_invest_value(fast, 30.0) < 1e-300);
}

TEST_CASE("U is below p, decreasing and convex") {
    const MarketParams p = example_market();
    const DerivedParams d = validate_params(p);
    CHECK(d.kappa > p.lambda_d / p.r);
    const int n = 400;
    const double h = (p.safe_level() - p.R) / n;
    for (int i = 0; i <= n; ++i) {
        const double x = p.R + i * h;
        CHECK(frictionless_value(p, d, x) <= no_invest_value(p, x) + 1e-15);
        if (i > 0) CHECK(frictionless_value(p, d, x) <= frictionless_value(p, d, x - h));
        if (i > 0 && i < n)
            CHECK(frictionless_value(p, d, x + h) - 2 * frictionless_value(p, d, x) +
                      frictionless_value(p, d, x - h) >= -1e-15);
    }
}

TEST_CASE("validation names the offending field") {
    auto field_of = [](MarketParams p) {
        try {
            validate_params(p);
        } catch (const ValidationError& e) {
            return e.field();
        }
        return std::string("none");
    };
    MarketParams p = example_market();
    CHECK(field_of(p) == "none");
    p.R = 60.0;
    CHECK(field_of(p) == "R");
    p = example_market();
    p.sigma << 1, 2, 2, 4;
    CHECK(field_of(p) == "sigma");
    p = example_market();
    p.q = Vec2(-0.1, 0.2);
    CHECK(field_of(p) == "q");
    p = example_market();
    p.epsilon = -1;
    CHECK(field_of(p) == "epsilon");
    p = example_market();
    p.lambda_d = -0.04;
    CHECK(field_of(p) == "lambda_d");
}

TEST_CASE("control sets contain the origin and order candidates by norm") {
    const ControlSet box = ControlSet::box(Vec2(-5, -5), Vec2(5, 5), 11);
    CHECK(box.candidates().size() == 121);
    CHECK(box.candidates().front().isZero(0));
    CHECK(box.contains(Vec2::Zero()));
    for (std::size_t i = 1; i < box.candidates().size(); ++i)
        CHECK(box.candidates()[i - 1].norm() <= box.candidates()[i].norm());
    const ControlSet fin = ControlSet::finite({Vec2(1, 2)});
    CHECK(fin.candidates().size() == 2);
    CHECK(fin.candidates().front().isZero(0));
    CHECK_THROWS_AS(ControlSet::box(Vec2(1, -1), Vec2(2, 1), 5), ValidationError);
    CHECK_THROWS_AS(ControlSet::box(Vec2(-1, -1), Vec2(1, 1), 4), ValidationError);
    CHECK(box.clamp(Vec2(9, -7)).isApprox(Vec2(5, -5)));
}

TEST_CASE("ambiguity sets contain zero and project") {
    CHECK(AmbiguitySet::zero().project(Vec2(3, 4)).isZero(0));
    CHECK(AmbiguitySet::ball(1.0).project(Vec2(3, 4)).isApprox(Vec2(0.6, 0.8)));
    CHECK(AmbiguitySet::box(Vec2(-0.1, -0.1), Vec2(0.1, 0.1)).project(Vec2(1, -2)).isApprox(Vec2(0.1, -0.1)));
    CHECK(AmbiguitySet::unconstrained().project(Vec2(3, 4)).isApprox(Vec2(3, 4)));
    for (auto s : {AmbiguitySet::zero(), AmbiguitySet::ball(0.5), AmbiguitySet::unconstrained(),
                   AmbiguitySet::box(Vec2(-1, 0), Vec2(0, 1))})
        CHECK(s.contains(Vec2::Zero()));
}

TEST_CASE("drift by direct substitution") {
    MarketParams p = example_market();
    p.mu_b = Vec2(0.02, 0.02);
    const DerivedParams d = validate_params(p);
    CHECK(drift_b(p, d, Vec2(1, 0), Vec2::Zero()).isApprox(Vec3(0.05, -0.05, 0)));
    CHECK(drift_b(p, d, Vec2::Zero(), Vec2(3, -1)).isZero(0));

    std::mt19937_64 rng(3);
    std::normal_distribution<double> n;
    for (int i = 0; i < 100; ++i) {
        const Vec2 pi(n(rng), n(rng)), t1(n(rng), n(rng)), t2(n(rng), n(rng));
        const Vec3 lhs = drift_b(p, d, pi, t1 + t2) - drift_b(p, d, pi, t2);
        const Vec3 rhs = drift_b(p, d, pi, t1) - drift_b(p, d, pi, Vec2::Zero());
        CHECK((lhs - rhs).norm() < 1e-12);
    }
}

TEST_CASE("diffusion matrix is a symmetric rank-2 Gram matrix") {
    const MarketParams p = example_market();
    const DerivedParams d = validate_params(p);
    CHECK(diffusion_matrix(p, d, Vec2::Zero()).isZero(0));
    std::mt19937_64 rng(11);
    std::normal_distribution<double> n(0.0, 3.0);
    for (int i = 0; i < 200; ++i) {
        const Mat3 a = diffusion_matrix(p, d, Vec2(n(rng), n(rng)));
        CHECK((a - a.transpose()).norm() == 0.0);
        Eigen::SelfAdjointEigenSolver<Mat3> es(a);
        CHECK(es.eigenvalues().minCoeff() >= -1e-12 * std::max(1.0, a.norm()));
        CHECK(std::abs(es.eigenvalues()[0]) <= 1e-10 * std::max(1.0, a.norm()));
    }
}

TEST_CASE("theta maximiser against a grid search") {
    auto search = [](const AmbiguitySet& set, double eps, const Vec2& g) {
        double best = -1e300;
        Vec2 arg = Vec2::Zero();
        for (int i = 0; i <= 6000; ++i)
            for (int j = 0; j <= 6000; j += 1) {
                const Vec2 t(-3.0 + 1e-3 * i, -3.0 + 1e-3 * j);
                if (!set.contains(t, 1e-12)) continue;
                const double v = -t.squaredNorm() / (2 * eps) + t.dot(g);
                if (v > best) best = v, arg = t;
            }
        return std::pair{arg, best};
    };
    const Vec2 g(1, -2);
    const auto [arg_u, best_u] = search(AmbiguitySet::unconstrained(), 0.5, g);
    const Vec2 t = optimal_theta(AmbiguitySet::unconstrained(), 0.5, g);
    CHECK(t.isApprox(Vec2(0.5, -1.0)));
    CHECK((t - arg_u).norm() < 2e-3);
    const double part = -t.squaredNorm() / (2 * 0.5) + t.dot(g);
    CHECK(part == doctest::Approx(1.25).epsilon(1e-14));
    CHECK(std::abs(part - best_u) < 1e-5);

    const AmbiguitySet box = AmbiguitySet::box(Vec2(-0.1, -0.1), Vec2(0.1, 0.1));
    const auto [arg_b, best_b] = search(box, 0.5, g);
    CHECK(optimal_theta(box, 0.5, g).isApprox(Vec2(0.1, -0.1)));
    CHECK((arg_b - Vec2(0.1, -0.1)).norm() < 1e-9);
    CHECK(optimal_theta(AmbiguitySet::unconstrained(), 0.5, Vec2::Zero()).isZero(0));
    CHECK(optimal_theta(AmbiguitySet::zero(), 0.5, g).isZero(0));
}

TEST_CASE("inner sup dominates theta = 0 and matches brute force on random jets") {
    MarketParams p = example_market();
    p.epsilon = 0.7;
    p.ambiguity_set = AmbiguitySet::ball(0.8);
    const DerivedParams d = validate_params(p);
    std::mt19937_64 rng(5);
    std::normal_distribution<double> n;
    for (int trial = 0; trial < 20; ++trial) {
        const Jet jet = random_jet(rng);
        const Vec2 pi(2 * n(rng), 2 * n(rng));
        const ThetaSup s = inner_sup_theta(p, d, pi, jet);
        CHECK(s.value >= generator(p, d, pi, Vec2::Zero(), jet) - 1e-12);
        CHECK(s.value == doctest::Approx(generator(p, d, pi, s.theta, jet)).epsilon(1e-12));
        double best = -1e300;
        for (int i = 0; i <= 400; ++i)
            for (int j = 0; j <= 400; ++j) {
                const Vec2 t(-0.8 + 4e-3 * i, -0.8 + 4e-3 * j);
                if (t.norm() <= 0.8) best = std::max(best, generator(p, d, pi, t, jet));
            }
        CHECK(s.value >= best - 1e-12);
        CHECK(s.value - best < 1e-5 * std::max(1.0, pi.squaredNorm()));
    }
}

TEST_CASE("hamiltonian vanishes on the never-invest value when K = {0}") {
    MarketParams p = example_market();
    p.control_set = ControlSet::zero();
    const DerivedParams d = validate_params(p);
    const double a = p.lambda_d / p.r;
    for (double x = 11.0; x < 50.0; x += 3.0) {
        const double v = no_invest_value(p, x);
        const double g = p.c - p.r * x;
        const Jet jet = y_flat_jet(v, -p.lambda_d * v / g, p.r * p.r * a * (a - 1) * v / (g * g));
        const HamiltonianValue h = hamiltonian(p, d, {x, 0.3, 1.2}, jet);
        CHECK(std::abs(h.f_value) < 1e-10);
        CHECK(h.pi.isZero(0));
    }
}

TEST_CASE("hamiltonian vanishes on U at the frictionless optimiser") {
    MarketParams p = frictionless_market();
    const DerivedParams d = validate_params(p);
    const double k = d.kappa;
    for (double x = 12.0; x < 50.0; x += 4.0) {
        p.control_set = ControlSet::finite({frictionless_policy(p, d, x), Vec2(1, 1), Vec2(-2, 3)});
        const double u = frictionless_value(p, d, x);
        const double g = p.c - p.r * x;
        const Jet jet = y_flat_jet(u, -p.r * k * u / g, p.r * p.r * k * (k - 1) * u / (g * g));
        const HamiltonianValue h = hamiltonian(p, d, {x, 0.0, 0.0}, jet);
        CHECK(std::abs(h.f_value) < 1e-8);
        CHECK((h.pi - frictionless_policy(p, d, x)).norm() < 1e-12);
        CHECK(h.theta.isZero(0));
    }
    CHECK(frictionless_policy(p, d, p.safe_level()).norm() < 1e-15);
}

TEST_CASE("frictionless optimiser beats a fine control search") {
    MarketParams p = frictionless_market();
    const DerivedParams d = validate_params(p);
    const double k = d.kappa;
    const double x = 25.0;
    const double u = frictionless_value(p, d, x);
    const double g = p.c - p.r * x;
    const Jet jet = y_flat_jet(u, -p.r * k * u / g, p.r * p.r * k * (k - 1) * u / (g * g));
    const Vec2 star = frictionless_policy(p, d, x);
    const double at_star = generator(p, d, star, Vec2::Zero(), jet);
    for (int i = -50; i <= 50; ++i)
        for (int j = -50; j <= 50; ++j) {
            const Vec2 pi = star + Vec2(0.2 * i, 0.2 * j);
            CHECK(generator(p, d, pi, Vec2::Zero(), jet) >= at_star - 1e-14);
        }
}

TEST_CASE("hamiltonian with K = {0} and L = {0} is the transport operator") {
    MarketParams p = example_market();
    p.control_set = ControlSet::zero();
    p.ambiguity_set = AmbiguitySet::zero();
    const DerivedParams d = validate_params(p);
    std::mt19937_64 rng(17);
    for (int i = 0; i < 50; ++i) {
        const Jet jet = random_jet(rng);
        const double x = 10.0 + i * 0.8;
        const double expect = p.lambda_d * jet.value - (p.r * x - p.c) * jet.grad[0];
        CHECK(hamiltonian(p, d, {x, 1.0, 2.0}, jet).f_value == expect);
    }
}

TEST_CASE("hamiltonian is degenerate elliptic") {
    MarketParams p = example_market();
    p.control_set = ControlSet::box(Vec2(-2, -2), Vec2(2, 2), 5);
    const DerivedParams d = validate_params(p);
    std::mt19937_64 rng(23);
    std::normal_distribution<double> n;
    for (int i = 0; i < 100; ++i) {
        Jet jet = random_jet(rng);
        const State z{20.0, 0.5, 0.5};
        const double f1 = hamiltonian(p, d, z, jet).f_value;
        Eigen::Matrix3d b;
        for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 3; ++c) b(r, c) = n(rng);
        Jet up = jet;
        up.hess += b * b.transpose();
        CHECK(hamiltonian(p, d, z, up).f_value <= f1 + 1e-12);
        Jet shifted = jet;
        shifted.hess += 0.3 * Mat3::Identity();
        CHECK(hamiltonian(p, d, z, shifted).f_value <= f1 + 1e-12);
    }
}

TEST_CASE("oblique operator") {
    MarketParams p = example_market();
    Jet jet;
    jet.grad = Vec3(1.0, 1.0, 0.0);
    CHECK(oblique_b(p, 1, jet) == doctest::Approx(-1.0).epsilon(1e-15));
    p.q = Vec2::Zero();
    jet.grad = Vec3(3.0, 0.0, 0.0);
    CHECK(oblique_b(p, 1, jet) == 0.0);
    p.q = Vec2(0.2, 0.3);
    jet.grad = Vec3(0.7, -0.4, 1.1);
    Jet twice = jet;
    twice.grad *= 2.0;
    for (int f : {1, 2}) CHECK(oblique_b(p, f, twice) == doctest::Approx(2 * oblique_b(p, f, jet)));
    CHECK(oblique_b(p, 2, jet) == doctest::Approx(0.3 * 0.7 - 1.3 * 1.1));
}
