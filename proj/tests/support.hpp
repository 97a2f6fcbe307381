#pragma once

#include "hwm/model.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>

namespace hwm::testing {

/// Market used throughout the worked examples.
inline MarketParams example_market() { return MarketParams{}; }

/// Sharpe term by explicit 2x2 inversion, no linear algebra library.
inline double sharpe_by_hand(double r, double mu1, double mu2, double s11, double s12, double s21,
                             double s22) {
    const double a = s11 * s11 + s12 * s12;
    const double b = s11 * s21 + s12 * s22;
    const double d = s21 * s21 + s22 * s22;
    const double det = a * d - b * b;
    const double v1 = mu1 - r;
    const double v2 = mu2 - r;
    return 0.5 * (d * v1 * v1 - 2.0 * b * v1 * v2 + a * v2 * v2) / det;
}

/// Larger root of r k^2 - (r + lambda + s) k + lambda by the quadratic formula.
inline double larger_root(double r, double lambda, double s) {
    const double b = r + lambda + s;
    return (b + std::sqrt(b * b - 4.0 * r * lambda)) / (2.0 * r);
}

inline std::filesystem::path scratch_dir(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / ("hwm-test-" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

inline std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace hwm::testing
