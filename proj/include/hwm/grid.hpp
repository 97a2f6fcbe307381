#pragma once

#include "hwm/model.hpp"

#include <array>
#include <cstddef>
#include <vector>

namespace hwm {

/// Uniform tensor grid over [R, c/r] x [0, y1_max] x [0, y2_max]. Node
/// (i, j, k) is stored at (i * ny1 + j) * ny2 + k.
struct Grid {
    int nx = 0;
    int ny1 = 0;
    int ny2 = 0;
    double hx = 0.0;
    double hy1 = 0.0;
    double hy2 = 0.0;
    std::vector<double> xs;
    std::vector<double> y1s;
    std::vector<double> y2s;

    std::size_t size() const noexcept {
        return static_cast<std::size_t>(nx) * ny1 * ny2;
    }
    std::size_t index(int i, int j, int k) const noexcept {
        return (static_cast<std::size_t>(i) * ny1 + j) * ny2 + k;
    }
    State node(int i, int j, int k) const { return {xs[i], y1s[j], y2s[k]}; }
    double y1_max() const { return y1s.back(); }
    double y2_max() const { return y2s.back(); }
};

/// Truncation height used when none is configured: ten one-year standard
/// deviations of wealth at the most extreme corner of the control box.
double default_y_max(const MarketParams& p);

/// Throws ValidationError for counts < 3 or y_max <= 0.
Grid build_grid(const MarketParams& p, int nx, int ny1, int ny2, double y1_max, double y2_max);
inline Grid build_grid(const MarketParams& p, int nx, int ny1, int ny2, double y_max) {
    return build_grid(p, nx, ny1, ny2, y_max, y_max);
}

/// Scalar value per grid node.
struct DiscreteField {
    std::vector<double> values;

    DiscreteField() = default;
    explicit DiscreteField(std::size_t n, double fill = 0.0) : values(n, fill) {}
    std::size_t size() const noexcept { return values.size(); }
    double& operator[](std::size_t i) { return values[i]; }
    double operator[](std::size_t i) const { return values[i]; }
};

/// Samples f(x, y1, y2) on every node.
template <class Fn>
DiscreteField sample_field(const Grid& g, Fn&& f) {
    DiscreteField out(g.size());
    for (int i = 0; i < g.nx; ++i)
        for (int j = 0; j < g.ny1; ++j)
            for (int k = 0; k < g.ny2; ++k) out[g.index(i, j, k)] = f(g.xs[i], g.y1s[j], g.y2s[k]);
    return out;
}

/// Corner nodes and trilinear weights of the cell holding z (clamped into the box).
struct CellWeights {
    std::array<std::size_t, 8> node{};
    std::array<double, 8> weight{};
};

CellWeights cell_weights(const Grid& g, const State& z);

/// Trilinear interpolation with the state clamped into the grid box.
double interpolate(const Grid& g, const std::vector<double>& values, const State& z);

}  // namespace hwm
