#include "hwm/grid.hpp"

#include <algorithm>
#include <cmath>

namespace hwm {

double default_y_max(const MarketParams& p) {
    const auto& cs = p.control_set;
    std::vector<Vec2> extremes;
    if (cs.kind() == ControlSet::Kind::Box) {
        for (double a : {cs.lo()[0], cs.hi()[0]})
            for (double b : {cs.lo()[1], cs.hi()[1]}) extremes.emplace_back(a, b);
    } else {
        extremes = cs.candidates();
    }
    double best = 0.0;
    for (const auto& pi : extremes) best = std::max(best, (p.sigma.transpose() * pi).norm());
    // With K = {0} the distances never move; any positive height will do.
    return best > 0.0 ? 10.0 * best : 1.0;
}

namespace {

std::vector<double> axis_nodes(double lo, double hi, int n) {
    std::vector<double> v(n);
    for (int i = 0; i < n; ++i) v[i] = lo + (hi - lo) * i / (n - 1);
    v.front() = lo;
    v.back() = hi;
    return v;
}

}  // namespace

Grid build_grid(const MarketParams& p, int nx, int ny1, int ny2, double y1_max, double y2_max) {
    if (nx < 3) throw ValidationError("nx", "at least 3 nodes required");
    if (ny1 < 3) throw ValidationError("ny1", "at least 3 nodes required");
    if (ny2 < 3) throw ValidationError("ny2", "at least 3 nodes required");
    if (!(y1_max > 0) || !std::isfinite(y1_max)) throw ValidationError("y_max", "must be > 0");
    if (!(y2_max > 0) || !std::isfinite(y2_max)) throw ValidationError("y_max", "must be > 0");
    if (!(p.R < p.safe_level())) throw ValidationError("R", "ruin level must satisfy R < c/r");

    Grid g;
    g.nx = nx;
    g.ny1 = ny1;
    g.ny2 = ny2;
    g.xs = axis_nodes(p.R, p.safe_level(), nx);
    g.y1s = axis_nodes(0.0, y1_max, ny1);
    g.y2s = axis_nodes(0.0, y2_max, ny2);
    g.hx = (p.safe_level() - p.R) / (nx - 1);
    g.hy1 = y1_max / (ny1 - 1);
    g.hy2 = y2_max / (ny2 - 1);
    return g;
}

CellWeights cell_weights(const Grid& g, const State& z) {
    auto locate = [](const std::vector<double>& axis, double h, double v, int& cell, double& w) {
        const int n = static_cast<int>(axis.size());
        const double t = std::clamp((v - axis.front()) / h, 0.0, static_cast<double>(n - 1));
        cell = std::min(static_cast<int>(t), n - 2);
        w = t - cell;
    };
    int i, j, k;
    double wx, wy, wz;
    locate(g.xs, g.hx, z.x, i, wx);
    locate(g.y1s, g.hy1, z.y1, j, wy);
    locate(g.y2s, g.hy2, z.y2, k, wz);
    CellWeights cw;
    int s = 0;
    for (int a = 0; a < 2; ++a)
        for (int b = 0; b < 2; ++b)
            for (int c = 0; c < 2; ++c, ++s) {
                cw.node[s] = g.index(i + a, j + b, k + c);
                cw.weight[s] = (a ? wx : 1 - wx) * (b ? wy : 1 - wy) * (c ? wz : 1 - wz);
            }
    return cw;
}

double interpolate(const Grid& g, const std::vector<double>& values, const State& z) {
    const CellWeights cw = cell_weights(g, z);
    double acc = 0.0;
    for (int s = 0; s < 8; ++s)
        if (cw.weight[s] != 0.0) acc += cw.weight[s] * values[cw.node[s]];
    return acc;
}

}  // namespace hwm
