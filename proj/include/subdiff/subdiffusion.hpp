#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <ostream>
#include <span>
#include <vector>

#include "errors.hpp"
#include "rng.hpp"
#include "subordinator.hpp"

namespace subdiff {

// A realized sub-diffusion path X_t = X_0 + B_{L_{(t-a)^+}} on an observation
// grid, together with the clock that produced it. X is constant wherever L is
// constant; conditional on the clock, increments are centered Gaussian with
// variance (Delta L) per coordinate.
struct SubdiffusionPath {
    std::vector<double> grid;
    InverseClockSample clock;
    int dim = 1;
    std::vector<double> values; // grid.size() x dim, row-major
    std::uint64_t seed = 0;     // RNG lineage
    std::uint64_t stream = 0;

    std::size_t points() const { return grid.size(); }
    double value(std::size_t i, int j) const { return values[i * static_cast<std::size_t>(dim) + static_cast<std::size_t>(j)]; }
    std::span<const double> point(std::size_t i) const {
        return {values.data() + i * static_cast<std::size_t>(dim), static_cast<std::size_t>(dim)};
    }
    // Increments over grid step i -> i+1.
    double dL(std::size_t i) const { return clock.L[i + 1] - clock.L[i]; }
    double dX(std::size_t i, int j) const { return value(i + 1, j) - value(i, j); }
};

// State of the Markov pair (X_t, R_t): position plus remaining holding time.
struct MarkovPairState {
    std::vector<double> x;
    double r = 0.0;
};

namespace detail {

inline SubdiffusionPath drive_brownian(const SubordinatorSpec& spec, InverseClockSample clock,
                                       std::span<const double> x0, int d, PathRng& rng) {
    (void)spec;
    SubdiffusionPath p;
    p.grid = clock.grid;
    p.dim = d;
    p.seed = rng.seed();
    p.stream = rng.stream();
    p.values.assign(p.grid.size() * static_cast<std::size_t>(d), 0.0);
    for (int j = 0; j < d; ++j) p.values[static_cast<std::size_t>(j)] = x0.empty() ? 0.0 : x0[static_cast<std::size_t>(j)];
    for (std::size_t i = 1; i < p.grid.size(); ++i) {
        const double dl = clock.L[i] - clock.L[i - 1];
        const double sd = dl > 0.0 ? std::sqrt(dl) : 0.0;
        for (int j = 0; j < d; ++j) {
            const double prev = p.values[(i - 1) * static_cast<std::size_t>(d) + static_cast<std::size_t>(j)];
            const double inc = sd > 0.0 ? sd * rng.normal() : 0.0;
            p.values[i * static_cast<std::size_t>(d) + static_cast<std::size_t>(j)] = prev + inc;
        }
    }
    p.clock = std::move(clock);
    return p;
}

} // namespace detail

// Draw a clock via sample_inverse_path, then Brownian increments with
// variances Delta L. Quadratic variation of each coordinate equals L on the
// grid by construction.
inline SubdiffusionPath sample_subdiffusion(const SubordinatorSpec& spec, double a, int d,
                                            const std::vector<double>& grid, PathRng& rng,
                                            const PassageOptions& opt = {}) {
    if (d < 1) throw SpecError("sample_subdiffusion: driver dimension must be >= 1");
    auto clock = sample_inverse_path(spec, grid, a, rng, opt);
    return detail::drive_brownian(spec, std::move(clock), {}, d, rng);
}

// Restart the Markov pair from (x, r): a fresh path whose clock is
// L_{(s - r)^+} in the shifted time s, started at X_0 = x.
inline SubdiffusionPath restart_from(const MarkovPairState& state, const SubordinatorSpec& spec,
                                     int d, const std::vector<double>& grid, PathRng& rng,
                                     const PassageOptions& opt = {}) {
    if (state.r < 0.0) throw SpecError("restart_from: holding time r must be >= 0");
    if (!state.x.empty() && static_cast<int>(state.x.size()) != d)
        throw SpecError("restart_from: state dimension mismatch");
    auto clock = sample_inverse_path(spec, grid, state.r, rng, opt);
    return detail::drive_brownian(spec, std::move(clock), state.x, d, rng);
}

inline MarkovPairState state_at(const SubdiffusionPath& p, std::size_t i) {
    MarkovPairState s;
    const auto pt = p.point(i);
    s.x.assign(pt.begin(), pt.end());
    s.r = p.clock.R[i];
    return s;
}

// Observation grid on [0, T] with n uniform steps, refined around the wake-up
// time a to capture the kink of (t-a)^+.
inline std::vector<double> make_grid(double horizon, std::size_t n, double wake_up = 0.0) {
    if (!(horizon > 0.0) || n == 0) throw SpecError("make_grid: need horizon > 0 and n >= 1");
    std::vector<double> g;
    g.reserve(n + 8);
    for (std::size_t i = 0; i <= n; ++i) g.push_back(horizon * static_cast<double>(i) / static_cast<double>(n));
    if (wake_up > 0.0 && wake_up < horizon) {
        g.push_back(wake_up);
        const double rem = horizon - wake_up;
        for (double f : {1e-4, 1e-3, 1e-2}) g.push_back(wake_up + rem * f);
    }
    std::sort(g.begin(), g.end());
    g.erase(std::unique(g.begin(), g.end()), g.end());
    return g;
}

// CSV export: t, clock value, overshoot, then one column per coordinate.
// Time columns share the market time unit; X is dimensionless.
inline void export_csv(const SubdiffusionPath& p, std::ostream& os) {
    os << "t,L,R";
    for (int j = 1; j <= p.dim; ++j) os << ",X_" << j;
    os << "\n";
    for (std::size_t i = 0; i < p.points(); ++i) {
        os << p.grid[i] << ',' << p.clock.L[i] << ',' << p.clock.R[i];
        for (int j = 0; j < p.dim; ++j) os << ',' << p.value(i, j);
        os << "\n";
    }
}

} // namespace subdiff
