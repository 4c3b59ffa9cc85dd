#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <limits>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "errors.hpp"
#include "laplace.hpp"
#include "rng.hpp"

namespace subdiff {

// ---------------------------------------------------------------------------
// Specification
// ---------------------------------------------------------------------------

enum class SubKind { Deterministic, Stable, DriftedStable, General };

struct NullMeasure {};

// nu(dx) = beta x^{-1-beta} / Gamma(1-beta) dx, normalized so that the
// driftless Laplace exponent is exactly lambda^beta.
struct StableTail {
    double beta = 0.5;
};

// Tail samples (x_i, w(x_i)) of w(x) = nu([x, infty)), w nonincreasing.
// Induces the discrete measure with atom w_i - w_{i+1} at x_i (the last
// sample carries mass w_n). Finite activity by construction.
struct TailTable {
    std::vector<std::pair<double, double>> points;
};

// Discrete measure given directly as atoms (x_i, mass_i).
struct AtomTable {
    std::vector<std::pair<double, double>> atoms;
};

using LevyMeasureSpec = std::variant<NullMeasure, StableTail, TailTable, AtomTable>;

struct SubordinatorSpec {
    double kappa = 0.0;          // drift, time-units per operational-time-unit
    LevyMeasureSpec levy = NullMeasure{};
    SubKind kind = SubKind::Deterministic;
    double epsilon = 1e-4;       // small-jump cutoff for General simulation

    static SubordinatorSpec deterministic(double kappa) {
        SubordinatorSpec s;
        s.kappa = kappa;
        s.levy = NullMeasure{};
        s.kind = SubKind::Deterministic;
        s.validate();
        return s;
    }
    static SubordinatorSpec stable(double beta) {
        SubordinatorSpec s;
        s.kappa = 0.0;
        s.levy = StableTail{beta};
        s.kind = SubKind::Stable;
        s.validate();
        return s;
    }
    static SubordinatorSpec drifted_stable(double kappa, double beta) {
        SubordinatorSpec s;
        s.kappa = kappa;
        s.levy = StableTail{beta};
        s.kind = SubKind::DriftedStable;
        s.validate();
        return s;
    }
    static SubordinatorSpec general(double kappa, LevyMeasureSpec m, double epsilon = 1e-4) {
        SubordinatorSpec s;
        s.kappa = kappa;
        s.levy = std::move(m);
        s.kind = SubKind::General;
        s.epsilon = epsilon;
        s.validate();
        return s;
    }

    bool infinite_activity() const { return std::holds_alternative<StableTail>(levy); }

    std::optional<double> stable_beta() const {
        if (const auto* st = std::get_if<StableTail>(&levy)) return st->beta;
        return std::nullopt;
    }

    // Atoms of a finite-activity measure (empty for Null/StableTail).
    std::vector<std::pair<double, double>> atoms() const {
        std::vector<std::pair<double, double>> out;
        if (const auto* tt = std::get_if<TailTable>(&levy)) {
            const auto& p = tt->points;
            for (std::size_t i = 0; i < p.size(); ++i) {
                const double next = (i + 1 < p.size()) ? p[i + 1].second : 0.0;
                const double mass = p[i].second - next;
                if (mass > 0.0) out.emplace_back(p[i].first, mass);
            }
        } else if (const auto* at = std::get_if<AtomTable>(&levy)) {
            out = at->atoms;
        }
        return out;
    }

    double total_mass() const {
        if (std::holds_alternative<StableTail>(levy))
            return std::numeric_limits<double>::infinity();
        double m = 0.0;
        for (const auto& [x, mass] : atoms()) {
            (void)x;
            m += mass;
        }
        return m;
    }

    void validate() const {
        if (!(kappa >= 0.0) || !std::isfinite(kappa))
            throw SpecError("subordinator: drift kappa must be finite and >= 0");
        if (const auto* st = std::get_if<StableTail>(&levy)) {
            if (!(st->beta > 0.0 && st->beta < 1.0))
                throw SpecError("subordinator: stable index beta must lie in (0,1)");
        }
        if (const auto* tt = std::get_if<TailTable>(&levy)) {
            double prev_x = 0.0, prev_w = std::numeric_limits<double>::infinity();
            if (tt->points.empty()) throw SpecError("subordinator: empty tail table");
            for (const auto& [x, w] : tt->points) {
                if (!(x > prev_x)) throw SpecError("subordinator: tail table x must be positive increasing");
                if (!(w >= 0.0) || !std::isfinite(w))
                    throw SpecError("subordinator: tail values must be finite and nonnegative");
                if (w > prev_w) throw SpecError("subordinator: tail function must be nonincreasing");
                prev_x = x;
                prev_w = w;
            }
        }
        if (const auto* at = std::get_if<AtomTable>(&levy)) {
            if (at->atoms.empty()) throw SpecError("subordinator: empty atom table");
            for (const auto& [x, m] : at->atoms) {
                if (!(x > 0.0) || !(m > 0.0) || !std::isfinite(x) || !std::isfinite(m))
                    throw SpecError("subordinator: atoms must have positive location and mass");
            }
        }
        // Standing assumption: S strictly increasing, i.e. kappa > 0 or nu infinite.
        if (!(kappa > 0.0) && !infinite_activity())
            throw SpecError("subordinator: not strictly increasing (needs kappa > 0 or an infinite Levy measure)");
        switch (kind) {
            case SubKind::Deterministic:
                if (!std::holds_alternative<NullMeasure>(levy) || !(kappa > 0.0))
                    throw SpecError("subordinator: Deterministic kind requires kappa > 0 and a null measure");
                break;
            case SubKind::Stable:
                if (!std::holds_alternative<StableTail>(levy) || kappa != 0.0)
                    throw SpecError("subordinator: Stable kind requires a stable tail and zero drift");
                break;
            case SubKind::DriftedStable:
                if (!std::holds_alternative<StableTail>(levy) || !(kappa > 0.0))
                    throw SpecError("subordinator: DriftedStable kind requires a stable tail and kappa > 0");
                break;
            case SubKind::General:
                if (infinite_activity() && !(epsilon > 0.0))
                    throw SpecError("subordinator: General simulation of an infinite-activity measure needs a small-jump cutoff epsilon > 0");
                break;
        }
    }
};

// ---------------------------------------------------------------------------
// Laplace exponent phi(lambda) = kappa lambda + int (1 - e^{-lambda x}) nu(dx)
// ---------------------------------------------------------------------------

template <class T>
T laplace_exponent_at(const SubordinatorSpec& spec, T lambda) {
    using std::exp;
    using std::pow;
    T phi = spec.kappa * lambda;
    if (const auto* st = std::get_if<StableTail>(&spec.levy)) {
        phi += pow(lambda, T(st->beta));
    } else if (!std::holds_alternative<NullMeasure>(spec.levy)) {
        for (const auto& [x, mass] : spec.atoms()) phi += mass * (T(1) - exp(-lambda * T(x)));
    }
    return phi;
}

inline double laplace_exponent(const SubordinatorSpec& spec, double lambda) {
    if (!(lambda > 0.0)) throw SpecError("laplace_exponent: lambda must be > 0");
    spec.validate();
    return laplace_exponent_at<double>(spec, lambda);
}

// phi^{-1}(y) for y > 0 by bisection (phi is strictly increasing).
inline double laplace_exponent_inverse(const SubordinatorSpec& spec, double y) {
    if (!(y > 0.0)) return 0.0;
    double hi = 1.0;
    int guard = 0;
    while (laplace_exponent_at<double>(spec, hi) < y) {
        hi *= 2.0;
        if (++guard > 2100) throw NumericError("laplace_exponent_inverse: level unreachable");
    }
    double lo = 0.0;
    for (int i = 0; i < 200; ++i) {
        const double mid = 0.5 * (lo + hi);
        if (laplace_exponent_at<double>(spec, mid) < y)
            lo = mid;
        else
            hi = mid;
    }
    return 0.5 * (lo + hi);
}

// Tail w(x) = nu([x, infty)) and its antiderivative over [0, x]; both are the
// ingredients of the time-fractional kernel.
inline double levy_tail(const SubordinatorSpec& spec, double x) {
    if (!(x > 0.0)) throw SpecError("levy_tail: x must be > 0");
    if (const auto* st = std::get_if<StableTail>(&spec.levy))
        return std::pow(x, -st->beta) / std::tgamma(1.0 - st->beta);
    double w = 0.0;
    for (const auto& [xi, m] : spec.atoms())
        if (xi >= x) w += m;
    return w;
}

inline double levy_tail_integral(const SubordinatorSpec& spec, double x) {
    if (!(x >= 0.0)) throw SpecError("levy_tail_integral: x must be >= 0");
    if (x == 0.0) return 0.0;
    if (const auto* st = std::get_if<StableTail>(&spec.levy)) {
        const double b = st->beta;
        return std::pow(x, 1.0 - b) / ((1.0 - b) * std::tgamma(1.0 - b));
    }
    double acc = 0.0;
    for (const auto& [xi, m] : spec.atoms()) acc += m * std::min(x, xi);
    return acc;
}

// Mean of the truncated small jumps, int_0^eps x nu(dx); the drift
// compensation used by the General path sampler.
inline double small_jump_mean(const SubordinatorSpec& spec, double eps) {
    if (const auto* st = std::get_if<StableTail>(&spec.levy)) {
        const double b = st->beta;
        return b * std::pow(eps, 1.0 - b) / ((1.0 - b) * std::tgamma(1.0 - b));
    }
    double acc = 0.0;
    for (const auto& [xi, m] : spec.atoms())
        if (xi < eps) acc += m * xi;
    return acc;
}

// ---------------------------------------------------------------------------
// Moments of the inverse subordinator L_t
// ---------------------------------------------------------------------------

// E[L_t^p]. Stable and Deterministic kinds have closed forms; otherwise invert
// the transform  Ghat(lambda) = Gamma(p+1) / (lambda phi(lambda)^p).
inline double inverse_moment(const SubordinatorSpec& spec, double t, double p) {
    spec.validate();
    if (!(t > 0.0)) throw SpecError("inverse_moment: t must be > 0");
    if (!(p > 0.0)) throw SpecError("inverse_moment: p must be > 0");
    if (spec.kind == SubKind::Deterministic) return std::pow(t / spec.kappa, p);
    if (spec.kind == SubKind::Stable) {
        const double b = *spec.stable_beta();
        return std::tgamma(p + 1.0) / std::tgamma(b * p + 1.0) * std::pow(t, b * p);
    }
    const double gp1 = std::tgamma(p + 1.0);
    auto trans = [&](laplace::cplx s) {
        return gp1 / (s * std::pow(laplace_exponent_at<laplace::cplx>(spec, s), p));
    };
    const auto inv = laplace::talbot_invert(trans, t);
    const double tol = std::max(1e-9, 1e-6 * std::abs(inv.value));
    if (!(std::isfinite(inv.value)) || inv.err_est > tol)
        throw NumericError("inverse_moment: Laplace inversion did not converge (value=" +
                           std::to_string(inv.value) + ", err_est=" + std::to_string(inv.err_est) +
                           ", nodes=" + std::to_string(inv.nodes_used) + ")");
    return inv.value;
}

// E[e^{gamma L_t}] by inversion of  phi(lambda) / (lambda (phi(lambda)-gamma)).
// For gamma > 0 the transform has a real pole at phi(lambda) = gamma; the
// contour is shifted right of it.
inline double inverse_exp_moment(const SubordinatorSpec& spec, double t, double gamma) {
    spec.validate();
    if (!(t > 0.0)) throw SpecError("inverse_exp_moment: t must be > 0");
    if (gamma == 0.0) return 1.0;
    if (spec.kind == SubKind::Deterministic) return std::exp(gamma * t / spec.kappa);
    auto trans = [&](laplace::cplx s) {
        const laplace::cplx phi = laplace_exponent_at<laplace::cplx>(spec, s);
        return phi / (s * (phi - gamma));
    };
    laplace::Inversion inv;
    if (gamma > 0.0) {
        const double pole = laplace_exponent_inverse(spec, gamma);
        const double shift = pole + 1.0 + 0.5 * pole;
        inv = laplace::talbot_invert_shifted(trans, t, shift);
    } else {
        inv = laplace::talbot_invert(trans, t);
    }
    const double tol = std::max(1e-8, 1e-6 * std::abs(inv.value));
    if (!(std::isfinite(inv.value)) || inv.err_est > tol)
        throw NumericError("inverse_exp_moment: Laplace inversion did not converge (err_est=" +
                           std::to_string(inv.err_est) + ")");
    return inv.value;
}

// ---------------------------------------------------------------------------
// Sampling
// ---------------------------------------------------------------------------

// One draw of the standard one-sided stable law, E[e^{-lambda S}] = e^{-lambda^beta}
// (Kanter's representation). Evaluated in log space.
inline double sample_stable_standard(double beta, PathRng& rng) {
    const double u = M_PI * rng.uniform_pos();
    const double w = rng.exponential();
    const double ls = std::log(std::sin(beta * u)) +
                      (1.0 - beta) / beta * std::log(std::sin((1.0 - beta) * u)) -
                      (1.0 / beta) * std::log(std::sin(u)) -
                      (1.0 - beta) / beta * std::log(w);
    return std::exp(ls);
}

// Exact draw of L_t for a driftless beta-stable subordinator, via the identity
// L_t = (t / S_1)^beta in law.
inline double sample_inverse_stable(double beta, double t, PathRng& rng) {
    if (!(beta > 0.0 && beta < 1.0)) throw SpecError("sample_inverse_stable: beta must be in (0,1)");
    if (t < 0.0) throw SpecError("sample_inverse_stable: t must be >= 0");
    if (t == 0.0) return 0.0;
    const double s1 = sample_stable_standard(beta, rng);
    return std::pow(t / s1, beta);
}

namespace detail {

struct JumpSkeleton {
    std::vector<double> times;  // jump arrival times (operational time)
    std::vector<double> sizes;
    double slope = 0.0;         // kappa plus small-jump compensation
};

// Compound-Poisson-above-epsilon skeleton on [0, r_end] for General kind.
inline JumpSkeleton sample_jump_skeleton(const SubordinatorSpec& spec, double r_end, PathRng& rng) {
    JumpSkeleton sk;
    if (const auto* st = std::get_if<StableTail>(&spec.levy)) {
        const double b = st->beta;
        const double eps = spec.epsilon;
        const double rate = std::pow(eps, -b) / std::tgamma(1.0 - b);
        sk.slope = spec.kappa + small_jump_mean(spec, eps);
        double r = 0.0;
        while (true) {
            r += rng.exponential() / rate;
            if (r > r_end) break;
            sk.times.push_back(r);
            sk.sizes.push_back(eps * std::pow(rng.uniform_pos(), -1.0 / b));
        }
    } else {
        const auto atoms = spec.atoms();
        double rate = 0.0;
        for (const auto& [x, m] : atoms) {
            (void)x;
            rate += m;
        }
        sk.slope = spec.kappa;
        if (rate > 0.0) {
            double r = 0.0;
            while (true) {
                r += rng.exponential() / rate;
                if (r > r_end) break;
                double u = rng.uniform() * rate;
                double size = atoms.back().first;
                for (const auto& [x, m] : atoms) {
                    if (u < m) {
                        size = x;
                        break;
                    }
                    u -= m;
                }
                sk.times.push_back(r);
                sk.sizes.push_back(size);
            }
        }
    }
    return sk;
}

} // namespace detail

// Sample S on an increasing grid of operational times starting at 0. Stable and
// Deterministic kinds use exact stationary independent increments; General kind
// uses the compound-Poisson-above-epsilon skeleton plus compensated drift.
inline std::vector<double> sample_subordinator_path(const SubordinatorSpec& spec,
                                                    const std::vector<double>& grid, PathRng& rng) {
    spec.validate();
    if (grid.empty() || grid.front() != 0.0)
        throw SpecError("sample_subordinator_path: grid must start at 0");
    for (std::size_t i = 1; i < grid.size(); ++i)
        if (!(grid[i] > grid[i - 1])) throw SpecError("sample_subordinator_path: grid must be increasing");

    std::vector<double> s(grid.size(), 0.0);
    switch (spec.kind) {
        case SubKind::Deterministic:
            for (std::size_t i = 0; i < grid.size(); ++i) s[i] = spec.kappa * grid[i];
            break;
        case SubKind::Stable:
        case SubKind::DriftedStable: {
            const double b = *spec.stable_beta();
            for (std::size_t i = 1; i < grid.size(); ++i) {
                const double h = grid[i] - grid[i - 1];
                s[i] = s[i - 1] + spec.kappa * h +
                       std::pow(h, 1.0 / b) * sample_stable_standard(b, rng);
            }
            break;
        }
        case SubKind::General: {
            const auto sk = detail::sample_jump_skeleton(spec, grid.back(), rng);
            std::size_t j = 0;
            double jump_acc = 0.0;
            for (std::size_t i = 0; i < grid.size(); ++i) {
                while (j < sk.times.size() && sk.times[j] <= grid[i]) jump_acc += sk.sizes[j++];
                s[i] = sk.slope * grid[i] + jump_acc;
            }
            break;
        }
    }
    return s;
}

// ---------------------------------------------------------------------------
// Inverse clock paths
// ---------------------------------------------------------------------------

// A realized clock t -> L_{(t-a)^+} on an observation grid, with the overshoot
// R_t = a + S_{L_{(t-a)^+}} - t at each point.
struct InverseClockSample {
    std::vector<double> grid;
    double wake_up = 0.0;
    std::vector<double> L;
    std::vector<double> R;
};

struct PassageOptions {
    double tol = 1e-3;              // bracket width for passage times (operational time)
    std::size_t max_steps = 50'000'000; // skeleton budget across all levels of one path
};

// First-passage inversion of a sampled subordinator path.
//
// Finite-activity kinds are piecewise linear between jumps, so passage times
// are inverted exactly (L is constant across a jump interval [S_{r-}, S_r]).
// Stable kinds walk a fixed skeleton of exact increments with step = tol, so
// every passage time is bracketed within tol by construction.
inline InverseClockSample sample_inverse_path(const SubordinatorSpec& spec,
                                              const std::vector<double>& grid, double a,
                                              PathRng& rng, const PassageOptions& opt = {}) {
    spec.validate();
    if (a < 0.0) throw SpecError("sample_inverse_path: wake-up time a must be >= 0");
    if (grid.empty() || grid.front() < 0.0)
        throw SpecError("sample_inverse_path: grid must be nonnegative increasing");
    for (std::size_t i = 1; i < grid.size(); ++i)
        if (!(grid[i] > grid[i - 1])) throw SpecError("sample_inverse_path: grid must be increasing");

    InverseClockSample out;
    out.grid = grid;
    out.wake_up = a;
    out.L.assign(grid.size(), 0.0);
    out.R.assign(grid.size(), 0.0);

    const double u_max = std::max(grid.back() - a, 0.0);

    if (spec.kind == SubKind::Deterministic) {
        for (std::size_t i = 0; i < grid.size(); ++i) {
            const double u = std::max(grid[i] - a, 0.0);
            out.L[i] = u / spec.kappa;
            out.R[i] = std::max(a - grid[i], 0.0);
        }
        return out;
    }

    if (spec.kind == SubKind::General) {
        // Exact inversion on the piecewise-linear jump skeleton. Between jumps S
        // grows at rate `slope` (> 0 after validation), so the horizon
        // u_max/slope deterministically covers every level; jumps only shorten
        // passage. A level inside a jump's value interval keeps L constant at
        // the jump time and leaves a positive overshoot.
        const double slope =
            spec.kappa + (spec.infinite_activity() ? small_jump_mean(spec, spec.epsilon) : 0.0);
        if (!(slope > 0.0))
            throw NumericError("sample_inverse_path: nonpositive drift slope for General kind");
        const double horizon = u_max / slope * (1.0 + 1e-9) + 1e-12;
        detail::JumpSkeleton sk = detail::sample_jump_skeleton(spec, horizon, rng);
        std::size_t j = 0;
        double r_prev = 0.0, s_prev = 0.0;
        for (std::size_t i = 0; i < grid.size(); ++i) {
            const double u = std::max(grid[i] - a, 0.0);
            if (u == 0.0) {
                out.L[i] = 0.0;
                out.R[i] = a - grid[i];
                continue;
            }
            for (;;) {
                if (j < sk.times.size()) {
                    const double s_before = s_prev + sk.slope * (sk.times[j] - r_prev);
                    if (s_before > u) { // passes by drift before the next jump
                        out.L[i] = r_prev + (u - s_prev) / sk.slope;
                        out.R[i] = a + u - grid[i]; // continuous passage: S_{L_u} = u
                        break;
                    }
                    const double s_after = s_before + sk.sizes[j];
                    if (s_after > u) { // level swallowed by this jump; do not consume it
                        out.L[i] = sk.times[j];
                        out.R[i] = a + s_after - grid[i];
                        break;
                    }
                    r_prev = sk.times[j];
                    s_prev = s_after;
                    ++j;
                } else {
                    out.L[i] = r_prev + (u - s_prev) / sk.slope;
                    out.R[i] = a + u - grid[i];
                    break;
                }
            }
        }
        return out;
    }

    // Stable / DriftedStable: exact-increment skeleton with step = tol.
    const double b = *spec.stable_beta();
    const double step = opt.tol;
    const double inc_scale = std::pow(step, 1.0 / b);
    double s_cur = 0.0;
    std::size_t k = 0;
    for (std::size_t i = 0; i < grid.size(); ++i) {
        const double u = std::max(grid[i] - a, 0.0);
        if (u == 0.0) {
            out.L[i] = 0.0;
            out.R[i] = a - grid[i];
            continue;
        }
        while (s_cur <= u) {
            if (k >= opt.max_steps)
                throw NumericError("sample_inverse_path: refinement budget exhausted (" +
                                   std::to_string(opt.max_steps) + " skeleton steps at tol=" +
                                   std::to_string(opt.tol) + ")");
            ++k;
            s_cur += spec.kappa * step + inc_scale * sample_stable_standard(b, rng);
        }
        out.L[i] = static_cast<double>(k) * step;
        out.R[i] = a + s_cur - grid[i];
    }
    return out;
}

} // namespace subdiff
