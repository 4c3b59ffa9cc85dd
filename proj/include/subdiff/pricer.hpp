#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <boost/math/quadrature/tanh_sinh.hpp>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "density.hpp"
#include "errors.hpp"
#include "market.hpp"
#include "stats.hpp"
#include "subordinator.hpp"

namespace subdiff {

struct PayoffSpec {
    enum class Kind { Call, Put, Custom };
    Kind kind = Kind::Call;
    double strike = 1.0;
    double maturity = 1.0;
    std::function<double(double)> psi; // Custom only, nonnegative
    // linear growth envelope psi(s) <= growth_c0 + growth_c1 * s, used for
    // quadrature tail bounds on Custom payoffs
    double growth_c0 = 1.0;
    double growth_c1 = 1.0;

    static PayoffSpec call(double strike, double maturity) { return {Kind::Call, strike, maturity, nullptr, 1.0, 1.0}; }
    static PayoffSpec put(double strike, double maturity) { return {Kind::Put, strike, maturity, nullptr, 1.0, 1.0}; }
    static PayoffSpec custom(std::function<double(double)> f, double maturity, double c0 = 1.0,
                             double c1 = 1.0) {
        PayoffSpec p;
        p.kind = Kind::Custom;
        p.maturity = maturity;
        p.psi = std::move(f);
        p.growth_c0 = c0;
        p.growth_c1 = c1;
        return p;
    }

    void validate() const {
        if (!(maturity > 0.0)) throw SpecError("payoff: maturity must be > 0");
        if (kind != Kind::Custom && !(strike > 0.0)) throw SpecError("payoff: strike must be > 0");
        if (kind == Kind::Custom && !psi) throw SpecError("payoff: custom payoff needs a function");
    }

    double operator()(double s) const {
        switch (kind) {
            case Kind::Call: return std::max(s - strike, 0.0);
            case Kind::Put: return std::max(strike - s, 0.0);
            case Kind::Custom: return psi(s);
        }
        return 0.0;
    }
};

enum class PriceMethod { CondBSMC, Quadrature, PlainMC, PDE };

inline const char* to_string(PriceMethod m) {
    switch (m) {
        case PriceMethod::CondBSMC: return "CondBS-MC";
        case PriceMethod::Quadrature: return "Quadrature";
        case PriceMethod::PlainMC: return "PlainMC";
        case PriceMethod::PDE: return "PDE";
    }
    return "?";
}

struct PriceResult {
    double value = 0.0;
    double stderr_ = 0.0; // 0 for quadrature
    PriceMethod method = PriceMethod::CondBSMC;
    std::size_t n_samples = 0;
    std::map<std::string, double> diagnostics;
};

namespace detail {

inline void enforce_price_bounds(PriceResult& r, const PayoffSpec& payoff, double spot) {
    if (r.value < 0.0) {
        if (r.value < -1e-9 * (1.0 + spot))
            throw NumericError("pricer: negative value " + std::to_string(r.value));
        r.value = 0.0;
    }
    if (payoff.kind == PayoffSpec::Kind::Call && r.value > spot * (1.0 + 1e-9) + 1e-12)
        throw NumericError("pricer: call value " + std::to_string(r.value) +
                           " breaches the forward bound " + std::to_string(spot));
}

// Physicists' Gauss-Hermite rule by Golub-Welsch; E[f(Z)] for standard normal Z
// is sum_i (w_i/sqrt(pi)) f(sqrt(2) x_i).
inline void gauss_hermite(int n, std::vector<double>& nodes, std::vector<double>& weights) {
    Eigen::MatrixXd j = Eigen::MatrixXd::Zero(n, n);
    for (int k = 1; k < n; ++k) {
        const double b = std::sqrt(k / 2.0);
        j(k - 1, k) = b;
        j(k, k - 1) = b;
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(j);
    nodes.resize(static_cast<std::size_t>(n));
    weights.resize(static_cast<std::size_t>(n));
    const double sqrt_pi = std::sqrt(M_PI);
    for (int k = 0; k < n; ++k) {
        nodes[static_cast<std::size_t>(k)] = es.eigenvalues()[k];
        const double v0 = es.eigenvectors()(0, k);
        weights[static_cast<std::size_t>(k)] = sqrt_pi * v0 * v0;
    }
}

} // namespace detail

// E_Z[ psi(x exp(r tau - sigma^2 y / 2 + sigma sqrt(y) Z)) ] for the realized
// clock value y. Call/Put in closed form; Custom by Gauss-Hermite (64 nodes).
// Not discounted.
inline double conditional_bs(double spot, double y, double r, double sigma, double tau,
                             const PayoffSpec& payoff, int hermite_nodes = 64) {
    payoff.validate();
    if (y < 0.0) throw SpecError("conditional_bs: clock value y must be >= 0");
    const double fwd = spot * std::exp(r * tau);
    const double sd = sigma * std::sqrt(y);
    if (payoff.kind == PayoffSpec::Kind::Custom) {
        if (sd <= 0.0) return payoff(fwd);
        std::vector<double> xs, ws;
        detail::gauss_hermite(hermite_nodes, xs, ws);
        double acc = 0.0;
        const double inv_sqrt_pi = 1.0 / std::sqrt(M_PI);
        for (std::size_t i = 0; i < xs.size(); ++i) {
            const double z = std::sqrt(2.0) * xs[i];
            acc += ws[i] * inv_sqrt_pi * payoff(fwd * std::exp(-0.5 * sd * sd + sd * z));
        }
        return acc;
    }
    const double k = payoff.strike;
    if (sd <= 1e-12) return payoff(fwd);
    const double d1 = (std::log(fwd / k) + 0.5 * sd * sd) / sd;
    const double d2 = d1 - sd;
    if (payoff.kind == PayoffSpec::Kind::Call) return fwd * norm_cdf(d1) - k * norm_cdf(d2);
    return k * norm_cdf(-d2) - fwd * norm_cdf(-d1);
}

// ---------------------------------------------------------------------------
// Monte Carlo pricing
// ---------------------------------------------------------------------------

namespace detail {

// Clock draws y ~ L_{(tau - a~)^+}: exact Kanter draws for the Stable kind,
// first-passage path sampling otherwise.
inline double draw_clock_value(const SubordinatorSpec& spec, double u, PathRng& rng,
                               const PassageOptions& opt) {
    if (u <= 0.0) return 0.0;
    switch (spec.kind) {
        case SubKind::Deterministic: return u / spec.kappa;
        case SubKind::Stable: return sample_inverse_stable(*spec.stable_beta(), u, rng);
        default: {
            const std::vector<double> g = {0.0, u};
            return sample_inverse_path(spec, g, 0.0, rng, opt).L.back();
        }
    }
}

} // namespace detail

// Rao-Blackwellized Monte Carlo: average the conditional value over exact clock
// draws. `spot`/`overshoot` condition on (S_t, R_t) = (x, a~) with tau to
// maturity; pricing at inception uses (s0, a, T).
inline PriceResult price_by_mc(const MarketSpec& market, const PayoffSpec& payoff, double spot,
                               double overshoot, double tau, std::size_t n, std::uint64_t seed,
                               const PassageOptions& opt = {}) {
    market.validate();
    payoff.validate();
    if (market.dim() != 1) throw SpecError("price_by_mc: single-asset pricing only");
    if (!(spot > 0.0)) throw SpecError("price_by_mc: spot must be positive");
    if (overshoot < 0.0) throw SpecError("price_by_mc: overshoot must be >= 0");
    if (!(tau >= 0.0)) throw SpecError("price_by_mc: time to maturity must be >= 0");
    const double r = market.r;
    const double sigma = market.sigma(0, 0);
    const double disc = std::exp(-r * tau);
    const double u = std::max(tau - overshoot, 0.0);

    PriceResult res;
    res.method = PriceMethod::CondBSMC;
    if (u == 0.0) { // clock cannot advance before maturity: deterministic value
        res.value = disc * payoff(spot * std::exp(r * tau));
        res.diagnostics["dormant"] = 1.0;
        detail::enforce_price_bounds(res, payoff, spot);
        return res;
    }

    std::vector<double> vals(n);
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
    for (long long i = 0; i < static_cast<long long>(n); ++i) {
        PathRng rng(seed, static_cast<std::uint64_t>(i));
        const double y = detail::draw_clock_value(market.clock, u, rng, opt);
        vals[static_cast<std::size_t>(i)] = conditional_bs(spot, y, r, sigma, tau, payoff);
    }
    const auto s = summarize(vals);
    res.value = disc * s.mean;
    res.stderr_ = disc * s.stderr_;
    res.n_samples = n;
    // variance of the clock-conditional value: the "market uncertainty" part of
    // the hedging error (the residual is Brownian and replicable given the clock)
    res.diagnostics["market_uncertainty_var"] = disc * disc * s.variance;
    detail::enforce_price_bounds(res, payoff, spot);
    return res;
}

// Plain Monte Carlo on the terminal price under the pricing measure
// (exact terminal law: S_T = x exp(r tau + sigma sqrt(y) Z - sigma^2 y / 2)).
inline PriceResult price_plain_mc(const MarketSpec& market, const PayoffSpec& payoff, double spot,
                                  double overshoot, double tau, std::size_t n, std::uint64_t seed,
                                  const PassageOptions& opt = {}) {
    market.validate();
    payoff.validate();
    if (market.dim() != 1) throw SpecError("price_plain_mc: single-asset pricing only");
    const double r = market.r;
    const double sigma = market.sigma(0, 0);
    const double disc = std::exp(-r * tau);
    const double u = std::max(tau - overshoot, 0.0);

    std::vector<double> vals(n);
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
    for (long long i = 0; i < static_cast<long long>(n); ++i) {
        PathRng rng(seed, static_cast<std::uint64_t>(i));
        const double y = detail::draw_clock_value(market.clock, u, rng, opt);
        const double z = rng.normal();
        const double st = spot * std::exp(r * tau - 0.5 * sigma * sigma * y + sigma * std::sqrt(y) * z);
        vals[static_cast<std::size_t>(i)] = payoff(st);
    }
    const auto s = summarize(vals);
    PriceResult res;
    res.method = PriceMethod::PlainMC;
    res.value = disc * s.mean;
    res.stderr_ = disc * s.stderr_;
    res.n_samples = n;
    detail::enforce_price_bounds(res, payoff, spot);
    return res;
}

// ---------------------------------------------------------------------------
// Quadrature pricing against the inverse-clock density (Stable clock only)
// ---------------------------------------------------------------------------

struct QuadConfig {
    double tol = 1e-10;         // quadrature termination
    double density_tol = 1e-11; // per-evaluation density tolerance
    double tail_target = 1e-10; // bound on the neglected tail contribution
    double vmax_hint = 0.0;     // reuse a precomputed scale-free cutoff when > 0
};

inline PriceResult price_by_quadrature(const MarketSpec& market, const PayoffSpec& payoff,
                                       double spot, double overshoot, double tau,
                                       const QuadConfig& cfg = {}) {
    market.validate();
    payoff.validate();
    if (market.dim() != 1) throw SpecError("price_by_quadrature: single-asset pricing only");
    if (market.clock.kind != SubKind::Stable)
        throw SpecError("price_by_quadrature: requires a driftless Stable clock "
                        "(no inverse-clock density is available for this spec)");
    const double beta = *market.clock.stable_beta();
    const double r = market.r;
    const double sigma = market.sigma(0, 0);
    const double disc = std::exp(-r * tau);
    const double u = std::max(tau - overshoot, 0.0);

    PriceResult res;
    res.method = PriceMethod::Quadrature;
    if (u == 0.0) {
        res.value = disc * payoff(spot * std::exp(r * tau));
        res.diagnostics["dormant"] = 1.0;
        detail::enforce_price_bounds(res, payoff, spot);
        return res;
    }

    // Self-similar change of variables y = u^beta v turns the integral into one
    // against h_beta(1, v); the tail beyond vmax is controlled by the Chernoff
    // bound P(L_1 > v) <= E[e^{gamma L_1}] e^{-gamma v}, gamma optimized.
    const double scale = std::pow(u, beta);
    double bound = 0.0;
    switch (payoff.kind) {
        case PayoffSpec::Kind::Call: bound = spot * std::exp(r * tau); break;
        case PayoffSpec::Kind::Put: bound = payoff.strike; break;
        case PayoffSpec::Kind::Custom:
            bound = payoff.growth_c0 + payoff.growth_c1 * spot * std::exp(r * tau);
            break;
    }
    double vmax, tail_bound;
    if (cfg.vmax_hint > 0.0) {
        vmax = cfg.vmax_hint;
        tail_bound = cfg.tail_target;
    } else {
        const auto cut = stable_tail_cutoff(market.clock, 1.0, bound, cfg.tail_target);
        vmax = cut.x;
        tail_bound = cut.bound;
    }

    boost::math::quadrature::tanh_sinh<double> integ;
    double err = 0.0, l1 = 0.0;
    std::size_t levels = 0;
    auto f = [&](double v) {
        const double h1 = inverse_stable_density(beta, 1.0, v, cfg.density_tol).value;
        return conditional_bs(spot, scale * v, r, sigma, tau, payoff) * h1;
    };
    const double integral = integ.integrate(f, 0.0, vmax, cfg.tol, &err, &l1, &levels);

    res.value = disc * integral;
    res.stderr_ = 0.0;
    res.n_samples = levels;
    res.diagnostics["quad_err_est"] = disc * err * l1;
    res.diagnostics["tail_bound"] = disc * tail_bound;
    res.diagnostics["ymax"] = scale * vmax;
    detail::enforce_price_bounds(res, payoff, spot);
    return res;
}

// Closed-form value for a deterministic clock: the clock law is a point mass at
// y = u / kappa, so the conditional value is the price (the degenerate
// quadrature of the classical limit).
inline PriceResult price_deterministic(const MarketSpec& market, const PayoffSpec& payoff,
                                       double spot, double overshoot, double tau) {
    market.validate();
    payoff.validate();
    if (market.clock.kind != SubKind::Deterministic)
        throw SpecError("price_deterministic: clock is not deterministic");
    const double u = std::max(tau - overshoot, 0.0);
    const double y = u / market.clock.kappa;
    PriceResult res;
    res.method = PriceMethod::Quadrature;
    res.value = std::exp(-market.r * tau) *
                conditional_bs(spot, y, market.r, market.sigma(0, 0), tau, payoff);
    res.diagnostics["degenerate"] = 1.0;
    detail::enforce_price_bounds(res, payoff, spot);
    return res;
}

// ---------------------------------------------------------------------------
// Value surface V(t, x, a~)
// ---------------------------------------------------------------------------

struct ValueSurface {
    std::vector<double> ts, xs, as;
    std::vector<double> values; // ts x xs x as, row-major (t slowest)
    double operator()(std::size_t it, std::size_t ix, std::size_t ia) const {
        return values[(it * xs.size() + ix) * as.size() + ia];
    }
};

struct SurfaceConfig {
    std::size_t mc_paths = 20000; // fallback when no density is available
    std::uint64_t seed = 1;
    QuadConfig quad;
};

inline ValueSurface value_surface(const MarketSpec& market, const PayoffSpec& payoff,
                                  const std::vector<double>& ts, const std::vector<double>& xs,
                                  const std::vector<double>& as, const SurfaceConfig& cfg = {}) {
    market.validate();
    payoff.validate();
    const double horizon = payoff.maturity;
    ValueSurface surf;
    surf.ts = ts;
    surf.xs = xs;
    surf.as = as;
    surf.values.assign(ts.size() * xs.size() * as.size(), 0.0);
    for (std::size_t it = 0; it < ts.size(); ++it) {
        if (ts[it] < 0.0 || ts[it] > horizon + 1e-12)
            throw SpecError("value_surface: t outside [0, maturity]");
        const double tau = std::max(horizon - ts[it], 0.0);
        for (std::size_t ix = 0; ix < xs.size(); ++ix) {
            for (std::size_t ia = 0; ia < as.size(); ++ia) {
                const double x = xs[ix];
                const double atil = as[ia];
                double v;
                if (tau == 0.0) {
                    v = payoff(x);
                } else if (atil >= tau) {
                    v = std::exp(-market.r * tau) * payoff(x * std::exp(market.r * tau));
                } else if (market.clock.kind == SubKind::Stable) {
                    v = price_by_quadrature(market, payoff, x, atil, tau, cfg.quad).value;
                } else if (market.clock.kind == SubKind::Deterministic) {
                    v = price_deterministic(market, payoff, x, atil, tau).value;
                } else {
                    const std::uint64_t s =
                        cfg.seed + 0x9e3779b9ULL * ((it * xs.size() + ix) * as.size() + ia + 1);
                    v = price_by_mc(market, payoff, x, atil, tau, cfg.mc_paths, s).value;
                }
                surf.values[(it * xs.size() + ix) * as.size() + ia] = v;
            }
        }
    }
    return surf;
}

// CSV export: t, spot, overshoot, value (time columns in market time units).
inline void export_csv(const ValueSurface& s, std::ostream& os) {
    os << "t,spot,overshoot,value\n";
    for (std::size_t it = 0; it < s.ts.size(); ++it)
        for (std::size_t ix = 0; ix < s.xs.size(); ++ix)
            for (std::size_t ia = 0; ia < s.as.size(); ++ia)
                os << s.ts[it] << ',' << s.xs[ix] << ',' << s.as[ia] << ',' << s(it, ix, ia)
                   << "\n";
}

} // namespace subdiff
