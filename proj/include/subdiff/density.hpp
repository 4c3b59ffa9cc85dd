#pragma once

#include <cmath>
#include <cstddef>
#include <cstdio>
#include <limits>
#include <string>

#include <boost/math/quadrature/tanh_sinh.hpp>
#include <boost/math/special_functions/gamma.hpp>
#include <boost/multiprecision/cpp_bin_float.hpp>

#include "errors.hpp"
#include "subordinator.hpp"

namespace subdiff {

// One evaluation of the inverse-stable density
//   h_beta(t, x) = (1/pi) sum_k ((-x)^k / k!) Gamma(beta(k+1)) t^{-beta(k+1)} sin(beta(k+1) pi).
struct DensityEval {
    double beta = 0.0;
    double t = 0.0;
    double x = 0.0;
    double value = 0.0;
    int terms_used = 0;
    double est_error = 0.0;
};

namespace detail {

using float50 = boost::multiprecision::cpp_bin_float_50;

// The series alternates with factorial-vs-Gamma growth; once the largest term
// dwarfs the sum, double precision has no digits left and the whole evaluation
// is redone in 50-digit arithmetic.
constexpr double kPromoteRatio = 1e6;
constexpr int kMaxTerms = 60000;

template <class Real>
struct SeriesResult {
    Real sum{0};
    Real max_term{0};
    Real tail_bound{0}; // envelope of the neglected terms
    int terms = 0;
    bool converged = false;
};

template <class Real>
SeriesResult<Real> density_series(double beta, double t, double x, double tol) {
    using std::abs;
    using std::pow;
    using std::sin;
    SeriesResult<Real> r;
    const Real pi_r = boost::math::constants::pi<Real>();
    const Real xr(x), tr(t);
    // |term| peaks near k* = (x t^{-beta})^{1/(1-beta)}; never accept
    // convergence before passing it (the sine factor can fake a run of small
    // terms on the way up when beta is small).
    const double k_peak = std::pow(x * std::pow(t, -beta), 1.0 / (1.0 - beta));
    const int k_min = static_cast<int>(std::min(k_peak + 5.0, 1e9));
    // term_k without the sine factor, tracked in factored form:
    //   base_k = x^k / k! * Gamma(beta (k+1)) * t^{-beta (k+1)} / pi
    // The Gamma ratio must be evaluated in the working precision: against a
    // huge max term, a double-precision ratio alone caps the absolute accuracy
    // at max_term * 1e-16.
    Real base = boost::math::tgamma(Real(beta)) * pow(tr, Real(-beta)) / pi_r;
    const Real t_pow = pow(tr, Real(-beta));
    int consecutive_small = 0;
    for (int k = 0; k < kMaxTerms; ++k) {
        const Real angle = Real(beta) * Real(k + 1) * pi_r;
        const Real term = base * sin(angle) * ((k % 2 == 0) ? Real(1) : Real(-1));
        r.sum += term;
        r.max_term = std::max(r.max_term, Real(abs(term)));
        r.terms = k + 1;
        if (abs(base) < Real(0.01 * tol)) {
            if (++consecutive_small >= 3 && k >= k_min) {
                r.converged = true;
                r.tail_bound = 2 * abs(base); // decaying envelope past the peak
                break;
            }
        } else {
            consecutive_small = 0;
        }
        // advance: base_{k+1} = base_k * x / (k+1) * Gamma(beta(k+2))/Gamma(beta(k+1)) * t^{-beta}
        const Real g_ratio =
            boost::math::tgamma_ratio(Real(beta) * Real(k + 2), Real(beta) * Real(k + 1));
        base *= xr * g_ratio / Real(k + 1) * t_pow;
        if (std::is_same_v<Real, double> && abs(base) > Real(1e300)) break; // promote
    }
    return r;
}

} // namespace detail

// Series evaluation with alternating-cancellation control. `tol` is the
// absolute error target recorded in est_error; unattainable tolerances raise
// NumericError (the Monte Carlo histogram of sample_inverse_stable is the
// fallback estimator in that regime).
inline DensityEval inverse_stable_density(double beta, double t, double x, double tol = 1e-10) {
    if (!(beta > 0.0 && beta < 1.0)) throw SpecError("inverse_stable_density: beta must be in (0,1)");
    if (!(t > 0.0)) throw SpecError("inverse_stable_density: t must be > 0");
    if (!(x >= 0.0)) throw SpecError("inverse_stable_density: x must be >= 0");
    if (!(tol > 0.0)) throw SpecError("inverse_stable_density: tol must be > 0");

    DensityEval ev;
    ev.beta = beta;
    ev.t = t;
    ev.x = x;

    if (x == 0.0) { // only the k = 0 term survives: h(t, 0) = t^{-beta} / Gamma(1-beta)
        ev.value = std::pow(t, -beta) / std::tgamma(1.0 - beta);
        ev.terms_used = 1;
        ev.est_error = std::abs(ev.value) * 1e-16;
        return ev;
    }

    const auto d = detail::density_series<double>(beta, t, x, tol);
    const double eps_d = std::numeric_limits<double>::epsilon();
    const double floor_d = d.max_term * d.terms * eps_d;
    if (d.converged && d.max_term <= detail::kPromoteRatio * std::abs(d.sum) &&
        floor_d + d.tail_bound <= tol) {
        ev.value = std::max(d.sum, 0.0);
        ev.terms_used = d.terms;
        ev.est_error = floor_d + d.tail_bound + std::abs(d.sum) * 1e-14;
        return ev;
    }

    using detail::float50;
    const auto q = detail::density_series<float50>(beta, t, x, tol);
    const double eps_q = static_cast<double>(std::numeric_limits<float50>::epsilon());
    const double qfloor = static_cast<double>(q.max_term * q.terms) * eps_q;
    const double qtail = static_cast<double>(q.tail_bound);
    if (!q.converged || qfloor + qtail > tol) {
        char msg[256];
        std::snprintf(msg, sizeof(msg),
                      "inverse_stable_density: tolerance %.3g unattainable at (beta=%g, t=%g, "
                      "x=%g): cancellation floor %.3g with 50-digit accumulation; use a Monte "
                      "Carlo histogram instead",
                      tol, beta, t, x, qfloor + qtail);
        throw NumericError(msg);
    }
    ev.value = std::max(static_cast<double>(q.sum), 0.0);
    ev.terms_used = q.terms;
    ev.est_error = qfloor + qtail + std::abs(ev.value) * 1e-13;
    return ev;
}

// CDF of L_t for the driftless stable clock, int_0^x h_beta(t, y) dy.
inline double inverse_stable_cdf(double beta, double t, double x, double tol = 1e-9) {
    if (x <= 0.0) return 0.0;
    boost::math::quadrature::tanh_sinh<double> integ;
    auto f = [&](double y) { return inverse_stable_density(beta, t, y, tol * 0.01).value; };
    return integ.integrate(f, 0.0, x, 1e-9);
}

// Cutoff x with P(L_t > x) * scale <= target, from the Chernoff bound
// P(L_t > x) <= E[e^{gamma L_t}] e^{-gamma x} optimized over a small gamma
// sweep (the gamma = 1 bound is far too weak in the far tail).
struct TailCutoff {
    double x = 0.0;
    double bound = 0.0; // realized tail bound, <= target
    double gamma = 1.0;
};

inline TailCutoff stable_tail_cutoff(const SubordinatorSpec& spec, double t, double scale,
                                     double target) {
    TailCutoff best;
    best.x = std::numeric_limits<double>::infinity();
    for (double gamma : {1.0, 2.0, 4.0, 8.0, 16.0}) {
        double mom;
        try {
            mom = inverse_exp_moment(spec, t, gamma);
        } catch (const NumericError&) {
            break; // contour amplification limit; larger gamma only gets worse
        }
        const double x = std::log(std::max(mom * scale / target, 10.0)) / gamma;
        if (x < best.x) best = {x, target, gamma};
    }
    if (!std::isfinite(best.x))
        throw NumericError("stable_tail_cutoff: no usable exponential moment");
    return best;
}

// int_0^infty h_beta(t, x) dx, which must be 1 up to the quadrature tolerance
// and the Chernoff-bounded tail.
inline double inverse_stable_density_mass(double beta, double t, double tol = 1e-9) {
    const auto spec = SubordinatorSpec::stable(beta);
    const auto cut = stable_tail_cutoff(spec, t, 1.0, 0.01 * tol);
    boost::math::quadrature::tanh_sinh<double> integ;
    auto f = [&](double y) { return inverse_stable_density(beta, t, y, tol * 0.01).value; };
    return integ.integrate(f, 0.0, cut.x, 1e-10);
}

} // namespace subdiff
