#pragma once

#include <cmath>
#include <complex>
#include <cstddef>
#include <limits>
#include <string>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/quadrature/tanh_sinh.hpp>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "errors.hpp"
#include "laplace.hpp"
#include "pricer.hpp"
#include "stats.hpp"
#include "subordinator.hpp"

namespace subdiff {

// Time-fractional kernel w(x) = nu([x, infty)) together with the drift kappa;
// the PDE operator is  kappa d/dt + d^w_t  with
//   d^w_t f(t) = d/dt int_0^t w(s) (f(t-s) - f(0)) ds.
struct FractionalKernel {
    SubordinatorSpec spec;

    double kappa() const { return spec.kappa; }
    bool trivial_tail() const { return std::holds_alternative<NullMeasure>(spec.levy); }

    double w(double x) const { return trivial_tail() ? 0.0 : levy_tail(spec, x); }

    // int_a^b w(s) ds
    double tail_mass(double a, double b) const {
        if (trivial_tail()) return 0.0;
        return levy_tail_integral(spec, b) - levy_tail_integral(spec, a);
    }

    // int_a^b (s - a) w(s) ds
    double tail_first_moment(double a, double b) const {
        if (trivial_tail()) return 0.0;
        if (const auto* st = std::get_if<StableTail>(&spec.levy)) {
            const double bexp = st->beta;
            const double g = std::tgamma(1.0 - bexp);
            const double sw = (std::pow(b, 2.0 - bexp) - std::pow(a, 2.0 - bexp)) / ((2.0 - bexp) * g);
            return sw - a * tail_mass(a, b);
        }
        double acc = 0.0;
        for (const auto& [xi, m] : spec.atoms()) {
            const double hi = std::min(b, xi);
            if (hi > a) acc += m * (0.5 * (hi * hi - a * a) - a * (hi - a));
        }
        return acc;
    }
};

// ---------------------------------------------------------------------------
// Laplace-space solution on an x-grid
// ---------------------------------------------------------------------------

namespace tfdetail {

using cplx = laplace::cplx;

// Inner Gaussian-kernel integral of the Green representation in log-price
// coordinates: the semigroup of (1/2) d^2 - (1/2) d has the drifted kernel
// exp(-(xi - y - t/2)^2 / (2t)), and against the call payoff it integrates in
// closed form to a driftless lognormal-call expectation (forward e^xi).
inline double kernel_call_integral(double xi, double t, double strike) {
    if (t <= 0.0) return std::max(std::exp(xi) - strike, 0.0);
    const double st = std::sqrt(t);
    const double m = xi - std::log(strike);
    return std::exp(xi) * norm_cdf((m + 0.5 * t) / st) - strike * norm_cdf((m - 0.5 * t) / st);
}

// q * int_0^inf e^{-q t} C(xi, t) dt, truncated where the integrand is below
// tol (C is bounded by e^xi); tanh_sinh on the real axis, adaptive
// Gauss-Kronrod on the real and imaginary parts for complex q (Talbot contour
// points oscillate).
inline cplx green_time_integral(cplx q, double xi, double strike, double tol) {
    const double qr = q.real();
    const double amp = std::max(std::abs(q), 1.0) * (std::exp(std::max(xi, 0.0)) + strike);
    const double tcut = std::log(amp / (tol * qr) + 10.0) / qr;
    if (std::abs(q.imag()) < 1e-12 * std::max(1.0, qr)) {
        boost::math::quadrature::tanh_sinh<double> integ;
        auto f = [&](double t) { return std::exp(-qr * t) * kernel_call_integral(xi, t, strike); };
        return cplx(qr * integ.integrate(f, 0.0, tcut, 1e-11), 0.0);
    }
    using gk = boost::math::quadrature::gauss_kronrod<double, 31>;
    auto fre = [&](double t) {
        return std::exp(-qr * t) * std::cos(q.imag() * t) * kernel_call_integral(xi, t, strike);
    };
    auto fim = [&](double t) {
        return -std::exp(-qr * t) * std::sin(q.imag() * t) * kernel_call_integral(xi, t, strike);
    };
    const double re = gk::integrate(fre, 0.0, tcut, 15, 1e-11);
    const double im = gk::integrate(fim, 0.0, tcut, 15, 1e-11);
    return q * cplx(re, im);
}

} // namespace tfdetail

// Laplace-space price ubar(lambda, x) on the x-grid, given phi(lambda). The
// representation converges only where Re(phi(lambda)) > 3 sigma^2 / 2 (the
// lambda_0 threshold); other lambda are rejected.
inline std::vector<laplace::cplx> laplace_space_solution(laplace::cplx phi_lambda, double sigma,
                                                         double strike,
                                                         const std::vector<double>& xs,
                                                         double tol = 1e-11) {
    if (!(sigma > 0.0)) throw SpecError("laplace_space_solution: sigma must be positive");
    if (!(strike > 0.0)) throw SpecError("laplace_space_solution: strike must be positive");
    const laplace::cplx q = phi_lambda / (sigma * sigma);
    if (!(q.real() > 1.5))
        throw SpecError("laplace_space_solution: lambda outside the admissible region: requires "
                        "Re(phi(lambda))/sigma^2 > 3/2, i.e. lambda > lambda_0 with phi(lambda_0) = "
                        "3 sigma^2/2 (got Re(phi)/sigma^2 = " + std::to_string(q.real()) + ")");
    std::vector<laplace::cplx> out(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) {
        if (!(xs[i] > 0.0)) throw SpecError("laplace_space_solution: x-grid must be positive");
        out[i] = tfdetail::green_time_integral(q, std::log(xs[i]), strike, tol);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Inversion to the time domain
// ---------------------------------------------------------------------------

enum class InversionMethod { Talbot, GaverStehfest };

struct PdeSolution {
    std::vector<double> ts, xs;
    std::vector<double> u;       // ts x xs, row-major
    std::vector<double> err_est; // per point, method-internal consistency
    double sigma = 0.0;
    double strike = 0.0;
    std::string method;
    int lambda_nodes = 0;

    double at(std::size_t j, std::size_t i) const { return u[j * xs.size() + i]; }
    double& at(std::size_t j, std::size_t i) { return u[j * xs.size() + i]; }
};

struct TfpdeOptions {
    int talbot_m = 32;
    int gs_n = 16;
    double quad_tol = 1e-11;
};

// u(t, x) with initial data (x-K)^+ for the operator
// (kappa d/dt + d^w_t) u = 1/2 sigma^2 x^2 u_xx: numerical inversion of the
// Laplace-space Green representation. t = 0 rows are the initial condition.
inline PdeSolution solve_tfpde(const SubordinatorSpec& clock, double sigma, double strike,
                               const std::vector<double>& ts, const std::vector<double>& xs,
                               InversionMethod method, const TfpdeOptions& opt = {}) {
    clock.validate();
    PdeSolution sol;
    sol.ts = ts;
    sol.xs = xs;
    sol.sigma = sigma;
    sol.strike = strike;
    sol.u.assign(ts.size() * xs.size(), 0.0);
    sol.err_est.assign(ts.size() * xs.size(), 0.0);
    sol.method = method == InversionMethod::Talbot ? "talbot" : "gaver-stehfest";
    sol.lambda_nodes = method == InversionMethod::Talbot ? 3 * opt.talbot_m : opt.gs_n;

    const double lambda0_level = 1.5 * sigma * sigma;

    for (std::size_t j = 0; j < ts.size(); ++j) {
        const double t = ts[j];
        if (t < 0.0) throw SpecError("solve_tfpde: t must be >= 0");
        if (t == 0.0) {
            for (std::size_t i = 0; i < xs.size(); ++i) sol.at(j, i) = std::max(xs[i] - strike, 0.0);
            continue;
        }
        if (method == InversionMethod::Talbot) {
            auto run = [&](int m) {
                const auto nodes = laplace::talbot_rule(t, m);
                for (const auto& node : nodes) {
                    const auto phi = laplace_exponent_at<laplace::cplx>(clock, node.s);
                    if (!(phi.real() > lambda0_level))
                        throw NumericError(
                            "solve_tfpde: Talbot contour node lambda=(" + std::to_string(node.s.real()) +
                            "," + std::to_string(node.s.imag()) + ") falls outside the admissible "
                            "region Re(phi) > 3 sigma^2/2; use the Gaver-Stehfest method (real nodes) "
                            "for this clock");
                }
                // laplace_space_solution solves the stationary equation, whose
                // solution is lambda times the time-Laplace transform of u
                std::vector<double> row(xs.size(), 0.0);
                for (const auto& node : nodes) {
                    const auto phi = laplace_exponent_at<laplace::cplx>(clock, node.s);
                    const auto ubar = laplace_space_solution(phi, sigma, strike, xs, opt.quad_tol);
                    for (std::size_t i = 0; i < xs.size(); ++i)
                        row[i] += (node.w * ubar[i] / node.s).real();
                }
                return row;
            };
            const auto coarse = run(std::max(3 * opt.talbot_m / 4, 8));
            const auto fine = run(opt.talbot_m);
            for (std::size_t i = 0; i < xs.size(); ++i) {
                sol.at(j, i) = fine[i];
                sol.err_est[j * xs.size() + i] = std::abs(fine[i] - coarse[i]);
            }
        } else {
            auto run = [&](int n) {
                const auto wts = laplace::detail::gaver_stehfest_weights(n);
                const double ln2_t = std::log(2.0) / t;
                std::vector<laplace::float50> acc(xs.size(), laplace::float50(0));
                for (int k = 1; k <= n; ++k) {
                    const double lam = k * ln2_t;
                    const double phi = laplace_exponent_at<double>(clock, lam);
                    if (!(phi > lambda0_level))
                        throw NumericError("solve_tfpde: Gaver-Stehfest node lambda=" +
                                           std::to_string(lam) + " below the admissible region "
                                           "(phi <= 3 sigma^2/2); reduce t or the node count");
                    const auto ubar =
                        laplace_space_solution(laplace::cplx(phi, 0.0), sigma, strike, xs, opt.quad_tol);
                    for (std::size_t i = 0; i < xs.size(); ++i)
                        acc[i] += wts[static_cast<std::size_t>(k)] * laplace::float50(ubar[i].real() / lam);
                }
                std::vector<double> row(xs.size());
                for (std::size_t i = 0; i < xs.size(); ++i)
                    row[i] = static_cast<double>(acc[i] * laplace::float50(ln2_t));
                return row;
            };
            const auto coarse = run(opt.gs_n - 4);
            const auto fine = run(opt.gs_n);
            for (std::size_t i = 0; i < xs.size(); ++i) {
                sol.at(j, i) = fine[i];
                sol.err_est[j * xs.size() + i] = std::abs(fine[i] - coarse[i]);
            }
        }
    }
    return sol;
}

// Fixed quadrature rule against the scale-free clock density h_beta(1, v):
// composite Gauss-Legendre with panels graded toward v = 0, density values
// tabulated once. With the self-similar substitution y = t^beta v this turns a
// whole surface of clock integrals into cheap weighted sums.
struct ClockLawRule {
    std::vector<double> nodes;   // v
    std::vector<double> weights; // w * h_beta(1, v)
};

inline ClockLawRule make_clock_law_rule(double beta, double vmax, int panels = 36,
                                        int points_per_panel = 16, double density_tol = 1e-12) {
    Eigen::MatrixXd j = Eigen::MatrixXd::Zero(points_per_panel, points_per_panel);
    for (int k = 1; k < points_per_panel; ++k) {
        const double b = k / std::sqrt(4.0 * k * k - 1.0);
        j(k - 1, k) = b;
        j(k, k - 1) = b;
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(j);

    std::vector<double> edges;
    edges.push_back(0.0);
    const int graded = panels / 2;
    for (int k = graded; k >= 1; --k) edges.push_back(vmax * 0.25 * std::pow(0.6, k));
    const double mid = edges.back();
    for (int k = 1; k <= panels - graded; ++k)
        edges.push_back(mid + (vmax - mid) * k / (panels - graded));

    ClockLawRule rule;
    for (std::size_t p = 0; p + 1 < edges.size(); ++p) {
        const double half = 0.5 * (edges[p + 1] - edges[p]);
        const double center = 0.5 * (edges[p + 1] + edges[p]);
        for (int k = 0; k < points_per_panel; ++k) {
            const double v = center + half * es.eigenvalues()[k];
            const double w = 2.0 * half * es.eigenvectors()(0, k) * es.eigenvectors()(0, k);
            rule.nodes.push_back(v);
            rule.weights.push_back(w * inverse_stable_density(beta, 1.0, v, density_tol).value);
        }
    }
    return rule;
}

// Probabilistic reference surface u(t, x) = E[(x exp(sigma B_{L_t} - sigma^2
// L_t / 2) - K)^+], by quadrature against the inverse-clock density (or the
// degenerate law for deterministic clocks).
inline PdeSolution probabilistic_solution(const SubordinatorSpec& clock, double sigma,
                                          double strike, const std::vector<double>& ts,
                                          const std::vector<double>& xs, const QuadConfig& cfg = {}) {
    clock.validate();
    if (clock.kind != SubKind::Stable && clock.kind != SubKind::Deterministic)
        throw SpecError("probabilistic_solution: needs a Stable or Deterministic clock");
    PdeSolution sol;
    sol.ts = ts;
    sol.xs = xs;
    sol.sigma = sigma;
    sol.strike = strike;
    sol.method = "probabilistic";
    sol.u.assign(ts.size() * xs.size(), 0.0);
    sol.err_est.assign(ts.size() * xs.size(), 0.0);

    const auto payoff = PayoffSpec::call(strike, 1.0);
    ClockLawRule rule;
    double beta = 0.0;
    if (clock.kind == SubKind::Stable) {
        beta = *clock.stable_beta();
        const double vmax =
            cfg.vmax_hint > 0.0
                ? cfg.vmax_hint
                : stable_tail_cutoff(clock, 1.0, xs.back() + strike, cfg.tail_target).x;
        rule = make_clock_law_rule(beta, vmax, 36, 16, cfg.density_tol);
    }

#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
    for (long long j = 0; j < static_cast<long long>(ts.size()); ++j) {
        const double t = ts[static_cast<std::size_t>(j)];
        for (std::size_t i = 0; i < xs.size(); ++i) {
            double v;
            if (t <= 0.0) {
                v = std::max(xs[i] - strike, 0.0);
            } else if (clock.kind == SubKind::Deterministic) {
                v = conditional_bs(xs[i], t / clock.kappa, 0.0, sigma, t, payoff);
            } else {
                const double scale = std::pow(t, beta);
                double acc = 0.0;
                for (std::size_t q = 0; q < rule.nodes.size(); ++q)
                    acc += rule.weights[q] *
                           conditional_bs(xs[i], scale * rule.nodes[q], 0.0, sigma, t, payoff);
                v = acc;
            }
            sol.at(static_cast<std::size_t>(j), i) = v;
        }
    }
    return sol;
}

// Bilinear evaluation; the wake-up variant implements u(t, x, a) =
// u((t-a)^+, x, 0), which satisfies the dormant boundary clause u = (x-K)^+
// on t <= a exactly because row 0 is the initial condition.
inline double evaluate(const PdeSolution& sol, double t, double x) {
    auto locate = [](const std::vector<double>& g, double v) {
        if (v <= g.front()) return std::size_t(0);
        if (v >= g.back()) return g.size() - 2;
        std::size_t lo = 0;
        while (lo + 2 < g.size() && g[lo + 1] <= v) ++lo;
        return lo;
    };
    const std::size_t j = locate(sol.ts, t);
    const std::size_t i = locate(sol.xs, x);
    const double ft = (t - sol.ts[j]) / (sol.ts[j + 1] - sol.ts[j]);
    const double fx = (x - sol.xs[i]) / (sol.xs[i + 1] - sol.xs[i]);
    const double a = sol.at(j, i), b = sol.at(j, i + 1), c = sol.at(j + 1, i), d = sol.at(j + 1, i + 1);
    return (1 - ft) * ((1 - fx) * a + fx * b) + ft * ((1 - fx) * c + fx * d);
}

inline double evaluate_with_wakeup(const PdeSolution& sol, double t, double x, double a) {
    const double shifted = std::max(t - a, 0.0);
    if (shifted == 0.0) return std::max(x - sol.strike, 0.0);
    return evaluate(sol, shifted, x);
}

// ---------------------------------------------------------------------------
// Fractional derivative and residual verification
// ---------------------------------------------------------------------------

struct FracDeriv {
    double value = 0.0;
    bool coarse_grid_warning = false;
};

namespace tfdetail {

inline void require_uniform(const std::vector<double>& ts) {
    if (ts.size() < 3 || ts.front() != 0.0)
        throw SpecError("fractional_derivative: need a uniform grid starting at 0");
    const double dt = ts[1] - ts[0];
    for (std::size_t i = 1; i < ts.size(); ++i)
        if (std::abs(ts[i] - ts[i - 1] - dt) > 1e-9 * dt)
            throw SpecError("fractional_derivative: grid must be uniform");
}

// g(t_j) = int_0^{t_j} w(s) (f(t_j - s) - f0) ds by product integration:
// piecewise-linear f against exact kernel moments per cell, which handles the
// integrable singularity of w at 0.
inline std::vector<double> memory_integral(const std::vector<double>& ts,
                                           const std::vector<double>& fs,
                                           const FractionalKernel& kernel, double f0) {
    const std::size_t n = ts.size();
    const double dt = ts[1] - ts[0];
    std::vector<double> w0(n - 1), w1(n - 1);
    for (std::size_t i = 0; i + 1 < n; ++i) {
        w0[i] = kernel.tail_mass(ts[i], ts[i + 1]);
        w1[i] = kernel.tail_first_moment(ts[i], ts[i + 1]);
    }
    std::vector<double> g(n, 0.0);
    for (std::size_t j = 1; j < n; ++j) {
        double acc = 0.0;
        for (std::size_t i = 0; i < j; ++i) {
            const double fa = fs[j - i] - f0;     // value at s = ts[i]
            const double fb = fs[j - i - 1] - f0; // value at s = ts[i+1]
            acc += fa * w0[i] + (fb - fa) * w1[i] / dt;
        }
        g[j] = acc;
    }
    return g;
}

} // namespace tfdetail

// d^w_t f at the grid point ts[j] (interior), from samples of f on a uniform
// grid over [0, t]. The warning flags a first cell that carries most of the
// kernel mass, where the product rule cannot resolve the singularity.
inline FracDeriv fractional_derivative(const std::vector<double>& ts, const std::vector<double>& fs,
                                       const FractionalKernel& kernel, std::size_t j) {
    tfdetail::require_uniform(ts);
    if (fs.size() != ts.size()) throw SpecError("fractional_derivative: sample size mismatch");
    if (j == 0 || j + 1 >= ts.size())
        throw SpecError("fractional_derivative: t must be an interior grid point");
    const auto g = tfdetail::memory_integral(ts, fs, kernel, fs[0]);
    FracDeriv out;
    const double dt = ts[1] - ts[0];
    out.value = (g[j + 1] - g[j - 1]) / (2.0 * dt);
    if (!kernel.trivial_tail()) {
        const double head = kernel.tail_mass(0.0, dt);
        const double total = kernel.tail_mass(0.0, ts[j]);
        out.coarse_grid_warning = total > 0.0 && head > 0.5 * total;
    }
    return out;
}

struct ResidualReport {
    double max_residual = 0.0;
    double argmax_t = 0.0, argmax_x = 0.0;
    std::size_t n_checked = 0;
    bool pass = false;
    bool coarse_grid_warning = false;
};

struct VerifyOptions {
    int kink_halfwidth_cells = 4; // excluded band around the strike
    double min_time = 0.0;        // exclude the initial layer below this time
};

// Max interior residual of (kappa d/dt + d^w_t) u = 1/2 sigma^2 x^2 u_xx.
// The memory term is taken against the problem's initial payoff (x-K)^+, per
// the integral form of the equation, so a surface that drifts away from its
// declared initial data cannot pass.
inline ResidualReport verify_pde(const PdeSolution& sol, const FractionalKernel& kernel,
                                 double sigma, double tol, const VerifyOptions& opt = {}) {
    const auto& ts = sol.ts;
    const auto& xs = sol.xs;
    tfdetail::require_uniform(ts);
    if (xs.size() < 5) throw SpecError("verify_pde: x-grid too small");
    const double hx = xs[1] - xs[0];
    for (std::size_t i = 1; i < xs.size(); ++i)
        if (std::abs(xs[i] - xs[i - 1] - hx) > 1e-9 * hx)
            throw SpecError("verify_pde: x-grid must be uniform");

    const double dt = ts[1] - ts[0];
    ResidualReport rep;

    // memory integrals per x-column
    std::vector<std::vector<double>> g(xs.size());
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
    for (long long i = 0; i < static_cast<long long>(xs.size()); ++i) {
        const auto ii = static_cast<std::size_t>(i);
        std::vector<double> col(ts.size());
        for (std::size_t j = 0; j < ts.size(); ++j) col[j] = sol.at(j, ii);
        const double psi = std::max(xs[ii] - sol.strike, 0.0);
        g[ii] = tfdetail::memory_integral(ts, col, kernel, psi);
    }

    if (!kernel.trivial_tail()) {
        const double head = kernel.tail_mass(0.0, dt);
        const double total = kernel.tail_mass(0.0, ts.back());
        rep.coarse_grid_warning = total > 0.0 && head > 0.5 * total;
    }

    for (std::size_t j = 1; j + 1 < ts.size(); ++j) {
        if (ts[j] < opt.min_time) continue;
        for (std::size_t i = 1; i + 1 < xs.size(); ++i) {
            if (std::abs(xs[i] - sol.strike) <= opt.kink_halfwidth_cells * hx) continue;
            const double dudt = (sol.at(j + 1, i) - sol.at(j - 1, i)) / (2.0 * dt);
            const double dw = (g[i][j + 1] - g[i][j - 1]) / (2.0 * dt);
            const double uxx = (sol.at(j, i + 1) - 2.0 * sol.at(j, i) + sol.at(j, i - 1)) / (hx * hx);
            const double res = kernel.kappa() * dudt + dw - 0.5 * sigma * sigma * xs[i] * xs[i] * uxx;
            ++rep.n_checked;
            if (std::abs(res) > rep.max_residual) {
                rep.max_residual = std::abs(res);
                rep.argmax_t = ts[j];
                rep.argmax_x = xs[i];
            }
        }
    }
    rep.pass = rep.n_checked > 0 && rep.max_residual < tol;
    return rep;
}

// CSV export of the (t, x) surface.
inline void export_csv(const PdeSolution& sol, std::ostream& os) {
    os << "t,x,u,err_est\n";
    for (std::size_t j = 0; j < sol.ts.size(); ++j)
        for (std::size_t i = 0; i < sol.xs.size(); ++i)
            os << sol.ts[j] << ',' << sol.xs[i] << ',' << sol.at(j, i) << ','
               << sol.err_est[j * sol.xs.size() + i] << "\n";
}

} // namespace subdiff
