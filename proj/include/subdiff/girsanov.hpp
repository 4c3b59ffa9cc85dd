#pragma once

#include <cmath>
#include <complex>
#include <cstddef>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "errors.hpp"
#include "stats.hpp"
#include "subdiffusion.hpp"

namespace subdiff {

// Adapted drift rule b(t, path-so-far): evaluated at the left endpoint of each
// grid step (Ito convention), and must read only path data at indices <= step.
struct DriftProcess {
    std::function<Eigen::VectorXd(std::size_t step, const SubdiffusionPath&)> eval;
    std::optional<double> sup_bound; // enables the Novikov check when known
};

inline DriftProcess constant_drift(Eigen::VectorXd theta) {
    DriftProcess b;
    const double norm = theta.norm();
    b.eval = [theta = std::move(theta)](std::size_t, const SubdiffusionPath&) { return theta; };
    b.sup_bound = norm;
    return b;
}

inline DriftProcess constant_drift(double theta) {
    Eigen::VectorXd v(1);
    v << theta;
    return constant_drift(v);
}

// Bounded drifts always satisfy the exponential-integrability condition the
// measure change requires (the clock has exponential moments of all orders);
// unbounded drifts are allowed but flagged.
inline bool novikov_verified(const DriftProcess& b) { return b.sup_bound.has_value(); }

// The exponential martingale M_t = exp(-int b dB_L - 1/2 int |b|^2 dL),
// accumulated in log space over grid steps:
//   log M_{i+1} = log M_i - b_i . dX_i - 1/2 |b_i|^2 dL_i.
// Exact when b is piecewise constant on the grid.
struct GirsanovWeight {
    std::vector<double> grid;
    std::vector<double> log_m;
    std::vector<double> m;
};

inline GirsanovWeight weight_path(const SubdiffusionPath& path, const DriftProcess& b) {
    GirsanovWeight w;
    w.grid = path.grid;
    w.log_m.assign(path.points(), 0.0);
    w.m.assign(path.points(), 1.0);
    double acc = 0.0;
    for (std::size_t i = 0; i + 1 < path.points(); ++i) {
        Eigen::VectorXd bi;
        try {
            bi = b.eval(i, path);
        } catch (const std::exception& e) {
            throw NumericError(std::string("weight_path: drift evaluation failed at step ") +
                               std::to_string(i) + ": " + e.what());
        }
        if (bi.size() != path.dim) throw SpecError("weight_path: drift dimension mismatch");
        double dot = 0.0;
        for (int j = 0; j < path.dim; ++j) dot += bi[j] * path.dX(i, j);
        acc += -dot - 0.5 * bi.squaredNorm() * path.dL(i);
        w.log_m[i + 1] = acc;
        w.m[i + 1] = std::exp(acc);
    }
    return w;
}

struct QExpectation {
    double estimate = 0.0;
    double stderr_ = 0.0;
    std::size_t n_paths = 0;
    bool novikov_verified = true;
};

// Importance-sampled expectation under the changed measure:
// E^Q[f] = E^P[M_T f(path)], Monte Carlo over independent per-path streams.
inline QExpectation expectation_under_Q(const std::function<double(const SubdiffusionPath&)>& f,
                                        const DriftProcess& b, const SubordinatorSpec& spec,
                                        double a, int d, const std::vector<double>& grid,
                                        std::size_t n_paths, std::uint64_t seed,
                                        const PassageOptions& opt = {}) {
    std::vector<double> vals(n_paths);
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
    for (long long i = 0; i < static_cast<long long>(n_paths); ++i) {
        PathRng rng(seed, static_cast<std::uint64_t>(i));
        const auto path = sample_subdiffusion(spec, a, d, grid, rng, opt);
        const auto w = weight_path(path, b);
        vals[static_cast<std::size_t>(i)] = w.m.back() * f(path);
    }
    const auto s = summarize(vals);
    return {s.mean, s.stderr_, n_paths, novikov_verified(b)};
}

// Decompose beta = theta u + alpha along the path: the returned drift u, fed to
// weight_path, produces the measure under which dX = alpha dL + theta dB^_L.
inline DriftProcess remove_drift(
    const std::function<Eigen::VectorXd(std::size_t, const SubdiffusionPath&)>& beta_proc,
    const std::function<Eigen::MatrixXd(std::size_t, const SubdiffusionPath&)>& theta_proc,
    const std::function<Eigen::VectorXd(std::size_t, const SubdiffusionPath&)>& alpha_proc) {
    DriftProcess u;
    u.eval = [=](std::size_t step, const SubdiffusionPath& path) {
        const Eigen::MatrixXd th = theta_proc(step, path);
        const Eigen::VectorXd rhs = beta_proc(step, path) - alpha_proc(step, path);
        Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(th);
        if (cod.rank() < std::min(th.rows(), th.cols()))
            throw NumericError("remove_drift: singular theta at grid time t=" +
                               std::to_string(path.grid[step]));
        const Eigen::VectorXd sol = cod.solve(rhs);
        if ((th * sol - rhs).norm() > 1e-10 * (1.0 + rhs.norm()))
            throw NumericError("remove_drift: theta has no right inverse for beta-alpha at grid time t=" +
                               std::to_string(path.grid[step]));
        return sol;
    };
    return u;
}

// ---------------------------------------------------------------------------
// Law-equivalence battery
// ---------------------------------------------------------------------------

struct BatteryStatistic {
    std::string name;
    double weighted = 0.0;
    double weighted_se = 0.0;
    double plain = 0.0;
    double plain_se = 0.0;
    bool pass = false;
    double gap_over_se = 0.0;
};

struct GirsanovReport {
    double mean_m = 0.0;
    double mean_m_se = 0.0;
    bool martingale_pass = false;
    std::vector<BatteryStatistic> stats;
    bool all_pass = false;
    std::size_t n_paths = 0;
};

// Compares M-weighted statistics of the drifted path Y = B_L + theta L against
// unweighted statistics of an independent driftless B_L: marginal moments up to
// order 4, the characteristic function at five frequencies, and the quadratic
// variation at the horizon. Scalar driver.
inline GirsanovReport girsanov_battery(const SubordinatorSpec& spec, double a, double theta,
                                       const std::vector<double>& grid, std::size_t n_paths,
                                       std::uint64_t seed, const PassageOptions& opt = {}) {
    const std::vector<double> freqs = {0.5, 1.0, 2.0, 4.0, 8.0};
    // per-path slots: M, then weighted stats, then plain stats
    const std::size_t n_stats = 4 + 2 * freqs.size() + 1;
    std::vector<double> mslot(n_paths);
    std::vector<std::vector<double>> wslot(n_stats, std::vector<double>(n_paths));
    std::vector<std::vector<double>> pslot(n_stats, std::vector<double>(n_paths));
    const DriftProcess b = constant_drift(theta);

#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
    for (long long i = 0; i < static_cast<long long>(n_paths); ++i) {
        const auto idx = static_cast<std::size_t>(i);
        // drifted path under P, with its weight
        PathRng rng(seed, static_cast<std::uint64_t>(i));
        const auto path = sample_subdiffusion(spec, a, 1, grid, rng, opt);
        const auto w = weight_path(path, b);
        const double m = w.m.back();
        mslot[idx] = m;
        double y = path.value(path.points() - 1, 0) + theta * path.clock.L.back();
        double qv = 0.0;
        for (std::size_t k = 0; k + 1 < path.points(); ++k) {
            const double dy = path.dX(k, 0) + theta * path.dL(k);
            qv += dy * dy;
        }
        std::size_t s = 0;
        double pw = y;
        for (int mom = 1; mom <= 4; ++mom, pw *= y) wslot[s++][idx] = m * pw;
        for (double f : freqs) {
            wslot[s++][idx] = m * std::cos(f * y);
            wslot[s++][idx] = m * std::sin(f * y);
        }
        wslot[s++][idx] = m * qv;

        // independent driftless path
        PathRng rng2(seed ^ 0x5bf0a8b145fe89abULL, static_cast<std::uint64_t>(i));
        const auto plain = sample_subdiffusion(spec, a, 1, grid, rng2, opt);
        const double z = plain.value(plain.points() - 1, 0);
        double qvp = 0.0;
        for (std::size_t k = 0; k + 1 < plain.points(); ++k) qvp += plain.dX(k, 0) * plain.dX(k, 0);
        s = 0;
        double pz = z;
        for (int mom = 1; mom <= 4; ++mom, pz *= z) pslot[s++][idx] = pz;
        for (double f : freqs) {
            pslot[s++][idx] = std::cos(f * z);
            pslot[s++][idx] = std::sin(f * z);
        }
        pslot[s++][idx] = qvp;
    }

    GirsanovReport rep;
    rep.n_paths = n_paths;
    const auto msum = summarize(mslot);
    rep.mean_m = msum.mean;
    rep.mean_m_se = msum.stderr_;
    rep.martingale_pass = std::abs(msum.mean - 1.0) <= 3.0 * msum.stderr_;

    std::vector<std::string> names;
    for (int mom = 1; mom <= 4; ++mom) names.push_back("moment_" + std::to_string(mom));
    for (double f : freqs) {
        names.push_back("charfn_re_" + std::to_string(f));
        names.push_back("charfn_im_" + std::to_string(f));
    }
    names.push_back("quadratic_variation");

    rep.all_pass = rep.martingale_pass;
    for (std::size_t s = 0; s < n_stats; ++s) {
        const auto ws = summarize(wslot[s]);
        const auto ps = summarize(pslot[s]);
        BatteryStatistic st;
        st.name = names[s];
        st.weighted = ws.mean;
        st.weighted_se = ws.stderr_;
        st.plain = ps.mean;
        st.plain_se = ps.stderr_;
        const double se = std::sqrt(ws.stderr_ * ws.stderr_ + ps.stderr_ * ps.stderr_);
        st.gap_over_se = se > 0.0 ? std::abs(ws.mean - ps.mean) / se : 0.0;
        st.pass = std::abs(ws.mean - ps.mean) <= 3.0 * se;
        rep.all_pass = rep.all_pass && st.pass;
        rep.stats.push_back(std::move(st));
    }
    return rep;
}

} // namespace subdiff
