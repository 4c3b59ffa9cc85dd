#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "errors.hpp"
#include "stats.hpp"
#include "subordinator.hpp"

namespace subdiff {

// Spot market: one bond at rate r and d stocks driven by
//   dS_i = S_i ( r dt + mu_bar_i dL_{(t-a)^+} + sum_j sigma_ij dB^j_{L_{(t-a)^+}} ).
struct MarketSpec {
    double r = 0.0;
    Eigen::VectorXd mu_bar;
    Eigen::MatrixXd sigma;
    double a = 0.0;
    Eigen::VectorXd s0;
    SubordinatorSpec clock;
    double ellipticity_floor = 1e-8; // lambda in xi . sigma xi >= lambda |xi|^2

    int dim() const { return static_cast<int>(s0.size()); }

    void validate() const {
        const auto d = s0.size();
        if (d < 1) throw SpecError("market: needs at least one stock");
        if (mu_bar.size() != d) throw SpecError("market: mu_bar dimension mismatch");
        if (sigma.rows() != d || sigma.cols() != d) throw SpecError("market: sigma must be d x d");
        if (!(r >= 0.0)) throw SpecError("market: interest rate must be >= 0");
        if (!(a >= 0.0)) throw SpecError("market: wake-up time must be >= 0");
        for (Eigen::Index i = 0; i < d; ++i)
            if (!(s0[i] > 0.0)) throw SpecError("market: initial prices must be positive");
        const Eigen::MatrixXd sym = 0.5 * (sigma + sigma.transpose());
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym);
        const double lambda_min = es.eigenvalues().minCoeff();
        if (!(lambda_min >= ellipticity_floor))
            throw SpecError("market: sigma violates uniform ellipticity (min symmetric eigenvalue " +
                            std::to_string(lambda_min) + " < floor " +
                            std::to_string(ellipticity_floor) + ")");
        clock.validate();
    }
};

// Market price of risk mu_hat = sigma^{-1} mu_bar; the drift the measure change
// removes.
inline Eigen::VectorXd market_price_of_risk(const MarketSpec& spec) {
    spec.validate();
    return spec.sigma.colPivHouseholderQr().solve(spec.mu_bar);
}

enum class Measure { P, Q };

struct StockPaths {
    std::vector<double> grid;
    int d = 1;
    InverseClockSample clock;
    std::vector<double> prices;     // grid.size() x d, row-major
    std::vector<double> discounted; // e^{-rt} prices
    std::uint64_t seed = 0;
    std::uint64_t stream = 0;

    double price(std::size_t i, int j) const { return prices[i * static_cast<std::size_t>(d) + static_cast<std::size_t>(j)]; }
    double disc(std::size_t i, int j) const { return discounted[i * static_cast<std::size_t>(d) + static_cast<std::size_t>(j)]; }
};

// Exact exponential scheme in the log (no Euler bias): per step
//   dlog S_i = r dt + [mu_bar_i dL under P] + (sigma dW)_i - 1/2 (sigma sigma^T)_ii dL,
// with dW ~ N(0, dL I). Under Q the mu_bar term is absent. With mu_bar = 0 the
// two measures coincide pathwise for the same stream.
inline StockPaths simulate_stocks(const MarketSpec& spec, const std::vector<double>& grid,
                                  Measure measure, PathRng& rng, const PassageOptions& opt = {}) {
    spec.validate();
    const int d = spec.dim();
    StockPaths out;
    out.grid = grid;
    out.d = d;
    out.seed = rng.seed();
    out.stream = rng.stream();
    out.clock = sample_inverse_path(spec.clock, grid, spec.a, rng, opt);

    const Eigen::VectorXd half_var = (spec.sigma * spec.sigma.transpose()).diagonal() * 0.5;
    out.prices.assign(grid.size() * static_cast<std::size_t>(d), 0.0);
    out.discounted.assign(grid.size() * static_cast<std::size_t>(d), 0.0);
    Eigen::VectorXd logs = spec.s0.array().log();
    Eigen::VectorXd z(d);
    for (std::size_t i = 0; i < grid.size(); ++i) {
        if (i > 0) {
            const double dt = grid[i] - grid[i - 1];
            const double dl = out.clock.L[i] - out.clock.L[i - 1];
            const double sd = dl > 0.0 ? std::sqrt(dl) : 0.0;
            for (int j = 0; j < d; ++j) z[j] = sd > 0.0 ? sd * rng.normal() : 0.0;
            logs += spec.r * dt * Eigen::VectorXd::Ones(d);
            if (measure == Measure::P) logs += spec.mu_bar * dl;
            logs += spec.sigma * z - half_var * dl;
        }
        const double disc = std::exp(-spec.r * grid[i]);
        for (int j = 0; j < d; ++j) {
            const double p = std::exp(logs[j]);
            out.prices[i * static_cast<std::size_t>(d) + static_cast<std::size_t>(j)] = p;
            out.discounted[i * static_cast<std::size_t>(d) + static_cast<std::size_t>(j)] = disc * p;
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Martingale diagnostics for discounted prices
// ---------------------------------------------------------------------------

struct MartingaleCheckEntry {
    double s = 0.0, t = 0.0;
    int stock = 0;
    std::vector<double> coef;  // regression on (1, disc price_s, L_s, R_s)
    std::vector<double> tstat; // White robust
    bool pass = false;
};

struct MartingaleCheckReport {
    std::vector<MartingaleCheckEntry> entries;
    bool all_pass = false;
    std::size_t n_paths = 0;
};

namespace detail {

inline std::size_t grid_index(const std::vector<double>& grid, double t) {
    for (std::size_t i = 0; i < grid.size(); ++i)
        if (std::abs(grid[i] - t) <= 1e-12 * (1.0 + std::abs(t))) return i;
    throw SpecError("martingale check: checkpoint " + std::to_string(t) + " is not a grid point");
}

// OLS of y on X with White (HC0) standard errors.
inline std::pair<Eigen::VectorXd, Eigen::VectorXd> ols_robust(const Eigen::MatrixXd& x,
                                                              const Eigen::VectorXd& y) {
    const Eigen::MatrixXd xtx = x.transpose() * x;
    const Eigen::VectorXd beta = xtx.ldlt().solve(x.transpose() * y);
    const Eigen::VectorXd resid = y - x * beta;
    const Eigen::MatrixXd xtx_inv = xtx.inverse();
    Eigen::MatrixXd meat = Eigen::MatrixXd::Zero(x.cols(), x.cols());
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        const Eigen::VectorXd xi = x.row(i).transpose();
        meat += resid[i] * resid[i] * xi * xi.transpose();
    }
    const Eigen::MatrixXd cov = xtx_inv * meat * xtx_inv;
    Eigen::VectorXd se = cov.diagonal().array().sqrt();
    return {beta, se};
}

} // namespace detail

// For each checkpoint pair s < t and stock i, regress the discounted increment
// e^{-rt} S_t - e^{-rs} S_s on time-s measurable features (1, discounted price,
// L_s, R_s). Under the martingale measure every coefficient is 0 within noise;
// the gate is |t-stat| <= 3.
inline MartingaleCheckReport discounted_martingale_check(
    const std::vector<StockPaths>& paths, const std::vector<std::pair<double, double>>& checkpoints) {
    if (paths.empty()) throw SpecError("martingale check: no paths");
    const auto& grid = paths.front().grid;
    const int d = paths.front().d;
    const auto n = static_cast<Eigen::Index>(paths.size());

    MartingaleCheckReport rep;
    rep.n_paths = paths.size();
    rep.all_pass = true;
    for (const auto& [s, t] : checkpoints) {
        if (!(s < t)) throw SpecError("martingale check: need s < t");
        const std::size_t is = detail::grid_index(grid, s);
        const std::size_t it = detail::grid_index(grid, t);
        for (int j = 0; j < d; ++j) {
            Eigen::MatrixXd x(n, 4);
            Eigen::VectorXd y(n);
            for (Eigen::Index p = 0; p < n; ++p) {
                const auto& sp = paths[static_cast<std::size_t>(p)];
                x(p, 0) = 1.0;
                x(p, 1) = sp.disc(is, j);
                x(p, 2) = sp.clock.L[is];
                x(p, 3) = sp.clock.R[is];
                y(p) = sp.disc(it, j) - sp.disc(is, j);
            }
            auto [beta, se] = detail::ols_robust(x, y);
            MartingaleCheckEntry e;
            e.s = s;
            e.t = t;
            e.stock = j;
            e.pass = true;
            for (Eigen::Index k = 0; k < beta.size(); ++k) {
                e.coef.push_back(beta[k]);
                const double ts = se[k] > 0.0 ? beta[k] / se[k] : 0.0;
                e.tstat.push_back(ts);
                e.pass = e.pass && std::abs(ts) <= 3.0;
            }
            rep.all_pass = rep.all_pass && e.pass;
            rep.entries.push_back(std::move(e));
        }
    }
    return rep;
}

// Simulation driver for the check above. Paths are generated on per-path
// streams and only the checkpoint rows are retained, so path count is bounded
// by memory for the regression tables alone.
inline MartingaleCheckReport discounted_martingale_check(
    const MarketSpec& spec, Measure measure, const std::vector<std::pair<double, double>>& checkpoints,
    const std::vector<double>& grid, std::size_t n_paths, std::uint64_t seed,
    const PassageOptions& opt = {}) {
    spec.validate();
    const int d = spec.dim();
    std::vector<std::pair<std::size_t, std::size_t>> idx;
    for (const auto& [s, t] : checkpoints) {
        if (!(s < t)) throw SpecError("martingale check: need s < t");
        idx.emplace_back(detail::grid_index(grid, s), detail::grid_index(grid, t));
    }
    const std::size_t n_tables = checkpoints.size() * static_cast<std::size_t>(d);
    std::vector<Eigen::MatrixXd> xs(n_tables, Eigen::MatrixXd(n_paths, 4));
    std::vector<Eigen::VectorXd> ys(n_tables, Eigen::VectorXd(n_paths));

#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
    for (long long i = 0; i < static_cast<long long>(n_paths); ++i) {
        PathRng rng(seed, static_cast<std::uint64_t>(i));
        const StockPaths p = simulate_stocks(spec, grid, measure, rng, opt);
        for (std::size_t c = 0; c < idx.size(); ++c) {
            const auto [is, it] = idx[c];
            for (int j = 0; j < d; ++j) {
                const std::size_t tab = c * static_cast<std::size_t>(d) + static_cast<std::size_t>(j);
                xs[tab](i, 0) = 1.0;
                xs[tab](i, 1) = p.disc(is, j);
                xs[tab](i, 2) = p.clock.L[is];
                xs[tab](i, 3) = p.clock.R[is];
                ys[tab](i) = p.disc(it, j) - p.disc(is, j);
            }
        }
    }

    MartingaleCheckReport rep;
    rep.n_paths = n_paths;
    rep.all_pass = true;
    for (std::size_t c = 0; c < checkpoints.size(); ++c) {
        for (int j = 0; j < d; ++j) {
            const std::size_t tab = c * static_cast<std::size_t>(d) + static_cast<std::size_t>(j);
            auto [beta, se] = detail::ols_robust(xs[tab], ys[tab]);
            MartingaleCheckEntry e;
            e.s = checkpoints[c].first;
            e.t = checkpoints[c].second;
            e.stock = j;
            e.pass = true;
            for (Eigen::Index k = 0; k < beta.size(); ++k) {
                e.coef.push_back(beta[k]);
                const double ts = se[k] > 0.0 ? beta[k] / se[k] : 0.0;
                e.tstat.push_back(ts);
                e.pass = e.pass && std::abs(ts) <= 3.0;
            }
            rep.all_pass = rep.all_pass && e.pass;
            rep.entries.push_back(std::move(e));
        }
    }
    return rep;
}

// Discrete self-financing bookkeeping: with shares[k] held over [t_k, t_{k+1}),
// the discounted wealth accumulates exactly as
//   D_{k+1} = D_k + sum_i shares[k][i] (disc_i(t_{k+1}) - disc_i(t_k)).
inline std::vector<double> discounted_wealth_path(const StockPaths& paths,
                                                  const std::vector<Eigen::VectorXd>& shares,
                                                  double initial_wealth) {
    if (shares.size() + 1 != paths.grid.size())
        throw SpecError("wealth: need one share vector per grid step");
    std::vector<double> w(paths.grid.size(), initial_wealth);
    for (std::size_t k = 0; k + 1 < paths.grid.size(); ++k) {
        if (shares[k].size() != paths.d) throw SpecError("wealth: share dimension mismatch");
        double inc = 0.0;
        for (int j = 0; j < paths.d; ++j)
            inc += shares[k][j] * (paths.disc(k + 1, j) - paths.disc(k, j));
        w[k + 1] = w[k] + inc;
    }
    return w;
}

// CSV export: t, then one price column per stock, then discounted columns.
inline void export_csv(const StockPaths& p, std::ostream& os) {
    os << "t,L,R";
    for (int j = 1; j <= p.d; ++j) os << ",price_" << j;
    for (int j = 1; j <= p.d; ++j) os << ",discounted_" << j;
    os << "\n";
    for (std::size_t i = 0; i < p.grid.size(); ++i) {
        os << p.grid[i] << ',' << p.clock.L[i] << ',' << p.clock.R[i];
        for (int j = 0; j < p.d; ++j) os << ',' << p.price(i, j);
        for (int j = 0; j < p.d; ++j) os << ',' << p.disc(i, j);
        os << "\n";
    }
}

} // namespace subdiff
