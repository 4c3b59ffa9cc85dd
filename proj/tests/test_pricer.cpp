#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include <subdiff/girsanov.hpp>
#include <subdiff/pricer.hpp>

using namespace subdiff;

namespace {

MarketSpec one_asset(double r, double sigma, double s0, double a, SubordinatorSpec clock,
                     double mu = 0.0) {
    MarketSpec m;
    m.r = r;
    m.mu_bar = Eigen::VectorXd::Constant(1, mu);
    m.sigma = Eigen::MatrixXd::Constant(1, 1, sigma);
    m.a = a;
    m.s0 = Eigen::VectorXd::Constant(1, s0);
    m.clock = std::move(clock);
    return m;
}

// undiscounted Black-Scholes call on the forward, total variance v
double bs_call_forward(double fwd, double strike, double v) {
    if (v <= 0.0) return std::max(fwd - strike, 0.0);
    const double sd = std::sqrt(v);
    const double d1 = (std::log(fwd / strike) + 0.5 * v) / sd;
    return fwd * norm_cdf(d1) - strike * norm_cdf(d1 - sd);
}

} // namespace

TEST_CASE("conditional value: edge cases and the normal-CDF oracle", "[pricer]") {
    const auto call1 = PayoffSpec::call(2.0, 1.0);
    CHECK(conditional_bs(1.0, 0.0, 0.0, 0.2, 1.0, call1) == 0.0); // degenerate, out of the money

    const auto call2 = PayoffSpec::call(1.0, 1.0);
    const double expect = 2.0 * norm_cdf(0.1) - 1.0; // ~0.0796557
    CHECK(conditional_bs(1.0, 1.0, 0.0, 0.2, 1.0, call2) == Catch::Approx(expect).epsilon(1e-12));
    CHECK(expect == Catch::Approx(0.0796557).margin(5e-7));

    // saturation: y -> infinity drives the call to the forward value
    const double sat = conditional_bs(1.0, 1e8, 0.0, 0.2, 1.0, call2);
    CHECK(sat == Catch::Approx(1.0).epsilon(1e-6));
    double prev = 0.0;
    for (double y : {0.1, 1.0, 10.0, 1000.0}) {
        const double v = conditional_bs(1.0, y, 0.0, 0.2, 1.0, call2);
        CHECK(v >= prev);
        prev = v;
    }
}

TEST_CASE("conditional put-call parity is exact", "[pricer]") {
    PathRng rng(110, 0);
    for (int i = 0; i < 200; ++i) {
        const double x = 0.5 + 2.0 * rng.uniform();
        const double k = 0.5 + 2.0 * rng.uniform();
        const double y = 4.0 * rng.uniform();
        const double r = 0.1 * rng.uniform();
        const double sigma = 0.1 + 0.4 * rng.uniform();
        const double tau = 0.1 + 2.0 * rng.uniform();
        const double c = conditional_bs(x, y, r, sigma, tau, PayoffSpec::call(k, tau));
        const double p = conditional_bs(x, y, r, sigma, tau, PayoffSpec::put(k, tau));
        CHECK(c - p == Catch::Approx(x * std::exp(r * tau) - k).margin(1e-10));
    }
}

TEST_CASE("custom payoff agrees with the closed form", "[pricer]") {
    const double k = 1.1;
    auto psi = [k](double s) { return std::max(s - k, 0.0); };
    const auto custom = PayoffSpec::custom(psi, 1.0, k, 1.0);
    const auto call = PayoffSpec::call(k, 1.0);
    for (double y : {0.25, 1.0, 2.0}) {
        const double a = conditional_bs(1.0, y, 0.02, 0.2, 1.0, custom, 64);
        const double b = conditional_bs(1.0, y, 0.02, 0.2, 1.0, call);
        CHECK(a == Catch::Approx(b).margin(1e-3)); // Hermite rule degrades on the kink
    }

    // smooth payoffs converge spectrally: psi(s) = s has E = forward, exactly
    const auto fwd_payoff = PayoffSpec::custom([](double s) { return s; }, 1.0, 0.0, 1.0);
    const double f = conditional_bs(1.0, 1.5, 0.02, 0.2, 1.0, fwd_payoff, 64);
    CHECK(f == Catch::Approx(std::exp(0.02)).epsilon(1e-12));
}

TEST_CASE("dormant market prices exactly", "[pricer]") {
    const auto m = one_asset(0.03, 0.2, 1.0, 0.0, SubordinatorSpec::stable(0.5));
    const auto call = PayoffSpec::call(1.0, 1.0);
    // overshoot beyond maturity: V = (x - K e^{-r tau})^+
    const auto res = price_by_mc(m, call, 1.0, /*overshoot=*/2.0, /*tau=*/1.0, 10, 1);
    CHECK(res.value == Catch::Approx(1.0 - std::exp(-0.03)).epsilon(1e-12));
    CHECK(res.stderr_ == 0.0);
    const auto resq = price_by_quadrature(m, call, 1.0, 2.0, 1.0);
    CHECK(resq.value == Catch::Approx(res.value).epsilon(1e-12));
}

TEST_CASE("classical limit matches Black-Scholes", "[pricer]") {
    const auto m = one_asset(0.0, 0.2, 1.0, 0.0, SubordinatorSpec::deterministic(1.0));
    const auto call = PayoffSpec::call(1.0, 1.0);
    const double oracle = 2.0 * norm_cdf(0.1) - 1.0;

    const auto mc = price_by_mc(m, call, 1.0, 0.0, 1.0, 2000, 2);
    CHECK(mc.value == Catch::Approx(oracle).epsilon(1e-12)); // degenerate clock: zero variance

    const auto degen = price_deterministic(m, call, 1.0, 0.0, 1.0);
    CHECK(degen.value == Catch::Approx(oracle).epsilon(1e-12));
}

TEST_CASE("quadrature requires a stable clock", "[pricer]") {
    const auto det = one_asset(0.0, 0.2, 1.0, 0.0, SubordinatorSpec::deterministic(1.0));
    CHECK_THROWS_AS(price_by_quadrature(det, PayoffSpec::call(1.0, 1.0), 1.0, 0.0, 1.0), SpecError);
    const auto drift = one_asset(0.0, 0.2, 1.0, 0.0, SubordinatorSpec::drifted_stable(1.0, 0.5));
    CHECK_THROWS_AS(price_by_quadrature(drift, PayoffSpec::call(1.0, 1.0), 1.0, 0.0, 1.0), SpecError);
}

TEST_CASE("stable benchmark: quadrature vs conditional MC vs plain MC", "[pricer][slow]") {
    const auto m = one_asset(0.03, 0.2, 1.0, 0.0, SubordinatorSpec::stable(0.5));
    const auto call = PayoffSpec::call(1.0, 1.0);
    const auto quad = price_by_quadrature(m, call, 1.0, 0.0, 1.0);
    const auto mc = price_by_mc(m, call, 1.0, 0.0, 1.0, 100000, 3);
    const auto plain = price_plain_mc(m, call, 1.0, 0.0, 1.0, 100000, 4);
    CHECK(std::abs(quad.value - mc.value) < 3.0 * mc.stderr_);
    CHECK(std::abs(quad.value - plain.value) < 3.0 * plain.stderr_);
    CHECK(std::abs(mc.value - plain.value) <
          3.0 * std::sqrt(mc.stderr_ * mc.stderr_ + plain.stderr_ * plain.stderr_));
    CHECK(quad.stderr_ == 0.0);
    CHECK(quad.diagnostics.at("tail_bound") <= 1e-9);
}

TEST_CASE("put-call parity by quadrature", "[pricer]") {
    const auto m = one_asset(0.03, 0.2, 1.0, 0.0, SubordinatorSpec::stable(0.5));
    const auto c = price_by_quadrature(m, PayoffSpec::call(1.0, 1.0), 1.0, 0.0, 1.0);
    const auto p = price_by_quadrature(m, PayoffSpec::put(1.0, 1.0), 1.0, 0.0, 1.0);
    CHECK(c.value - p.value == Catch::Approx(1.0 - std::exp(-0.03)).margin(1e-8));
}

TEST_CASE("rao-blackwellization dominates plain MC", "[pricer]") {
    const auto m = one_asset(0.03, 0.2, 1.0, 0.0, SubordinatorSpec::stable(0.5));
    const auto call = PayoffSpec::call(1.0, 1.0);
    const auto cond = price_by_mc(m, call, 1.0, 0.0, 1.0, 10000, 5);
    const auto plain = price_plain_mc(m, call, 1.0, 0.0, 1.0, 10000, 5);
    CHECK(cond.stderr_ < plain.stderr_);
    CHECK(cond.diagnostics.count("market_uncertainty_var") == 1);
}

TEST_CASE("measure-consistency triangle with the weighted P-route", "[pricer][slow]") {
    // exact-law pricing == Girsanov-weighted P-simulation == quadrature
    const double r = 0.03, sigma = 0.2, T = 1.0, mu = 0.1;
    const auto m = one_asset(r, sigma, 1.0, 0.0, SubordinatorSpec::stable(0.5), mu);
    const auto call = PayoffSpec::call(1.0, T);

    const auto quad = price_by_quadrature(m, call, 1.0, 0.0, T);
    const auto mc = price_by_mc(m, call, 1.0, 0.0, T, 100000, 6);

    // weighted route: simulate S under P, weight with the market price of risk
    const double theta = mu / sigma;
    std::vector<double> grid;
    for (int i = 0; i <= 64; ++i) grid.push_back(T * i / 64.0);
    const std::size_t n = 100000;
    std::vector<double> vals(n);
    const PassageOptions fast{4e-3, 50'000'000};
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
    for (long long i = 0; i < static_cast<long long>(n); ++i) {
        PathRng rng(7, static_cast<std::uint64_t>(i));
        const auto path = sample_subdiffusion(m.clock, 0.0, 1, grid, rng, fast);
        // price path under P: uses mu dL drift
        const double lT = path.clock.L.back();
        const double bT = path.value(path.points() - 1, 0);
        const double sT = std::exp(r * T + mu * lT + sigma * bT - 0.5 * sigma * sigma * lT);
        const auto w = weight_path(path, constant_drift(theta));
        vals[static_cast<std::size_t>(i)] = std::exp(-r * T) * w.m.back() * call(sT);
    }
    const auto ws = summarize(vals);

    CHECK(std::abs(quad.value - mc.value) < 3.0 * mc.stderr_);
    CHECK(std::abs(quad.value - ws.mean) < 3.0 * ws.stderr_);
    CHECK(std::abs(mc.value - ws.mean) <
          3.0 * std::sqrt(mc.stderr_ * mc.stderr_ + ws.stderr_ * ws.stderr_));
}

TEST_CASE("value surface shape", "[pricer]") {
    const auto m = one_asset(0.03, 0.2, 1.0, 0.0, SubordinatorSpec::stable(0.5));
    const auto call = PayoffSpec::call(1.0, 1.0);
    const std::vector<double> ts = {0.0, 0.5, 1.0};
    const std::vector<double> xs = {0.5, 0.8, 1.0, 1.3, 1.8};
    const std::vector<double> as = {0.0, 0.2, 2.0};
    const auto surf = value_surface(m, call, ts, xs, as);

    for (std::size_t it = 0; it < ts.size(); ++it) {
        const double tau = 1.0 - ts[it];
        for (std::size_t ix = 0; ix < xs.size(); ++ix) {
            // t = T row equals the payoff
            if (tau == 0.0)
                CHECK(surf(it, ix, 0) == Catch::Approx(std::max(xs[ix] - 1.0, 0.0)).margin(1e-12));
            // dormant column equals the intrinsic forward value
            CHECK(surf(it, ix, 2) ==
                  Catch::Approx(std::max(xs[ix] - std::exp(-0.03 * tau), 0.0) * 1.0).margin(1e-12));
        }
        // monotone in x for calls
        for (std::size_t ia = 0; ia < as.size(); ++ia)
            for (std::size_t ix = 0; ix + 1 < xs.size(); ++ix)
                CHECK(surf(it, ix, ia) <= surf(it, ix + 1, ia) + 1e-9);
    }
}

TEST_CASE("discounted value process is constant in expectation", "[pricer][slow]") {
    // E^Q[e^{-rt} V_t] = V_0 along the surface diagonal; estimated by the
    // tower property with one exact clock draw per path
    const double r = 0.03, sigma = 0.2, T = 1.0;
    const auto m = one_asset(r, sigma, 1.0, 0.0, SubordinatorSpec::stable(0.5));
    const auto call = PayoffSpec::call(1.0, T);
    const auto v0 = price_by_quadrature(m, call, 1.0, 0.0, T);

    const PassageOptions fast{4e-3, 50'000'000};
    for (double t : {0.25, 0.5, 0.75}) {
        std::vector<double> grid;
        for (int i = 0; i <= 16; ++i) grid.push_back(t * i / 16.0);
        const std::size_t n = 40000;
        std::vector<double> vals(n);
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
        for (long long i = 0; i < static_cast<long long>(n); ++i) {
            PathRng rng(8, static_cast<std::uint64_t>(i));
            const auto sp = simulate_stocks(m, grid, Measure::Q, rng, fast);
            const double x = sp.price(16, 0);
            const double atil = sp.clock.R[16];
            const double tau = T - t;
            const double u = std::max(tau - atil, 0.0);
            const double y = u > 0.0 ? sample_inverse_stable(0.5, u, rng) : 0.0;
            const double vt = std::exp(-r * tau) * conditional_bs(x, y, r, sigma, tau, call);
            vals[static_cast<std::size_t>(i)] = std::exp(-r * t) * vt;
        }
        const auto s = summarize(vals);
        CHECK(std::abs(s.mean - v0.value) < 3.0 * s.stderr_);
    }
}

TEST_CASE("price results respect the arbitrage envelope", "[pricer]") {
    const auto m = one_asset(0.03, 0.2, 1.0, 0.0, SubordinatorSpec::stable(0.5));
    for (double k : {0.2, 1.0, 4.0}) {
        const auto res = price_by_quadrature(m, PayoffSpec::call(k, 1.0), 1.0, 0.0, 1.0);
        CHECK(res.value >= 0.0);
        CHECK(res.value <= 1.0 + 1e-9);
    }
}
