#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include <subdiff/density.hpp>

using namespace subdiff;

namespace {
// beta = 1/2 closed form: h(t, x) = exp(-x^2 / (4t)) / sqrt(pi t)
double half_stable(double t, double x) {
    return std::exp(-x * x / (4.0 * t)) / std::sqrt(M_PI * t);
}
} // namespace

TEST_CASE("series matches the half-stable closed form", "[density]") {
    for (double x : {0.0, 0.5, 1.0, 2.0, 4.0}) {
        const auto ev = inverse_stable_density(0.5, 1.0, x, 1e-9);
        CHECK(ev.value == Catch::Approx(half_stable(1.0, x)).margin(1e-8));
        CHECK(ev.est_error <= 1e-9);
        CHECK(ev.terms_used >= 1);
    }
    CHECK(inverse_stable_density(0.5, 1.0, 1.0).value == Catch::Approx(0.43939).margin(1e-5));
    CHECK(inverse_stable_density(0.5, 1.0, 0.0).value == Catch::Approx(0.56419).margin(1e-5));
}

TEST_CASE("series holds at other scales", "[density]") {
    for (double t : {0.25, 2.0}) {
        for (double x : {0.1, 1.0, 3.0}) {
            const auto ev = inverse_stable_density(0.5, t, x, 1e-10);
            CHECK(ev.value == Catch::Approx(half_stable(t, x)).margin(1e-9));
        }
    }
}

TEST_CASE("large arguments switch to extended precision and stay accurate", "[density]") {
    // the value is ~1.3e-16 against series terms up to ~1e14: hopeless in
    // doubles, fine with the 50-digit accumulation
    const auto ev = inverse_stable_density(0.5, 1.0, 12.0, 1e-22);
    CHECK(ev.value == Catch::Approx(half_stable(1.0, 12.0)).epsilon(1e-6));
    CHECK(ev.est_error <= 1e-22);
}

TEST_CASE("unattainable tolerance raises with an MC-fallback hint", "[density]") {
    try {
        inverse_stable_density(0.5, 0.02, 10.0, 1e-9);
        FAIL("expected NumericError");
    } catch (const NumericError& e) {
        CHECK(std::string(e.what()).find("Monte Carlo") != std::string::npos);
    }
}

TEST_CASE("density normalizes to one", "[density]") {
    for (double beta : {0.3, 0.5, 0.7}) {
        CHECK(inverse_stable_density_mass(beta, 1.0) == Catch::Approx(1.0).margin(1e-6));
    }
}

TEST_CASE("density is nonnegative up to the feasibility boundary", "[density]") {
    // high beta narrows the series' reach; past it the evaluator must refuse
    // rather than return noise
    for (double beta : {0.2, 0.4, 0.6, 0.8}) {
        int evaluated = 0;
        for (double x = 0.0; x <= 6.0; x += 0.37) {
            double v;
            try {
                v = inverse_stable_density(beta, 1.0, x, 1e-8).value;
            } catch (const NumericError&) {
                break;
            }
            CHECK(v >= 0.0);
            ++evaluated;
        }
        CHECK(evaluated >= 8);
    }
}

TEST_CASE("argument validation", "[density]") {
    CHECK_THROWS_AS(inverse_stable_density(1.2, 1.0, 1.0), SpecError);
    CHECK_THROWS_AS(inverse_stable_density(0.5, 0.0, 1.0), SpecError);
    CHECK_THROWS_AS(inverse_stable_density(0.5, 1.0, -1.0), SpecError);
}

TEST_CASE("empirical CDF of exact draws matches the integrated density", "[density][slow]") {
    const double beta = 0.6; // no closed form here; integrate the series
    const std::size_t n = 100000;
    std::vector<double> vals(n);
    for (std::size_t i = 0; i < n; ++i) {
        PathRng rng(4242, i);
        vals[i] = sample_inverse_stable(beta, 1.0, rng);
    }
    std::sort(vals.begin(), vals.end());
    double worst = 0.0;
    for (double x = 0.1; x <= 3.0; x += 0.1) {
        const double cdf = inverse_stable_cdf(beta, 1.0, x, 1e-8);
        const double emp =
            static_cast<double>(std::lower_bound(vals.begin(), vals.end(), x) - vals.begin()) / n;
        worst = std::max(worst, std::abs(cdf - emp));
    }
    CHECK(worst < 0.01);
}
