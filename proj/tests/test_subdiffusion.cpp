#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <sstream>
#include <vector>

#include <subdiff/stats.hpp>
#include <subdiff/subdiffusion.hpp>

using namespace subdiff;

namespace {
std::vector<double> uniform_grid(double horizon, std::size_t n) {
    std::vector<double> g(n + 1);
    for (std::size_t i = 0; i <= n; ++i) g[i] = horizon * static_cast<double>(i) / static_cast<double>(n);
    return g;
}
} // namespace

TEST_CASE("deterministic clock gives Brownian motion", "[subdiffusion]") {
    const auto spec = SubordinatorSpec::deterministic(1.0);
    const auto grid = uniform_grid(1.0, 16);
    const std::size_t n = 50000;
    std::vector<double> x1(n);
    for (std::size_t i = 0; i < n; ++i) {
        PathRng rng(50, i);
        const auto p = sample_subdiffusion(spec, 0.0, 1, grid, rng);
        x1[i] = p.value(p.points() - 1, 0);
    }
    const auto s = summarize(x1);
    CHECK(std::abs(s.mean) < 3.0 * s.stderr_);
    CHECK(s.variance == Catch::Approx(1.0).margin(0.03));
}

TEST_CASE("path frozen before wake-up", "[subdiffusion]") {
    const auto spec = SubordinatorSpec::stable(0.5);
    std::vector<double> grid = {0.0, 0.1, 0.3, 0.5, 0.8, 1.0};
    PathRng rng(51, 0);
    const auto p = sample_subdiffusion(spec, /*a=*/0.5, 2, grid, rng);
    for (std::size_t i = 0; i < p.points(); ++i) {
        if (grid[i] <= 0.5) {
            CHECK(p.value(i, 0) == 0.0);
            CHECK(p.value(i, 1) == 0.0);
            CHECK(p.clock.L[i] == 0.0);
        }
    }
}

TEST_CASE("mean square displacement matches the clock mean", "[subdiffusion][slow]") {
    // E[X_1^2] = E[L_1] = 2/sqrt(pi) for the stable-1/2 clock
    const auto spec = SubordinatorSpec::stable(0.5);
    const auto grid = uniform_grid(1.0, 32);
    const std::size_t n = 100000;
    std::vector<double> sq(n);
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
    for (long long i = 0; i < static_cast<long long>(n); ++i) {
        PathRng rng(52, static_cast<std::uint64_t>(i));
        const auto p = sample_subdiffusion(spec, 0.0, 1, grid, rng);
        const double v = p.value(p.points() - 1, 0);
        sq[static_cast<std::size_t>(i)] = v * v;
    }
    const auto s = summarize(sq);
    CHECK(std::abs(s.mean - 1.1283791670955126) < 3.0 * s.stderr_);
}

TEST_CASE("paths freeze exactly with the clock", "[subdiffusion]") {
    const auto spec = SubordinatorSpec::stable(0.5);
    const auto grid = uniform_grid(1.0, 64);
    PathRng rng(53, 7);
    const auto p = sample_subdiffusion(spec, 0.0, 1, grid, rng);
    for (std::size_t i = 0; i + 1 < p.points(); ++i) {
        if (p.dL(i) == 0.0) CHECK(p.dX(i, 0) == 0.0);
    }
}

TEST_CASE("restart: dormant and degenerate cases", "[subdiffusion]") {
    const auto spec = SubordinatorSpec::stable(0.5);
    const auto grid = uniform_grid(1.0, 8);
    MarkovPairState st;
    st.x = {1.25};
    st.r = 5.0; // holding time beyond the horizon: the path never moves
    PathRng rng(54, 0);
    const auto p = restart_from(st, spec, 1, grid, rng);
    for (std::size_t i = 0; i < p.points(); ++i) CHECK(p.value(i, 0) == 1.25);

    // r = 0 with a deterministic clock restarts plain Brownian motion
    MarkovPairState st2;
    st2.x = {0.0};
    st2.r = 0.0;
    const std::size_t n = 30000;
    std::vector<double> endv(n);
    for (std::size_t i = 0; i < n; ++i) {
        PathRng r2(55, i);
        endv[i] = restart_from(st2, SubordinatorSpec::deterministic(1.0), 1, grid, r2).value(8, 0);
    }
    const auto s = summarize(endv);
    CHECK(s.variance == Catch::Approx(1.0).margin(0.04));
}

TEST_CASE("restarted clock law matches the exact sampler", "[subdiffusion][slow]") {
    // r = 0.3, horizon 1: the clock at the end is L_{0.7} in law
    const auto spec = SubordinatorSpec::stable(0.5);
    const auto grid = uniform_grid(1.0, 4);
    const std::size_t n = 100000;
    std::vector<double> restarted(n), exact(n);
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
    for (long long i = 0; i < static_cast<long long>(n); ++i) {
        MarkovPairState st{{0.0}, 0.3};
        PathRng r1(56, static_cast<std::uint64_t>(i));
        restarted[static_cast<std::size_t>(i)] = restart_from(st, spec, 1, grid, r1).clock.L.back();
        PathRng r2(57, static_cast<std::uint64_t>(i));
        exact[static_cast<std::size_t>(i)] = sample_inverse_stable(0.5, 0.7, r2);
    }
    CHECK(ks_two_sample(restarted, exact) < ks_two_sample_critical(n, n, 0.01));
}

TEST_CASE("markov pair: stop-and-restart reproduces the unconditional law", "[subdiffusion][slow]") {
    const auto spec = SubordinatorSpec::stable(0.5);
    const std::size_t n = 100000;
    std::vector<double> direct(n), restarted(n);
    const auto grid_full = uniform_grid(1.0, 16);
    const auto grid_half = uniform_grid(0.5, 8);
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
    for (long long i = 0; i < static_cast<long long>(n); ++i) {
        PathRng r1(58, static_cast<std::uint64_t>(i));
        direct[static_cast<std::size_t>(i)] =
            sample_subdiffusion(spec, 0.0, 1, grid_full, r1).value(16, 0);
        PathRng r2(59, static_cast<std::uint64_t>(i));
        const auto first = sample_subdiffusion(spec, 0.0, 1, grid_half, r2);
        const auto st = state_at(first, first.points() - 1);
        restarted[static_cast<std::size_t>(i)] =
            restart_from(st, spec, 1, grid_half, r2).value(8, 0);
    }
    CHECK(ks_two_sample(direct, restarted) < ks_two_sample_critical(n, n, 0.01));
}

TEST_CASE("frozen fraction grows as beta falls", "[subdiffusion]") {
    auto frozen_fraction = [](double beta) {
        const auto spec = SubordinatorSpec::stable(beta);
        const auto grid = uniform_grid(1.0, 64);
        std::size_t frozen = 0, total = 0;
        for (std::uint64_t i = 0; i < 400; ++i) {
            PathRng rng(60, i);
            const auto p = sample_subdiffusion(spec, 0.0, 1, grid, rng);
            for (std::size_t k = 0; k + 1 < p.points(); ++k) {
                total += 1;
                if (p.dL(k) == 0.0) frozen += 1;
            }
        }
        return static_cast<double>(frozen) / static_cast<double>(total);
    };
    const double f3 = frozen_fraction(0.3);
    const double f7 = frozen_fraction(0.7);
    CHECK(f3 > 0.0);
    CHECK(f7 > 0.0);
    CHECK(f3 > f7);
}

TEST_CASE("coordinates are independent", "[subdiffusion]") {
    const auto spec = SubordinatorSpec::stable(0.5);
    const auto grid = uniform_grid(1.0, 16);
    const std::size_t n = 50000;
    std::vector<double> prod(n);
    for (std::size_t i = 0; i < n; ++i) {
        PathRng rng(61, i);
        const auto p = sample_subdiffusion(spec, 0.0, 2, grid, rng);
        prod[i] = p.value(16, 0) * p.value(16, 1);
    }
    const auto s = summarize(prod);
    CHECK(std::abs(s.mean) < 3.0 * s.stderr_);
}

TEST_CASE("csv export carries a header and all columns", "[subdiffusion]") {
    const auto spec = SubordinatorSpec::stable(0.5);
    PathRng rng(62, 0);
    const auto p = sample_subdiffusion(spec, 0.0, 2, {0.0, 0.5, 1.0}, rng);
    std::ostringstream os;
    export_csv(p, os);
    const std::string out = os.str();
    CHECK(out.rfind("t,L,R,X_1,X_2\n", 0) == 0);
    CHECK(std::count(out.begin(), out.end(), '\n') == 4);
}

TEST_CASE("grid refinement keeps the wake-up kink", "[subdiffusion]") {
    const auto g = make_grid(1.0, 10, 0.35);
    CHECK(std::find(g.begin(), g.end(), 0.35) != g.end());
    for (std::size_t i = 1; i < g.size(); ++i) CHECK(g[i] > g[i - 1]);
    CHECK(g.front() == 0.0);
    CHECK(g.back() == 1.0);
}
