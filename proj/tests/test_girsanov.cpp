#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include <subdiff/girsanov.hpp>

using namespace subdiff;

namespace {
// The measure-change identities hold exactly for the discretized clock, so a
// coarse passage tolerance only trades clock-marginal fidelity for speed.
const PassageOptions kFast{4e-3, 50'000'000};

std::vector<double> uniform_grid(double horizon, std::size_t n) {
    std::vector<double> g(n + 1);
    for (std::size_t i = 0; i <= n; ++i) g[i] = horizon * static_cast<double>(i) / static_cast<double>(n);
    return g;
}
} // namespace

TEST_CASE("zero drift gives unit weight", "[girsanov]") {
    const auto spec = SubordinatorSpec::stable(0.5);
    PathRng rng(70, 0);
    const auto path = sample_subdiffusion(spec, 0.0, 1, uniform_grid(1.0, 32), rng);
    const auto w = weight_path(path, constant_drift(0.0));
    for (double m : w.m) CHECK(m == 1.0);
}

TEST_CASE("deterministic clock recovers the classical exponential martingale", "[girsanov]") {
    const double theta = 0.7;
    const auto spec = SubordinatorSpec::deterministic(1.0);
    PathRng rng(71, 3);
    const auto path = sample_subdiffusion(spec, 0.0, 1, uniform_grid(1.0, 16), rng);
    const auto w = weight_path(path, constant_drift(theta));
    for (std::size_t i = 0; i < path.points(); ++i) {
        const double bt = path.value(i, 0);
        const double expect = std::exp(-theta * bt - 0.5 * theta * theta * path.grid[i]);
        CHECK(w.m[i] == Catch::Approx(expect).epsilon(1e-12));
    }
}

TEST_CASE("weight is a mean-one martingale under the stable clock", "[girsanov][slow]") {
    const auto spec = SubordinatorSpec::stable(0.5);
    const auto grid = uniform_grid(1.0, 64);
    const DriftProcess b = constant_drift(0.5);
    const std::size_t n = 100000;
    std::vector<double> m_half(n), m_full(n), m2(n), m4(n);
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
    for (long long i = 0; i < static_cast<long long>(n); ++i) {
        PathRng rng(72, static_cast<std::uint64_t>(i));
        const auto path = sample_subdiffusion(spec, 0.0, 1, grid, rng, kFast);
        const auto w = weight_path(path, b);
        m_half[static_cast<std::size_t>(i)] = w.m[32];
        const double m = w.m[64];
        m_full[static_cast<std::size_t>(i)] = m;
        m2[static_cast<std::size_t>(i)] = m * m;
        m4[static_cast<std::size_t>(i)] = m * m * m * m;
    }
    const auto sh = summarize(m_half);
    const auto sf = summarize(m_full);
    CHECK(std::abs(sh.mean - 1.0) < 3.0 * sh.stderr_);
    CHECK(std::abs(sf.mean - 1.0) < 3.0 * sf.stderr_);
    // bounded drift: all moments finite (sample versions must not blow up)
    CHECK(std::isfinite(summarize(m2).mean));
    CHECK(std::isfinite(summarize(m4).mean));
}

TEST_CASE("normalization under Q", "[girsanov]") {
    const auto spec = SubordinatorSpec::stable(0.5);
    const auto one = [](const SubdiffusionPath&) { return 1.0; };
    const auto q = expectation_under_Q(one, constant_drift(0.5), spec, 0.0, 1,
                                       uniform_grid(1.0, 32), 20000, 73, kFast);
    CHECK(std::abs(q.estimate - 1.0) < 3.0 * std::max(q.stderr_, 1e-12));
    CHECK(q.novikov_verified);
}

TEST_CASE("drift removal identity: weighted drifted law equals plain law", "[girsanov][slow]") {
    // E^Q[g(B_L + theta L)] = E^P[g(B_L)] for g(x) = x^2 and cos(x)
    const double theta = 0.5;
    const auto spec = SubordinatorSpec::stable(0.5);
    const auto grid = uniform_grid(1.0, 64);
    const std::size_t n = 100000;

    auto weighted = [&](auto&& g, std::uint64_t seed) {
        std::vector<double> vals(n);
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
        for (long long i = 0; i < static_cast<long long>(n); ++i) {
            PathRng rng(seed, static_cast<std::uint64_t>(i));
            const auto path = sample_subdiffusion(spec, 0.0, 1, grid, rng, kFast);
            const auto w = weight_path(path, constant_drift(theta));
            const double y = path.value(path.points() - 1, 0) + theta * path.clock.L.back();
            vals[static_cast<std::size_t>(i)] = w.m.back() * g(y);
        }
        return summarize(vals);
    };
    auto plain = [&](auto&& g, std::uint64_t seed) {
        std::vector<double> vals(n);
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
        for (long long i = 0; i < static_cast<long long>(n); ++i) {
            PathRng rng(seed, static_cast<std::uint64_t>(i));
            const auto path = sample_subdiffusion(spec, 0.0, 1, grid, rng, kFast);
            vals[static_cast<std::size_t>(i)] = g(path.value(path.points() - 1, 0));
        }
        return summarize(vals);
    };

    auto sq = [](double x) { return x * x; };
    auto co = [](double x) { return std::cos(x); };
    const auto w1 = weighted(sq, 74), p1 = plain(sq, 75);
    CHECK(std::abs(w1.mean - p1.mean) <
          3.0 * std::sqrt(w1.stderr_ * w1.stderr_ + p1.stderr_ * p1.stderr_));
    const auto w2 = weighted(co, 76), p2 = plain(co, 77);
    CHECK(std::abs(w2.mean - p2.mean) <
          3.0 * std::sqrt(w2.stderr_ * w2.stderr_ + p2.stderr_ * p2.stderr_));
}

TEST_CASE("gaussian MGF under the changed measure", "[girsanov]") {
    // deterministic clock, f = exp(B_1 + theta): E^Q = E[exp(Z_1)] = e^{1/2}
    const double theta = 0.8;
    const auto spec = SubordinatorSpec::deterministic(1.0);
    auto f = [&](const SubdiffusionPath& p) {
        return std::exp(p.value(p.points() - 1, 0) + theta);
    };
    const auto q =
        expectation_under_Q(f, constant_drift(theta), spec, 0.0, 1, uniform_grid(1.0, 32), 200000, 78);
    CHECK(std::abs(q.estimate - std::exp(0.5)) < 3.0 * q.stderr_);
}

TEST_CASE("remove_drift solves the decomposition", "[girsanov]") {
    const auto spec = SubordinatorSpec::stable(0.5);
    PathRng rng(79, 0);
    const auto path = sample_subdiffusion(spec, 0.0, 2, uniform_grid(1.0, 4), rng);

    auto vec = [](std::initializer_list<double> v) {
        Eigen::VectorXd e(static_cast<Eigen::Index>(v.size()));
        Eigen::Index i = 0;
        for (double x : v) e[i++] = x;
        return e;
    };

    // alpha = beta -> u = 0
    auto beta_rule = [&](std::size_t, const SubdiffusionPath&) { return vec({0.3, -0.2}); };
    auto alpha_same = beta_rule;
    auto theta_id = [](std::size_t, const SubdiffusionPath&) {
        return Eigen::MatrixXd(Eigen::MatrixXd::Identity(2, 2));
    };
    auto u0 = remove_drift(beta_rule, theta_id, alpha_same);
    CHECK(u0.eval(0, path).norm() == Catch::Approx(0.0).margin(1e-14));

    // scalar case: u = beta / sigma
    auto beta1 = [](std::size_t, const SubdiffusionPath&) {
        return Eigen::VectorXd(Eigen::VectorXd::Constant(1, 0.12));
    };
    auto theta1 = [](std::size_t, const SubdiffusionPath&) {
        return Eigen::MatrixXd(Eigen::MatrixXd::Constant(1, 1, 0.4));
    };
    auto alpha1 = [](std::size_t, const SubdiffusionPath&) {
        return Eigen::VectorXd(Eigen::VectorXd::Zero(1));
    };
    PathRng rng1(79, 1);
    const auto path1 = sample_subdiffusion(spec, 0.0, 1, uniform_grid(1.0, 4), rng1);
    auto u1 = remove_drift(beta1, theta1, alpha1);
    CHECK(u1.eval(2, path1)[0] == Catch::Approx(0.3));

    // diagonal matrix case
    auto beta2 = [&](std::size_t, const SubdiffusionPath&) { return vec({1.0, 2.0}); };
    auto theta2 = [](std::size_t, const SubdiffusionPath&) {
        Eigen::MatrixXd m = Eigen::MatrixXd::Zero(2, 2);
        m(0, 0) = 1.0;
        m(1, 1) = 2.0;
        return m;
    };
    auto alpha2 = [](std::size_t, const SubdiffusionPath&) {
        return Eigen::VectorXd(Eigen::VectorXd::Zero(2));
    };
    auto u2 = remove_drift(beta2, theta2, alpha2);
    const auto got = u2.eval(1, path);
    CHECK(got[0] == Catch::Approx(1.0));
    CHECK(got[1] == Catch::Approx(1.0));

    // singular theta names the grid time
    auto theta_sing = [](std::size_t, const SubdiffusionPath&) {
        return Eigen::MatrixXd(Eigen::MatrixXd::Zero(2, 2));
    };
    auto u3 = remove_drift(beta2, theta_sing, alpha2);
    CHECK_THROWS_AS(u3.eval(1, path), NumericError);
}

TEST_CASE("two seeds give indistinguishable Q-expectations", "[girsanov]") {
    const auto spec = SubordinatorSpec::stable(0.5);
    auto f = [](const SubdiffusionPath& p) {
        const double x = p.value(p.points() - 1, 0);
        return x * x;
    };
    const auto grid = uniform_grid(1.0, 32);
    const auto q1 = expectation_under_Q(f, constant_drift(0.5), spec, 0.0, 1, grid, 40000, 101, kFast);
    const auto q2 = expectation_under_Q(f, constant_drift(0.5), spec, 0.0, 1, grid, 40000, 202, kFast);
    CHECK(std::abs(q1.estimate - q2.estimate) <
          3.0 * std::sqrt(q1.stderr_ * q1.stderr_ + q2.stderr_ * q2.stderr_));
}

TEST_CASE("battery passes for the stable benchmark", "[girsanov][slow]") {
    const auto spec = SubordinatorSpec::stable(0.5);
    const auto rep = girsanov_battery(spec, 0.0, 0.5, uniform_grid(1.0, 64), 60000, 103, kFast);
    CHECK(rep.martingale_pass);
    CHECK(rep.stats.size() == 15);
    for (const auto& s : rep.stats) {
        INFO(s.name << " gap/se=" << s.gap_over_se);
        CHECK(s.pass);
    }
    CHECK(rep.all_pass);
}

TEST_CASE("drift evaluation failure surfaces as an adapter error", "[girsanov]") {
    const auto spec = SubordinatorSpec::stable(0.5);
    PathRng rng(80, 0);
    const auto path = sample_subdiffusion(spec, 0.0, 1, uniform_grid(1.0, 4), rng);
    DriftProcess bad;
    bad.eval = [](std::size_t, const SubdiffusionPath&) -> Eigen::VectorXd {
        throw std::runtime_error("boom");
    };
    CHECK_THROWS_AS(weight_path(path, bad), NumericError);
}
