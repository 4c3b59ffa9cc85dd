#pragma once

#include <cmath>
#include <complex>
#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include <boost/multiprecision/cpp_bin_float.hpp>
#include <boost/multiprecision/cpp_int.hpp>

#include "errors.hpp"

namespace subdiff::laplace {

using float50 = boost::multiprecision::cpp_bin_float_50;
using cplx = std::complex<double>;

struct TalbotNode {
    cplx s; // contour point
    cplx w; // quadrature weight, already including exp(s t)
};

// Fixed-Talbot contour of Abate & Valko: r = 2M/(5t), theta_k = k pi / M.
// f(t) ~= Re( sum_k w_k F(s_k) ). Assumes the singularities of F lie on or
// left of the imaginary axis (shift first otherwise).
inline std::vector<TalbotNode> talbot_rule(double t, int m) {
    std::vector<TalbotNode> nodes;
    nodes.reserve(static_cast<std::size_t>(m));
    const double r = 2.0 * m / (5.0 * t);
    nodes.push_back({cplx(r, 0.0), cplx(0.5 * (r / m) * std::exp(r * t), 0.0)});
    for (int k = 1; k < m; ++k) {
        const double th = k * M_PI / m;
        const double cot = std::cos(th) / std::sin(th);
        const cplx s(r * th * cot, r * th);
        const double sigma = th + (th * cot - 1.0) * cot;
        nodes.push_back({s, (r / m) * std::exp(s * t) * cplx(1.0, sigma)});
    }
    return nodes;
}

struct Inversion {
    double value = 0.0;
    double err_est = 0.0;
    int nodes_used = 0;
};

// Invert F at time t with the fixed-Talbot rule; the error estimate compares
// two node counts. In double precision roundoff grows like exp(2M/5) * eps,
// so M much beyond ~32 loses accuracy rather than gaining it.
inline Inversion talbot_invert(const std::function<cplx(cplx)>& trans, double t, int m = 32) {
    auto eval = [&](int mm) {
        double acc = 0.0;
        for (const auto& [s, w] : talbot_rule(t, mm)) acc += (w * trans(s)).real();
        return acc;
    };
    const int m_coarse = std::max(3 * m / 4, 8);
    const double coarse = eval(m_coarse);
    const double fine = eval(m);
    return {fine, std::abs(fine - coarse), m + m_coarse};
}

// Same, for a transform with rightmost singularity at Re(s) = pole: applies the
// shift F_c(s) = F(s + c), inverts, and rescales by exp(c t).
inline Inversion talbot_invert_shifted(const std::function<cplx(cplx)>& trans, double t,
                                       double shift, int m = 32) {
    if (shift * t > 600.0)
        throw NumericError("laplace: contour shift " + std::to_string(shift) +
                           " at t=" + std::to_string(t) +
                           " amplifies the inversion by exp(c*t) beyond double range; "
                           "the contour cannot be placed safely right of the pole");
    auto shifted = [&](cplx s) { return trans(s + shift); };
    Inversion inv = talbot_invert(shifted, t, m);
    const double scale = std::exp(shift * t);
    inv.value *= scale;
    inv.err_est *= scale;
    return inv;
}

namespace detail {

inline float50 binomial50(long n, long k) {
    boost::multiprecision::cpp_int num = 1, den = 1;
    for (long i = 0; i < k; ++i) {
        num *= (n - i);
        den *= (i + 1);
    }
    return float50(num) / float50(den);
}

// Gaver-Stehfest weights zeta_k, k = 1..n (n even). These alternate with huge
// magnitude, hence the 50-digit arithmetic.
inline std::vector<float50> gaver_stehfest_weights(int n) {
    const long m = n / 2;
    std::vector<float50> w(static_cast<std::size_t>(n) + 1, float50(0));
    float50 mfact = 1;
    for (long i = 2; i <= m; ++i) mfact *= i;
    for (long k = 1; k <= n; ++k) {
        float50 acc = 0;
        const long jlo = (k + 1) / 2;
        const long jhi = std::min<long>(k, m);
        for (long j = jlo; j <= jhi; ++j) {
            float50 term = boost::multiprecision::pow(float50(j), static_cast<unsigned>(m + 1));
            term /= mfact;
            term *= binomial50(m, j);
            term *= binomial50(2 * j, j);
            term *= binomial50(j, k - j);
            acc += term;
        }
        if ((m + k) % 2 != 0) acc = -acc;
        w[static_cast<std::size_t>(k)] = acc;
    }
    return w;
}

} // namespace detail

// Gaver-Stehfest inversion on the real axis. The transform callable is
// evaluated at real lambda (float50 in, float50 out) so analytic transforms
// can be computed in extended precision; accumulation is always float50.
// Error estimate from the n vs n-4 consistency.
template <class Trans>
Inversion gaver_stehfest(Trans&& trans, double t, int n = 24) {
    if (n < 8 || n % 2 != 0) throw SpecError("gaver_stehfest: n must be even and >= 8");
    auto eval = [&](int nn) {
        const auto w = detail::gaver_stehfest_weights(nn);
        const float50 ln2_t = boost::multiprecision::log(float50(2)) / float50(t);
        float50 acc = 0;
        for (int k = 1; k <= nn; ++k) acc += w[static_cast<std::size_t>(k)] * trans(k * ln2_t);
        return static_cast<double>(acc * ln2_t);
    };
    const double coarse = eval(n - 4);
    const double fine = eval(n);
    return {fine, std::abs(fine - coarse), n + (n - 4)};
}

} // namespace subdiff::laplace
