#pragma once

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "errors.hpp"
#include "market.hpp"
#include "pricer.hpp"
#include "subordinator.hpp"

namespace subdiff {

using json = nlohmann::json;

namespace cfgdetail {

inline void reject_unknown(const json& j, const std::set<std::string>& allowed,
                           const std::string& where) {
    if (!j.is_object()) throw SpecError("config: " + where + " must be an object");
    for (const auto& [key, val] : j.items()) {
        (void)val;
        if (!allowed.count(key))
            throw SpecError("config: unknown key '" + key + "' in " + where);
    }
}

} // namespace cfgdetail

// Clock block: {kind, kappa, beta, epsilon, table}.
inline SubordinatorSpec clock_from_json(const json& j) {
    cfgdetail::reject_unknown(j, {"kind", "kappa", "beta", "epsilon", "table"}, "clock");
    const std::string kind = j.value("kind", "stable");
    const double kappa = j.value("kappa", 0.0);
    const double eps = j.value("epsilon", 1e-4);
    if (kind == "deterministic") return SubordinatorSpec::deterministic(kappa > 0.0 ? kappa : 1.0);
    if (kind == "stable") return SubordinatorSpec::stable(j.value("beta", 0.5));
    if (kind == "drifted_stable")
        return SubordinatorSpec::drifted_stable(kappa, j.value("beta", 0.5));
    if (kind == "general") {
        if (!j.contains("table")) {
            if (!j.contains("beta"))
                throw SpecError("config: general clock needs a 'table' or a 'beta'");
            return SubordinatorSpec::general(kappa, StableTail{j.value("beta", 0.5)}, eps);
        }
        const json& tab = j.at("table");
        cfgdetail::reject_unknown(tab, {"type", "points"}, "clock.table");
        const std::string type = tab.value("type", "tail");
        std::vector<std::pair<double, double>> pts;
        for (const auto& row : tab.at("points")) {
            if (!row.is_array() || row.size() != 2)
                throw SpecError("config: clock.table.points rows must be [x, value] pairs");
            pts.emplace_back(row[0].get<double>(), row[1].get<double>());
        }
        if (type == "tail") return SubordinatorSpec::general(kappa, TailTable{pts}, eps);
        if (type == "atoms") return SubordinatorSpec::general(kappa, AtomTable{pts}, eps);
        throw SpecError("config: clock.table.type must be 'tail' or 'atoms'");
    }
    throw SpecError("config: unknown clock kind '" + kind + "'");
}

inline json clock_to_json(const SubordinatorSpec& s) {
    json j;
    j["kappa"] = s.kappa;
    j["epsilon"] = s.epsilon;
    switch (s.kind) {
        case SubKind::Deterministic: j["kind"] = "deterministic"; break;
        case SubKind::Stable:
            j["kind"] = "stable";
            j["beta"] = *s.stable_beta();
            break;
        case SubKind::DriftedStable:
            j["kind"] = "drifted_stable";
            j["beta"] = *s.stable_beta();
            break;
        case SubKind::General:
            j["kind"] = "general";
            if (auto b = s.stable_beta()) {
                j["beta"] = *b;
            } else {
                json pts = json::array();
                if (const auto* tt = std::get_if<TailTable>(&s.levy)) {
                    for (const auto& [x, w] : tt->points) pts.push_back({x, w});
                    j["table"] = {{"type", "tail"}, {"points", pts}};
                } else if (const auto* at = std::get_if<AtomTable>(&s.levy)) {
                    for (const auto& [x, m] : at->atoms) pts.push_back({x, m});
                    j["table"] = {{"type", "atoms"}, {"points", pts}};
                }
            }
            break;
    }
    return j;
}

// Market block: {r, mu_bar, sigma, a, s0, clock}.
inline MarketSpec market_from_json(const json& j) {
    cfgdetail::reject_unknown(j, {"r", "mu_bar", "sigma", "a", "s0", "clock", "ellipticity_floor"},
                              "market");
    MarketSpec m;
    m.r = j.value("r", 0.0);
    m.a = j.value("a", 0.0);
    m.ellipticity_floor = j.value("ellipticity_floor", 1e-8);

    auto vec = [](const json& a, const char* name) {
        if (!a.is_array() || a.empty()) throw SpecError(std::string("config: ") + name + " must be a nonempty array");
        Eigen::VectorXd v(a.size());
        for (std::size_t i = 0; i < a.size(); ++i) v[static_cast<Eigen::Index>(i)] = a[i].get<double>();
        return v;
    };
    m.s0 = j.contains("s0") ? vec(j.at("s0"), "s0") : Eigen::VectorXd::Ones(1);
    m.mu_bar = j.contains("mu_bar") ? vec(j.at("mu_bar"), "mu_bar")
                                    : Eigen::VectorXd::Zero(m.s0.size());

    if (j.contains("sigma")) {
        const json& sj = j.at("sigma");
        if (sj.is_number()) {
            m.sigma = Eigen::MatrixXd::Constant(1, 1, sj.get<double>());
        } else {
            if (!sj.is_array() || sj.empty()) throw SpecError("config: sigma must be a matrix");
            const auto rows = sj.size();
            m.sigma = Eigen::MatrixXd(rows, rows);
            for (std::size_t i = 0; i < rows; ++i) {
                if (!sj[i].is_array() || sj[i].size() != rows)
                    throw SpecError("config: sigma must be square");
                for (std::size_t k = 0; k < rows; ++k)
                    m.sigma(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) =
                        sj[i][k].get<double>();
            }
        }
    } else {
        m.sigma = Eigen::MatrixXd::Identity(m.s0.size(), m.s0.size()) * 0.2;
    }
    m.clock = j.contains("clock") ? clock_from_json(j.at("clock")) : SubordinatorSpec::stable(0.5);
    m.validate();
    return m;
}

inline json market_to_json(const MarketSpec& m) {
    json j;
    j["r"] = m.r;
    j["a"] = m.a;
    j["ellipticity_floor"] = m.ellipticity_floor;
    j["s0"] = std::vector<double>(m.s0.data(), m.s0.data() + m.s0.size());
    j["mu_bar"] = std::vector<double>(m.mu_bar.data(), m.mu_bar.data() + m.mu_bar.size());
    json sig = json::array();
    for (Eigen::Index i = 0; i < m.sigma.rows(); ++i) {
        json row = json::array();
        for (Eigen::Index k = 0; k < m.sigma.cols(); ++k) row.push_back(m.sigma(i, k));
        sig.push_back(row);
    }
    j["sigma"] = sig;
    j["clock"] = clock_to_json(m.clock);
    return j;
}

inline PayoffSpec payoff_from_json(const json& j) {
    cfgdetail::reject_unknown(j, {"kind", "strike", "maturity"}, "payoff");
    const std::string kind = j.value("kind", "call");
    const double strike = j.value("strike", 1.0);
    const double maturity = j.value("maturity", 1.0);
    if (kind == "call") return PayoffSpec::call(strike, maturity);
    if (kind == "put") return PayoffSpec::put(strike, maturity);
    throw SpecError("config: payoff kind must be 'call' or 'put' (custom payoffs are library-only)");
}

struct MethodConfig {
    std::size_t paths = 100000;
    int nodes = 32;
    std::uint64_t seed = 42;
    double tolerance = 1e-10;
    int threads = 0; // 0 = runtime default
};

inline MethodConfig method_from_json(const json& j) {
    cfgdetail::reject_unknown(j, {"paths", "nodes", "seed", "tolerance", "threads"}, "method");
    MethodConfig m;
    m.paths = j.value("paths", m.paths);
    m.nodes = j.value("nodes", m.nodes);
    m.seed = j.value("seed", m.seed);
    m.tolerance = j.value("tolerance", m.tolerance);
    m.threads = j.value("threads", m.threads);
    return m;
}

struct RunConfig {
    MarketSpec market;
    PayoffSpec payoff = PayoffSpec::call(1.0, 1.0);
    MethodConfig method;
    std::string out;
    std::string format = "json";
};

inline RunConfig runconfig_from_json(const json& j) {
    cfgdetail::reject_unknown(j, {"market", "payoff", "method", "output"}, "config");
    RunConfig c;
    c.market = j.contains("market") ? market_from_json(j.at("market")) : market_from_json(json::object());
    if (j.contains("payoff")) c.payoff = payoff_from_json(j.at("payoff"));
    if (j.contains("method")) c.method = method_from_json(j.at("method"));
    if (j.contains("output")) {
        cfgdetail::reject_unknown(j.at("output"), {"out", "format"}, "output");
        c.out = j.at("output").value("out", "");
        c.format = j.at("output").value("format", "json");
        if (c.format != "json" && c.format != "csv")
            throw SpecError("config: output.format must be 'json' or 'csv'");
    }
    return c;
}

inline json load_json_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw SpecError("config: cannot open '" + path + "'");
    json j;
    try {
        f >> j;
    } catch (const std::exception& e) {
        throw SpecError("config: parse failure in '" + path + "': " + e.what());
    }
    return j;
}

// FNV-1a of the canonical dump; echoed in reports so reruns are comparable.
inline std::string config_hash(const json& j) {
    const std::string s = j.dump();
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

} // namespace subdiff
