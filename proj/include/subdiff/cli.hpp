#pragma once

#include <chrono>
#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "config.hpp"
#include "girsanov.hpp"
#include "market.hpp"
#include "pricer.hpp"
#include "subdiffusion.hpp"
#include "tfpde.hpp"

namespace subdiff::cli {

namespace clidetail {

inline void apply_threads(int threads) {
    if (threads <= 0) {
        if (const char* env = std::getenv("SUBDIFF_THREADS")) threads = std::atoi(env);
    }
#ifdef _OPENMP
    if (threads > 0) omp_set_num_threads(threads);
#else
    (void)threads;
#endif
}

inline void write_output(const json& report, const std::string& out) {
    if (out.empty()) {
        std::cout << report.dump(2) << std::endl;
    } else {
        std::ofstream f(out);
        if (!f) throw SpecError("cannot open output file '" + out + "'");
        f << report.dump(2) << "\n";
    }
}

inline json base_report(const std::string& command, const json& echo, std::uint64_t seed,
                        int threads) {
    json rep;
    rep["command"] = command;
    rep["config"] = echo;
    rep["config_hash"] = config_hash(echo);
    rep["seed"] = seed;
    rep["threads"] = threads;
    return rep;
}

struct Timer {
    std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    }
};

} // namespace clidetail

inline int run(const std::vector<std::string>& args) {
    CLI::App app{"sub-diffusive market toolkit: simulation, measure change, option pricing"};
    app.require_subcommand(1);

    std::string config_path, out_path, format = "json";
    std::uint64_t seed = 42;
    int threads = 0;
    bool seed_given = false;
    app.add_option("--config", config_path, "JSON config file (flags override it)");
    app.add_option("--seed", seed, "RNG seed")->each([&](const std::string&) { seed_given = true; });
    app.add_option("--threads", threads, "worker threads (0 = default, env SUBDIFF_THREADS)");
    app.add_option("--out", out_path, "output file (default: stdout)");
    app.add_option("--format", format, "output format: json|csv")
        ->check(CLI::IsMember({"json", "csv"}));

    // ---- price ----
    auto* price = app.add_subcommand("price", "price a European option");
    std::string method = "mc", payoff_kind, clock_kind;
    double strike = -1.0, maturity = -1.0, r_flag = -1.0, sigma_flag = -1.0, s0_flag = -1.0,
           a_flag = -1.0, beta_flag = -1.0, kappa_flag = -1.0;
    long long paths_flag = -1;
    price->add_option("--method", method, "mc|quad|pde")->check(CLI::IsMember({"mc", "quad", "pde"}));
    price->add_option("--payoff", payoff_kind, "call|put");
    price->add_option("--strike", strike);
    price->add_option("--maturity", maturity);
    price->add_option("--paths", paths_flag);
    price->add_option("--r", r_flag, "interest rate");
    price->add_option("--sigma", sigma_flag, "scalar volatility");
    price->add_option("--s0", s0_flag, "initial price");
    price->add_option("--a", a_flag, "wake-up time");
    price->add_option("--clock", clock_kind, "deterministic|stable|drifted_stable");
    price->add_option("--beta", beta_flag, "stable index");
    price->add_option("--kappa", kappa_flag, "clock drift");

    // ---- density ----
    auto* density = app.add_subcommand("density", "inverse-stable density h_beta(t, x)");
    double den_beta = 0.5, den_t = 1.0, den_x = 1.0, den_tol = 1e-10;
    density->add_option("--beta", den_beta)->required();
    density->add_option("--t", den_t)->required();
    density->add_option("--x", den_x)->required();
    density->add_option("--tol", den_tol);

    // ---- simulate ----
    auto* simulate = app.add_subcommand("simulate", "sample paths to CSV");
    std::string sim_kind = "subdiffusion";
    double sim_T = 1.0;
    int sim_steps = 256, sim_dim = 1;
    long long sim_paths = 1;
    simulate->add_option("--kind", sim_kind, "subdiffusion|stocks")
        ->check(CLI::IsMember({"subdiffusion", "stocks"}));
    simulate->add_option("--T", sim_T, "horizon");
    simulate->add_option("--steps", sim_steps, "grid steps");
    simulate->add_option("--d", sim_dim, "driver dimension (subdiffusion)");
    simulate->add_option("--paths", sim_paths, "number of paths (CSV gains a path column)");

    // ---- verify-girsanov ----
    auto* vg = app.add_subcommand("verify-girsanov", "law-equivalence battery under the weight");
    double vg_beta = 0.5, vg_theta = 0.5, vg_T = 1.0, vg_a = 0.0;
    long long vg_paths = 100000;
    int vg_steps = 64;
    vg->add_option("--beta", vg_beta);
    vg->add_option("--theta", vg_theta);
    vg->add_option("--T", vg_T);
    vg->add_option("--a", vg_a);
    vg->add_option("--paths", vg_paths);
    vg->add_option("--steps", vg_steps);

    // ---- pde ----
    auto* pde = app.add_subcommand("pde", "time-fractional pricing PDE surface");
    double pde_beta = 0.5, pde_sigma = 0.2, pde_strike = 1.0, pde_tmax = 1.0;
    std::string pde_grid = "200x200", pde_method = "talbot";
    double pde_xmin = -1.0, pde_xmax = -1.0;
    pde->add_option("--beta", pde_beta);
    pde->add_option("--sigma", pde_sigma);
    pde->add_option("--strike", pde_strike);
    pde->add_option("--tmax", pde_tmax);
    pde->add_option("--grid", pde_grid, "NTxNX, e.g. 200x200");
    pde->add_option("--method", pde_method)->check(CLI::IsMember({"talbot", "gs"}));
    pde->add_option("--xmin", pde_xmin);
    pde->add_option("--xmax", pde_xmax);

    // ---- surface ----
    auto* surface = app.add_subcommand("surface", "value surface V(t, x, a~)");
    int surf_tn = 5, surf_xn = 5, surf_an = 1;
    double surf_xmin = 0.5, surf_xmax = 2.0, surf_amax = 0.0;
    surface->add_option("--tn", surf_tn);
    surface->add_option("--xn", surf_xn);
    surface->add_option("--an", surf_an);
    surface->add_option("--xmin", surf_xmin);
    surface->add_option("--xmax", surf_xmax);
    surface->add_option("--amax", surf_amax);

    try {
        std::vector<std::string> rev(args.rbegin(), args.rend());
        app.parse(rev);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) { // --help
            std::cout << app.help() << std::endl;
            return 0;
        }
        std::cerr << "error: " << e.what() << std::endl;
        return 2;
    }

    try {
        clidetail::apply_threads(threads);
        clidetail::Timer timer;

        json cfg_json = config_path.empty() ? json::object() : load_json_file(config_path);
        RunConfig cfg = runconfig_from_json(cfg_json);
        if (seed_given) cfg.method.seed = seed;
        if (!out_path.empty()) cfg.out = out_path;
        if (app.count("--format")) cfg.format = format;

        if (price->parsed()) {
            MarketSpec market = cfg.market;
            // flag overrides (single-asset)
            if (!clock_kind.empty() || beta_flag >= 0.0 || kappa_flag >= 0.0) {
                const std::string kind = clock_kind.empty() ? "stable" : clock_kind;
                const double beta = beta_flag >= 0.0 ? beta_flag : 0.5;
                if (kind == "deterministic")
                    market.clock = SubordinatorSpec::deterministic(kappa_flag > 0.0 ? kappa_flag : 1.0);
                else if (kind == "stable")
                    market.clock = SubordinatorSpec::stable(beta);
                else if (kind == "drifted_stable")
                    market.clock = SubordinatorSpec::drifted_stable(kappa_flag > 0.0 ? kappa_flag : 1.0, beta);
                else
                    throw SpecError("price: unknown clock kind '" + kind + "'");
            }
            if (r_flag >= 0.0) market.r = r_flag;
            if (sigma_flag > 0.0) market.sigma = Eigen::MatrixXd::Constant(1, 1, sigma_flag);
            if (s0_flag > 0.0) market.s0 = Eigen::VectorXd::Constant(1, s0_flag);
            if (a_flag >= 0.0) market.a = a_flag;
            market.validate();

            PayoffSpec payoff = cfg.payoff;
            if (!payoff_kind.empty()) {
                if (payoff_kind == "call") payoff.kind = PayoffSpec::Kind::Call;
                else if (payoff_kind == "put") payoff.kind = PayoffSpec::Kind::Put;
                else throw SpecError("price: payoff must be call or put");
            }
            if (strike > 0.0) payoff.strike = strike;
            if (maturity > 0.0) payoff.maturity = maturity;
            if (paths_flag > 0) cfg.method.paths = static_cast<std::size_t>(paths_flag);

            const double spot = market.s0[0];
            PriceResult res;
            if (method == "mc") {
                res = price_by_mc(market, payoff, spot, market.a, payoff.maturity, cfg.method.paths,
                                  cfg.method.seed);
            } else if (method == "quad") {
                if (market.clock.kind == SubKind::Deterministic)
                    res = price_deterministic(market, payoff, spot, market.a, payoff.maturity);
                else
                    res = price_by_quadrature(market, payoff, spot, market.a, payoff.maturity);
            } else { // pde
                if (payoff.kind != PayoffSpec::Kind::Call)
                    throw SpecError("price --method pde supports call payoffs");
                const double tau = payoff.maturity;
                const double fwd_spot = spot * std::exp(market.r * tau);
                std::vector<double> txs = {std::max(tau - market.a, 0.0)};
                std::vector<double> xgrid;
                for (int i = 0; i <= 40; ++i)
                    xgrid.push_back(fwd_spot * (0.6 + 0.8 * i / 40.0));
                TfpdeOptions topt;
                topt.talbot_m = cfg.method.nodes;
                const auto sol = solve_tfpde(market.clock, market.sigma(0, 0), payoff.strike, txs,
                                             xgrid, InversionMethod::Talbot, topt);
                res.value = std::exp(-market.r * tau) * evaluate(sol, txs[0], fwd_spot);
                res.method = PriceMethod::PDE;
                res.n_samples = static_cast<std::size_t>(sol.lambda_nodes);
            }

            json echo = {{"market", market_to_json(market)},
                         {"payoff", {{"kind", payoff.kind == PayoffSpec::Kind::Call ? "call" : "put"},
                                     {"strike", payoff.strike},
                                     {"maturity", payoff.maturity}}},
                         {"method", {{"name", method}, {"paths", cfg.method.paths}}}};
            json rep = clidetail::base_report("price", echo, cfg.method.seed, threads);
            rep["results"] = {{"value", res.value},
                              {"stderr", res.stderr_},
                              {"method", to_string(res.method)},
                              {"n_samples", res.n_samples}};
            rep["diagnostics"] = res.diagnostics;
            rep["runtime_seconds"] = timer.seconds();
            clidetail::write_output(rep, cfg.out);
            return 0;
        }

        if (density->parsed()) {
            const auto ev = inverse_stable_density(den_beta, den_t, den_x, den_tol);
            json echo = {{"beta", den_beta}, {"t", den_t}, {"x", den_x}, {"tol", den_tol}};
            json rep = clidetail::base_report("density", echo, cfg.method.seed, threads);
            rep["results"] = {{"value", ev.value},
                              {"terms_used", ev.terms_used},
                              {"est_error", ev.est_error}};
            rep["runtime_seconds"] = timer.seconds();
            clidetail::write_output(rep, cfg.out);
            return 0;
        }

        if (simulate->parsed()) {
            const auto grid = make_grid(sim_T, static_cast<std::size_t>(sim_steps), cfg.market.a);
            std::ostringstream csv;
            if (sim_kind == "subdiffusion") {
                csv << "path,t,L,R";
                for (int j = 1; j <= sim_dim; ++j) csv << ",X_" << j;
                csv << "\n";
                for (long long p = 0; p < sim_paths; ++p) {
                    PathRng rng(cfg.method.seed, static_cast<std::uint64_t>(p));
                    const auto path = sample_subdiffusion(cfg.market.clock, cfg.market.a, sim_dim, grid, rng);
                    for (std::size_t i = 0; i < path.points(); ++i) {
                        csv << p << ',' << path.grid[i] << ',' << path.clock.L[i] << ','
                            << path.clock.R[i];
                        for (int j = 0; j < sim_dim; ++j) csv << ',' << path.value(i, j);
                        csv << "\n";
                    }
                }
            } else {
                csv << "path,t,L,R";
                for (int j = 1; j <= cfg.market.dim(); ++j) csv << ",price_" << j;
                for (int j = 1; j <= cfg.market.dim(); ++j) csv << ",discounted_" << j;
                csv << "\n";
                for (long long p = 0; p < sim_paths; ++p) {
                    PathRng rng(cfg.method.seed, static_cast<std::uint64_t>(p));
                    const auto sp = simulate_stocks(cfg.market, grid, Measure::Q, rng);
                    for (std::size_t i = 0; i < sp.grid.size(); ++i) {
                        csv << p << ',' << sp.grid[i] << ',' << sp.clock.L[i] << ',' << sp.clock.R[i];
                        for (int j = 0; j < sp.d; ++j) csv << ',' << sp.price(i, j);
                        for (int j = 0; j < sp.d; ++j) csv << ',' << sp.disc(i, j);
                        csv << "\n";
                    }
                }
            }
            if (cfg.out.empty()) {
                std::cout << csv.str();
            } else {
                std::ofstream f(cfg.out);
                if (!f) throw SpecError("cannot open output file '" + cfg.out + "'");
                f << csv.str();
            }
            return 0;
        }

        if (vg->parsed()) {
            const auto spec = SubordinatorSpec::stable(vg_beta);
            const auto grid = make_grid(vg_T, static_cast<std::size_t>(vg_steps), vg_a);
            const auto rep0 = girsanov_battery(spec, vg_a, vg_theta, grid,
                                               static_cast<std::size_t>(vg_paths), cfg.method.seed);
            json echo = {{"beta", vg_beta}, {"theta", vg_theta}, {"T", vg_T},
                         {"a", vg_a},       {"paths", vg_paths}, {"steps", vg_steps}};
            json rep = clidetail::base_report("verify-girsanov", echo, cfg.method.seed, threads);
            json stats = json::array();
            for (const auto& s : rep0.stats)
                stats.push_back({{"name", s.name},
                                 {"weighted", s.weighted},
                                 {"weighted_se", s.weighted_se},
                                 {"plain", s.plain},
                                 {"plain_se", s.plain_se},
                                 {"gap_over_se", s.gap_over_se},
                                 {"pass", s.pass}});
            rep["results"] = {{"mean_M", rep0.mean_m},
                              {"mean_M_se", rep0.mean_m_se},
                              {"martingale_pass", rep0.martingale_pass},
                              {"battery", stats},
                              {"all_pass", rep0.all_pass}};
            rep["runtime_seconds"] = timer.seconds();
            clidetail::write_output(rep, cfg.out);
            return 0;
        }

        if (pde->parsed()) {
            int nt = 200, nx = 200;
            if (std::sscanf(pde_grid.c_str(), "%dx%d", &nt, &nx) != 2 || nt < 2 || nx < 5)
                throw SpecError("pde: --grid must look like 200x200");
            const double xlo = pde_xmin > 0.0 ? pde_xmin : 0.25 * pde_strike;
            const double xhi = pde_xmax > xlo ? pde_xmax : 2.5 * pde_strike;
            std::vector<double> ts(static_cast<std::size_t>(nt)), xs(static_cast<std::size_t>(nx));
            for (int i = 0; i < nt; ++i) ts[static_cast<std::size_t>(i)] = pde_tmax * i / (nt - 1);
            for (int i = 0; i < nx; ++i)
                xs[static_cast<std::size_t>(i)] = xlo + (xhi - xlo) * i / (nx - 1);
            const auto clock = SubordinatorSpec::stable(pde_beta);
            const auto sol = solve_tfpde(clock, pde_sigma, pde_strike, ts, xs,
                                         pde_method == "talbot" ? InversionMethod::Talbot
                                                                : InversionMethod::GaverStehfest);
            std::ostringstream csv;
            export_csv(sol, csv);
            if (cfg.out.empty()) {
                std::cout << csv.str();
            } else {
                std::ofstream f(cfg.out);
                if (!f) throw SpecError("cannot open output file '" + cfg.out + "'");
                f << csv.str();
            }
            return 0;
        }

        if (surface->parsed()) {
            std::vector<double> ts, xs, as;
            const double T = cfg.payoff.maturity;
            for (int i = 0; i < surf_tn; ++i) ts.push_back(T * i / std::max(surf_tn - 1, 1));
            for (int i = 0; i < surf_xn; ++i)
                xs.push_back(surf_xmin + (surf_xmax - surf_xmin) * i / std::max(surf_xn - 1, 1));
            for (int i = 0; i < surf_an; ++i)
                as.push_back(surf_an > 1 ? surf_amax * i / (surf_an - 1) : 0.0);
            SurfaceConfig scfg;
            scfg.seed = cfg.method.seed;
            scfg.mc_paths = cfg.method.paths;
            const auto surf = value_surface(cfg.market, cfg.payoff, ts, xs, as, scfg);
            std::ostringstream csv;
            export_csv(surf, csv);
            if (cfg.out.empty()) {
                std::cout << csv.str();
            } else {
                std::ofstream f(cfg.out);
                if (!f) throw SpecError("cannot open output file '" + cfg.out + "'");
                f << csv.str();
            }
            return 0;
        }

        std::cerr << "error: no subcommand" << std::endl;
        return 2;
    } catch (const SpecError& e) {
        std::cerr << "config error: " << e.what() << std::endl;
        return 2;
    } catch (const NumericError& e) {
        std::cerr << "numeric error: " << e.what() << std::endl;
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << std::endl;
        return 3;
    }
}

inline int run(int argc, char** argv) {
    std::vector<std::string> args;
    for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
    return run(args);
}

} // namespace subdiff::cli
