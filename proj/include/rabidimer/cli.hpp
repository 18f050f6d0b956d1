// cli.hpp - subcommands of the rabidimer tool
//
//   evolve        traces, imbalance summary              (photon dynamics)
//   sweep         z_avg over a (g, J) grid               (phase diagram)
//   spectrum      level-spacing / photon variance tables (spectral diagnostics)
//   trajectories  damped dynamics by quantum jumps
//   renorm        A^2-term parameter map
//
// Exit codes: 0 success, 2 configuration error, 3 truncation check failed,
// 4 numerical failure.

#pragma once

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "rabidimer/config.hpp"
#include "rabidimer/errors.hpp"
#include "rabidimer/model.hpp"
#include "rabidimer/observables.hpp"
#include "rabidimer/propagate.hpp"
#include "rabidimer/spectral.hpp"
#include "rabidimer/sweep.hpp"
#include "rabidimer/trajectories.hpp"

#ifndef RABIDIMER_VERSION
#define RABIDIMER_VERSION "0.0.0"
#endif

namespace rabidimer {

struct CliOptions {
    std::string config;
    std::optional<std::string> out;
    int workers = default_workers();
    std::optional<std::uint64_t> seed;
};

namespace detail {

inline RunConfig prepare(const CliOptions& o) {
    RunConfig c = load_run_config(o.config);
    if (o.out) c.output.directory = *o.out;
    if (o.seed && c.damping) c.damping->master_seed = *o.seed;
    if (o.workers < 1) throw ConfigError("--workers must be >= 1");
    std::filesystem::create_directories(c.output.directory);
    return c;
}

inline void write_json(const std::string& path, const nlohmann::json& j) {
    std::ofstream f(path);
    if (!f) throw ConfigError("cannot write " + path);
    f << j.dump(2) << '\n';
}

inline void write_run_info(const RunConfig& c, const std::string& command, const CliOptions& o, double seconds,
                           nlohmann::json extra = nlohmann::json::object()) {
    write_json(c.output.directory + "/resolved_config.json", resolved(c));
    extra["version"] = RABIDIMER_VERSION;
    extra["command"] = command;
    extra["workers"] = o.workers;
    extra["wall_seconds"] = seconds;
    if (o.seed) extra["seed_flag"] = *o.seed;
    write_json(c.output.directory + "/run_info.json", extra);
}

// Whitespace-separated columns for gnuplot.
inline void write_dat(const std::string& path, const std::vector<TimeSeries>& series) {
    std::ofstream f(path);
    if (!f) throw ConfigError("cannot write " + path);
    f << "# t";
    for (const auto& s : series) f << ' ' << s.label;
    f << '\n';
    char buf[64];
    for (std::size_t i = 0; i < series.front().size(); ++i) {
        std::snprintf(buf, sizeof buf, "%.17g", series.front().times[i]);
        f << buf;
        for (const auto& s : series) {
            std::snprintf(buf, sizeof buf, " %.17g", s.values[i]);
            f << buf;
        }
        f << '\n';
    }
}

inline void write_series(const RunConfig& c, const std::string& stem, const std::vector<TimeSeries>& series) {
    if (c.output.wants("csv")) write_csv(c.output.directory + "/" + stem + ".csv", series);
    if (c.output.wants("dat")) write_dat(c.output.directory + "/" + stem + ".dat", series);
}

inline OperatorMatrix build_hamiltonian(const RunConfig& c, const FockSpace& space) {
    const BuildOptions opt{c.model.jc_only};
    if (space.n_sites() == 1) {
        if (c.model.params.D != 0.0) throw ConfigError("model.D needs a two-site model");
        return build_rabi(space, c.model.params.left, opt);
    }
    return build_dimer(space, c.model.params, opt);
}

inline int initial_n_i(const RunConfig& c) {
    double n = 0.0;
    for (const auto& s : c.initial_state) {
        if (const auto* f = std::get_if<FockSpec>(&s.field)) n += f->n;
        if (const auto* a = std::get_if<CoherentSpec>(&s.field)) n += std::norm(a->alpha);
    }
    return static_cast<int>(std::lround(n));
}

// Appends z (and z_norm on dimers) to the standard traces.
inline std::vector<TimeSeries> with_imbalance(std::vector<TimeSeries> s) {
    const TimeSeries* nl = nullptr;
    const TimeSeries* nr = nullptr;
    for (const auto& x : s) {
        if (x.label == "N_L") nl = &x;
        if (x.label == "N_R") nr = &x;
    }
    if (nl && nr) {
        TimeSeries z = imbalance(*nl, *nr);
        TimeSeries zn = normalized_imbalance(*nl, *nr).series;
        s.push_back(std::move(z));
        s.push_back(std::move(zn));
    }
    return s;
}

inline double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace detail

// --------------------------------------------------------------------------

inline int cmd_evolve(const CliOptions& o) {
    const auto t0 = std::chrono::steady_clock::now();
    const RunConfig c = detail::prepare(o);
    const FockSpace space(c.resolved_n_max(), c.model.n_sites);
    const OperatorMatrix H = detail::build_hamiltonian(c, space);
    const StateVector psi0 = product_state(space, c.initial_state);
    const EvolutionResult r = evolve(H, psi0, c.evolution.plan, standard_observables(space, &H));
    const std::vector<TimeSeries> traces = detail::with_imbalance(r.series);
    detail::write_series(c, "traces", traces);

    const ImbalanceSummary s = summarize(r.series, detail::initial_n_i(c), c.evolution.summary);
    nlohmann::json summary = to_json(s);
    const auto& d = r.diagnostics;
    summary["diagnostics"] = {{"engine", to_string(d.engine)},
                              {"n_max", space.n_max()},
                              {"dim", space.dim()},
                              {"max_norm_drift", d.max_norm_drift},
                              {"max_top_level_mass", d.max_top_level_mass},
                              {"krylov_subspaces", d.krylov.subspaces},
                              {"krylov_matvecs", d.krylov.matvecs},
                              {"krylov_sector", d.sector},
                              {"full_diag_support", d.support}};
    int status = 0;
    if (!(d.max_top_level_mass < c.evolution.top_mass_tol)) status = 3;
    if (c.evolution.full_truncation_check) {
        auto build_h = [&](const FockSpace& sp) { return detail::build_hamiltonian(c, sp); };
        auto build_psi = [&](const FockSpace& sp) { return product_state(sp, c.initial_state); };
        const ConvergenceReport rep = check_truncation(build_h, build_psi, c.evolution.plan, c.model.n_sites,
                                                       space.n_max(), c.evolution.truncation_delta_n, 0.1,
                                                       c.evolution.top_mass_tol);
        summary["truncation_check"] = {{"n_max", rep.n_max},
                                       {"n_max_check", rep.n_max_check},
                                       {"max_imbalance_deviation", rep.max_imbalance_deviation},
                                       {"max_top_level_mass", rep.max_top_level_mass},
                                       {"passed", rep.passed}};
        if (!rep.passed) status = 3;
    }
    summary["truncation_ok"] = status == 0;
    if (c.output.wants("json")) detail::write_json(c.output.directory + "/summary.json", summary);
    detail::write_run_info(c, "evolve", o, detail::seconds_since(t0));
    if (status == 3)
        std::cerr << "truncation check failed: top-level mass " << d.max_top_level_mass << " at n_max=" << space.n_max()
                  << " (raise model.n_max)\n";
    return status;
}

inline int cmd_sweep(const CliOptions& o) {
    const auto t0 = std::chrono::steady_clock::now();
    const RunConfig c = detail::prepare(o);
    if (!c.sweep) throw ConfigError("sweep: config has no \"sweep\" block");
    SweepTemplate tmpl;
    tmpl.site = c.model.params.left;
    tmpl.D = c.model.params.D;
    tmpl.n_max = c.model.n_max;
    tmpl.jc_only = c.model.jc_only;
    tmpl.damping = c.damping;
    SweepProgress prog;
    const PhaseGrid grid = run_sweep(*c.sweep, tmpl, c.evolution.plan, o.workers,
                                     c.output.directory + "/checkpoint.jsonl", &prog);
    const LabelMatrix labels = classify(grid, c.sweep->threshold);
    const Boundary b = boundary_extract(grid, labels);
    write_phase_outputs(c.output.directory, grid, labels, c.sweep->threshold,
                        {{"version", RABIDIMER_VERSION}, {"resumed_cells", prog.resumed}, {"computed_cells", prog.computed}});
    std::size_t failed = 0;
    for (const auto& cell : grid.cells) failed += cell.status == CellStatus::failed;
    detail::write_run_info(c, "sweep", o, detail::seconds_since(t0),
                           {{"failed_cells", failed}, {"J_c", b.J_c ? nlohmann::json(*b.J_c) : nlohmann::json(nullptr)}});
    if (failed) std::cerr << failed << " sweep cell(s) failed; see phase_grid.json\n";
    return 0;
}

// Single-Rabi spectral table over g plus level data for the configured model.
inline int cmd_spectrum(const CliOptions& o) {
    const auto t0 = std::chrono::steady_clock::now();
    const RunConfig c = detail::prepare(o);
    const SpectrumOptions so = c.spectrum.value_or(SpectrumOptions{});
    const int want = std::max(so.k_levels + 1, so.chi_levels);

    std::ofstream table_csv, table_dat;
    if (c.output.wants("csv")) table_csv.open(c.output.directory + "/spectrum.csv");
    if (c.output.wants("dat")) table_dat.open(c.output.directory + "/spectrum.dat");
    std::string head = "g, zeta, chi_mean";
    for (int l = 0; l < so.chi_levels; ++l) head += ", chi_" + std::to_string(l);
    if (table_csv.is_open()) table_csv << "# " << head << '\n';
    if (table_dat.is_open()) {
        std::string h = head;
        std::replace(h.begin(), h.end(), ',', ' ');
        table_dat << "# " << h << '\n';
    }
    nlohmann::json meta = nlohmann::json::array();
    char buf[128];
    for (double g : so.g.values()) {
        RabiParams p = c.model.params.left;
        p.g = g;
        const int base = so.n_max ? *so.n_max : default_n_max(want / 2 + 1, g / p.omega0) + 20;
        const FockSpace sp(base, 1);
        const FockSpace sp2(base + 20, 1);
        const OperatorMatrix H = build_rabi(sp, p);
        if (2 * (base + 1) < want) throw ConfigError("spectrum.n_max too small for k_levels");
        const SpectralData s = eigensolve(H, want);
        const SpectralData s2 = eigensolve(build_rabi(sp2, p), want);
        const double zeta = level_spacing_variance(s.energies, so.k_levels);
        std::vector<double> chi;
        double mean = 0.0;
        for (int l = 0; l < so.chi_levels; ++l) {
            chi.push_back(photon_number_variance(sp, s.state(l)));
            mean += chi.back() / so.chi_levels;
        }
        std::string row;
        std::snprintf(buf, sizeof buf, "%.17g, %.17g, %.17g", g, zeta, mean);
        row = buf;
        for (double x : chi) {
            std::snprintf(buf, sizeof buf, ", %.17g", x);
            row += buf;
        }
        if (table_csv.is_open()) table_csv << row << '\n';
        if (table_dat.is_open()) {
            std::replace(row.begin(), row.end(), ',', ' ');
            table_dat << row << '\n';
        }
        meta.push_back({{"g", g},
                        {"n_max", base},
                        {"max_residual", s.max_residual},
                        {"truncation_shift", (s.energies - s2.energies).cwiseAbs().maxCoeff()}});
    }

    // levels of the configured model: index, energy, chi, overlap
    const FockSpace space(c.resolved_n_max(), c.model.n_sites);
    const OperatorMatrix H = detail::build_hamiltonian(c, space);
    const StateVector psi0 = product_state(space, c.initial_state);
    std::vector<SpectralData> parts;
    for (const Sector& sec : symmetry_sectors(H))
        if (sec.restrict(psi0.amplitudes()).squaredNorm() > 0.0) parts.push_back(eigensolve(H, sec.dim(), sec));
    std::vector<const SpectralData*> ptrs;
    for (const auto& p : parts) ptrs.push_back(&p);
    struct Row {
        double e, chi, w;
        std::string sector;
    };
    std::vector<Row> rows;
    for (const auto& p : parts) {
        const Eigen::VectorXd w = p.project(psi0.amplitudes()).cwiseAbs2();
        for (Index l = 0; l < p.k_levels; ++l) {
            const double chi = space.n_sites() == 1 ? photon_number_variance(space, p.state(l))
                                                    : std::numeric_limits<double>::quiet_NaN();
            rows.push_back({p.energies(l), chi, w(l), p.sector.name()});
        }
    }
    std::stable_sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) { return a.e < b.e; });
    std::ofstream lv(c.output.directory + "/levels.csv");
    lv << "# index, energy, chi, overlap, sector\n";
    for (std::size_t i = 0; i < rows.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%zu, %.17g, %.17g, %.17g, ", i, rows[i].e, rows[i].chi, rows[i].w);
        lv << buf << rows[i].sector << '\n';
    }
    std::size_t wide = 0;
    for (const auto& r : rows) wide += r.w > 1e-4;
    nlohmann::json levels{{"n_max", space.n_max()}, {"dim", space.dim()}, {"levels", rows.size()},
                          {"overlaps_above_1e-4", wide}};
    std::vector<std::pair<std::string, OperatorMatrix>> de_obs;
    if (space.n_sites() == 2) {
        de_obs.emplace_back("N_L", number(space, Site::left));
        de_obs.emplace_back("N_R", number(space, Site::right));
    } else {
        de_obs.emplace_back("N", number(space, Site::left));
    }
    for (const auto& [label, op] : de_obs) levels["diagonal_ensemble"][label] = diagonal_ensemble(psi0, ptrs, op);
    if (c.output.wants("json"))
        detail::write_json(c.output.directory + "/spectrum.json",
                           {{"table", meta},
                            {"k_levels", so.k_levels},
                            {"chi_levels", so.chi_levels},
                            {"chi_aggregation", "mean over the lowest chi_levels eigenstates; per-level columns chi_l"},
                            {"model_levels", levels}});
    detail::write_run_info(c, "spectrum", o, detail::seconds_since(t0));
    return 0;
}

inline int cmd_trajectories(const CliOptions& o) {
    const auto t0 = std::chrono::steady_clock::now();
    const RunConfig c = detail::prepare(o);
    if (!c.damping) throw ConfigError("trajectories: config has no \"damping\" block");
    const DampingConfig& d = *c.damping;
    const FockSpace space(c.resolved_n_max(), c.model.n_sites);
    const OperatorMatrix H = detail::build_hamiltonian(c, space);
    const StateVector psi0 = product_state(space, c.initial_state);
    const DampedSystem sys(H, d.kappa(), d.resolve(c.model.params.left.g / c.model.params.left.omega0), d.engine,
                           d.eigen_max_sector_dim);
    const std::vector<Observable> obs = standard_observables(space, &H);
    const TrajectoryEnsemble e = run_trajectories(sys, psi0, c.evolution.plan, d, obs, o.workers);
    detail::write_series(c, "mean", detail::with_imbalance(e.mean));
    detail::write_series(c, "std_error", e.std_error);
    nlohmann::json meta = to_json(e, d);
    const ImbalanceSummary s = summarize(e.mean, detail::initial_n_i(c), c.evolution.summary);
    meta["summary"] = to_json(s);
    if (d.keep_trajectories) {
        std::filesystem::create_directories(c.output.directory + "/trajectories");
        nlohmann::json jumps = nlohmann::json::array();
        for (std::size_t i = 0; i < e.trajectories.size(); ++i) {
            write_csv(c.output.directory + "/trajectories/traj_" + std::to_string(i) + ".csv", e.trajectories[i].series);
            jumps.push_back({{"times", e.trajectories[i].jump_times}, {"channels", e.trajectories[i].jump_channels}});
        }
        meta["jumps"] = jumps;
    }
    if (c.output.wants("json")) detail::write_json(c.output.directory + "/trajectories.json", meta);
    detail::write_run_info(c, "trajectories", o, detail::seconds_since(t0));
    if (!(e.max_top_level_mass < c.evolution.top_mass_tol)) {
        std::cerr << "truncation check failed: top-level mass " << e.max_top_level_mass << "\n";
        return 3;
    }
    return 0;
}

inline int cmd_renorm(const CliOptions& o) {
    const auto t0 = std::chrono::steady_clock::now();
    const RunConfig c = detail::prepare(o);
    const DimerParams p = c.model.params;
    const DimerParams q = a2_renormalize(p);
    const double r = p.D == 0.0 ? 0.0 : squeezing_parameter(p.D, p.left.omega0);
    const nlohmann::json j{{"omega0", q.left.omega0}, {"Omega", q.left.Omega}, {"g", q.left.g},
                           {"J", q.J},                {"r", r},                {"D", p.D}};
    std::cout << j.dump() << std::endl;
    if (c.output.wants("json")) detail::write_json(c.output.directory + "/renorm.json", j);
    if (c.output.wants("dat")) {
        std::ofstream f(c.output.directory + "/renorm.dat");
        char buf[160];
        std::snprintf(buf, sizeof buf, "%.17g %.17g %.17g %.17g %.17g\n", p.D, r, q.left.omega0, q.left.g, q.J);
        f << "# D r omega0 g J\n" << buf;
    }
    detail::write_run_info(c, "renorm", o, detail::seconds_since(t0));
    return 0;
}

// Parses argv and dispatches; every error maps onto the exit-code contract.
inline int run_cli(int argc, char** argv) {
    CLI::App app{"Rabi-dimer simulator", "rabidimer"};
    app.set_version_flag("--version", std::string(RABIDIMER_VERSION));
    app.require_subcommand(1);
    CliOptions opts;
    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", opts.config, "JSON run configuration")->required();
        sub->add_option("--out", opts.out, "output directory (overrides output.directory)");
        sub->add_option("--workers", opts.workers, "worker threads")->capture_default_str();
        sub->add_option("--seed", opts.seed, "master seed for damped runs");
    };
    CLI::App* evolve = app.add_subcommand("evolve", "time evolution and imbalance summary");
    CLI::App* sweep = app.add_subcommand("sweep", "phase diagram over a (g, J) grid");
    CLI::App* spectrum = app.add_subcommand("spectrum", "level statistics and overlaps");
    CLI::App* traj = app.add_subcommand("trajectories", "damped dynamics by quantum jumps");
    CLI::App* renorm = app.add_subcommand("renorm", "A^2-term parameter map");
    for (auto* s : {evolve, sweep, spectrum, traj, renorm}) add_common(s);
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }
    try {
        if (evolve->parsed()) return cmd_evolve(opts);
        if (sweep->parsed()) return cmd_sweep(opts);
        if (spectrum->parsed()) return cmd_spectrum(opts);
        if (traj->parsed()) return cmd_trajectories(opts);
        if (renorm->parsed()) return cmd_renorm(opts);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const TruncationError& e) {
        std::cerr << "truncation error: " << e.what() << '\n';
        return 3;
    } catch (const NumericalError& e) {
        std::cerr << "numerical error: " << e.what() << '\n';
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 4;
    }
    return 2;
}

}  // namespace rabidimer
