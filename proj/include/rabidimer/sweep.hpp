// sweep.hpp - (g, J) phase-diagram sweeps with checkpoint/resume
//
// Every cell builds the identical-site dimer at (g, J), starts from
// |n_i, down> in one cavity and the vacuum in the other, evolves to T and
// stores z_avg. Finished cells are appended to a JSON-lines checkpoint;
// a resumed sweep replays the log and only runs what is missing.

#pragma once

#include <nlohmann/json.hpp>

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "rabidimer/errors.hpp"
#include "rabidimer/model.hpp"
#include "rabidimer/observables.hpp"
#include "rabidimer/parallel.hpp"
#include "rabidimer/propagate.hpp"
#include "rabidimer/trajectories.hpp"

namespace rabidimer {

enum class Spacing { log, linear };

struct Axis {
    double min = 0.0;
    double max = 0.0;
    int points = 1;
    Spacing spacing = Spacing::log;
    std::vector<double> explicit_values;  // overrides min/max/points when set

    std::vector<double> values() const {
        if (!explicit_values.empty()) return explicit_values;
        std::vector<double> v(static_cast<std::size_t>(points));
        for (int i = 0; i < points; ++i) {
            const double f = points == 1 ? 0.0 : static_cast<double>(i) / (points - 1);
            v[static_cast<std::size_t>(i)] =
                spacing == Spacing::log ? min * std::pow(max / min, f) : min + (max - min) * f;
        }
        return v;
    }

    void validate(const std::string& name) const {
        if (!explicit_values.empty()) {
            for (std::size_t i = 0; i < explicit_values.size(); ++i) {
                if (!(explicit_values[i] >= 0.0)) throw ConfigError(name + ": values must be >= 0");
                if (i > 0 && !(explicit_values[i] > explicit_values[i - 1]))
                    throw ConfigError(name + ": values must be strictly increasing");
            }
            return;
        }
        if (points < 1) throw ConfigError(name + ": points must be >= 1");
        if (spacing == Spacing::log && !(min > 0.0)) throw ConfigError(name + ": log axis needs min > 0");
        if (!(min >= 0.0) || !(max >= min)) throw ConfigError(name + ": need 0 <= min <= max");
        if (points > 1 && !(max > min)) throw ConfigError(name + ": need min < max for several points");
    }
};

struct GridSpec {
    Axis g{0.01, 3.0, 40, Spacing::log, {}};
    Axis J{0.003, 0.1, 20, Spacing::log, {}};
    int n_i = 20;
    Site initial_site = Site::left;
    double threshold = 0.5;       // localized when z_avg / n_i >= threshold
    double top_mass_tol = 1e-6;   // truncation guard per cell
    bool full_truncation_check = false;  // also rerun at n_max + 8 and compare z(t)

    // CI grid: 8 x 5 points, T = 2000
    static GridSpec ci() {
        GridSpec s;
        s.g = {0.01, 2.0, 8, Spacing::log, {}};
        s.J = {0.0025, 0.04, 5, Spacing::log, {}};
        return s;
    }

    void validate() const {
        g.validate("sweep.g");
        J.validate("sweep.J");
        if (n_i < 0) throw ConfigError("sweep.n_i must be >= 0");
        if (!(threshold > 0.0 && threshold <= 1.0)) throw ConfigError("sweep.threshold must lie in (0, 1]");
        if (!(top_mass_tol > 0.0)) throw ConfigError("sweep.top_mass_tol must be > 0");
    }
};

enum class CellStatus { pending, done, failed };

inline std::string to_string(CellStatus s) {
    switch (s) {
    case CellStatus::pending: return "pending";
    case CellStatus::done: return "done";
    case CellStatus::failed: return "failed";
    }
    return "?";
}
inline CellStatus cell_status_from_string(const std::string& s) {
    if (s == "pending") return CellStatus::pending;
    if (s == "done") return CellStatus::done;
    if (s == "failed") return CellStatus::failed;
    throw ConfigError("unknown cell status '" + s + "'");
}

struct CellResult {
    std::size_t gi = 0, ji = 0;
    double g = 0.0, J = 0.0;
    double z_avg = std::numeric_limits<double>::quiet_NaN();
    int n_max = 0;
    double top_mass = 0.0;
    CellStatus status = CellStatus::pending;
    std::string error;
};

inline nlohmann::json to_json(const CellResult& c) {
    nlohmann::json j{{"gi", c.gi},       {"ji", c.ji},         {"g", c.g},
                     {"J", c.J},         {"n_max", c.n_max},   {"top_mass", c.top_mass},
                     {"status", to_string(c.status)}, {"error", c.error}};
    j["z_avg"] = std::isnan(c.z_avg) ? nlohmann::json(nullptr) : nlohmann::json(c.z_avg);
    return j;
}

inline CellResult cell_from_json(const nlohmann::json& j) {
    CellResult c;
    c.gi = j.at("gi").get<std::size_t>();
    c.ji = j.at("ji").get<std::size_t>();
    c.g = j.at("g").get<double>();
    c.J = j.at("J").get<double>();
    c.n_max = j.at("n_max").get<int>();
    c.top_mass = j.at("top_mass").get<double>();
    c.status = cell_status_from_string(j.at("status").get<std::string>());
    c.error = j.at("error").get<std::string>();
    c.z_avg = j.at("z_avg").is_null() ? std::numeric_limits<double>::quiet_NaN() : j.at("z_avg").get<double>();
    return c;
}

// z_avg over a |J_values| x |g_values| lattice (row = J, column = g).
struct PhaseGrid {
    std::vector<double> g_values;
    std::vector<double> J_values;
    std::vector<CellResult> cells;  // row-major: ji * |g| + gi
    int n_i = 20;
    double T = 0.0;

    std::size_t rows() const { return J_values.size(); }
    std::size_t cols() const { return g_values.size(); }
    CellResult& cell(std::size_t ji, std::size_t gi) { return cells[ji * cols() + gi]; }
    const CellResult& cell(std::size_t ji, std::size_t gi) const { return cells[ji * cols() + gi]; }

    Eigen::MatrixXd z_avg() const {
        Eigen::MatrixXd m(static_cast<Index>(rows()), static_cast<Index>(cols()));
        for (std::size_t j = 0; j < rows(); ++j)
            for (std::size_t g = 0; g < cols(); ++g) m(static_cast<Index>(j), static_cast<Index>(g)) = cell(j, g).z_avg;
        return m;
    }
};

struct SweepTemplate {
    RabiParams site{1.0, 1.0, 0.0};  // g is overwritten per cell
    double D = 0.0;
    std::optional<int> n_max;        // default: default_n_max(n_i, g)
    bool jc_only = false;
    std::optional<DampingConfig> damping;
};

// --------------------------------------------------------------------------
// One cell

inline CellResult evaluate_cell(const GridSpec& spec, const SweepTemplate& tmpl, const EvolutionPlan& plan, double g,
                                double J) {
    CellResult c;
    c.g = g;
    c.J = J;
    c.n_max = tmpl.n_max ? *tmpl.n_max : default_n_max(spec.n_i, g);
    RabiParams site = tmpl.site;
    site.g = g;
    const DimerParams p = DimerParams::identical(site, J, tmpl.D);
    const BuildOptions opt{tmpl.jc_only};
    auto run = [&](int n_max, double& top) {
        const FockSpace space(n_max, 2);
        const OperatorMatrix H = build_dimer(space, p, opt);
        const Site other = spec.initial_site == Site::left ? Site::right : Site::left;
        std::vector<SiteState> st(2);
        st[static_cast<int>(spec.initial_site)] = {FockSpec{spec.n_i}, Spin::down};
        st[static_cast<int>(other)] = {FockSpec{0}, Spin::down};
        const StateVector psi0 = product_state(space, st);
        const std::vector<Observable> obs{{"N_L", number(space, Site::left)}, {"N_R", number(space, Site::right)}};
        if (tmpl.damping && tmpl.damping->kappa() > 0.0) {
            const DampingConfig& d = *tmpl.damping;
            const DampedSystem sys(H, d.kappa(), d.resolve(g / site.omega0), d.engine, d.eigen_max_sector_dim);
            const TrajectoryEnsemble e = run_trajectories(sys, psi0, plan, d, obs, 1);
            top = e.max_top_level_mass;
            return imbalance(e.mean[0], e.mean[1]);
        }
        const EvolutionResult r = evolve(H, psi0, plan, obs);
        top = r.diagnostics.max_top_level_mass;
        return imbalance(r.series[0], r.series[1]);
    };
    try {
        const TimeSeries z = run(c.n_max, c.top_mass);
        c.z_avg = time_average(z);
        if (!(c.top_mass < spec.top_mass_tol)) {
            c.status = CellStatus::failed;
            c.error = "truncation: top-level mass " + std::to_string(c.top_mass) + " at n_max=" + std::to_string(c.n_max);
            return c;
        }
        if (spec.full_truncation_check) {
            double top2 = 0.0;
            const TimeSeries z2 = run(c.n_max + 8, top2);
            double dev = 0.0;
            for (std::size_t i = 0; i < z.size(); ++i) dev = std::max(dev, std::abs(z.values[i] - z2.values[i]));
            if (!(dev < 0.1)) {
                c.status = CellStatus::failed;
                c.error = "truncation: imbalance moves by " + std::to_string(dev) + " at n_max+8";
                return c;
            }
        }
        c.status = CellStatus::done;
    } catch (const TruncationError& e) {
        c.status = CellStatus::failed;
        c.error = std::string("truncation: ") + e.what();
    } catch (const NumericalError& e) {
        c.status = CellStatus::failed;
        c.error = std::string("numerical: ") + e.what();
    }
    return c;
}

// --------------------------------------------------------------------------
// Checkpoint log

namespace detail {

inline nlohmann::json sweep_fingerprint(const GridSpec& spec, const SweepTemplate& tmpl, const EvolutionPlan& plan) {
    return {{"g", spec.g.values()},
            {"J", spec.J.values()},
            {"n_i", spec.n_i},
            {"initial_site", spec.initial_site == Site::left ? "left" : "right"},
            {"top_mass_tol", spec.top_mass_tol},
            {"full_truncation_check", spec.full_truncation_check},
            {"omega0", tmpl.site.omega0},
            {"Omega", tmpl.site.Omega},
            {"D", tmpl.D},
            {"n_max", tmpl.n_max ? nlohmann::json(*tmpl.n_max) : nlohmann::json(nullptr)},
            {"jc_only", tmpl.jc_only},
            {"damping", tmpl.damping ? nlohmann::json{{"tau_gamma", tmpl.damping->tau_gamma},
                                                      {"n_traj", tmpl.damping->n_traj},
                                                      {"master_seed", tmpl.damping->master_seed},
                                                      {"jump_basis", to_string(tmpl.damping->jump_basis)}}
                                     : nlohmann::json(nullptr)},
            {"t_final", plan.t_final},
            {"dt_sample", plan.dt_sample},
            {"engine", to_string(plan.engine)},
            {"krylov_dim", plan.krylov_dim},
            {"step_tol", plan.step_tol}};
}

// Reads complete records; a torn final line (crash mid-write) is ignored.
inline std::vector<nlohmann::json> read_log(const std::string& path) {
    std::vector<nlohmann::json> out;
    std::ifstream f(path);
    std::string line;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        try {
            out.push_back(nlohmann::json::parse(line));
        } catch (const nlohmann::json::parse_error&) {
            if (f.peek() != std::char_traits<char>::eof()) throw ConfigError("corrupt checkpoint record in " + path);
        }
    }
    return out;
}

}  // namespace detail

struct SweepProgress {
    std::size_t resumed = 0;   // cells taken from the checkpoint
    std::size_t computed = 0;  // cells evaluated in this call
};

// Evaluates every pending cell; with a checkpoint path, completed cells are
// appended as they finish and a rerun resumes from the log.
inline PhaseGrid run_sweep(const GridSpec& spec, const SweepTemplate& tmpl, const EvolutionPlan& plan, int workers,
                           const std::string& checkpoint = "", SweepProgress* progress = nullptr) {
    spec.validate();
    plan.validate();
    if (tmpl.damping) tmpl.damping->validate();
    PhaseGrid grid;
    grid.g_values = spec.g.values();
    grid.J_values = spec.J.values();
    grid.n_i = spec.n_i;
    grid.T = plan.sample_time(plan.sample_count() - 1);
    grid.cells.resize(grid.rows() * grid.cols());
    for (std::size_t j = 0; j < grid.rows(); ++j)
        for (std::size_t g = 0; g < grid.cols(); ++g) {
            CellResult& c = grid.cell(j, g);
            c.gi = g;
            c.ji = j;
            c.g = grid.g_values[g];
            c.J = grid.J_values[j];
        }

    const nlohmann::json fp = detail::sweep_fingerprint(spec, tmpl, plan);
    SweepProgress prog;
    std::ofstream log;
    if (!checkpoint.empty()) {
        const bool exists = std::filesystem::exists(checkpoint);
        if (exists) {
            const auto records = detail::read_log(checkpoint);
            if (records.empty() || records.front().value("kind", "") != "header")
                throw ConfigError("checkpoint " + checkpoint + " has no header record");
            if (records.front().at("sweep") != fp)
                throw ConfigError("checkpoint " + checkpoint + " belongs to a different sweep configuration");
            for (std::size_t i = 1; i < records.size(); ++i) {
                const CellResult c = cell_from_json(records[i]);
                if (c.ji >= grid.rows() || c.gi >= grid.cols()) throw ConfigError("checkpoint cell outside the grid");
                if (grid.cell(c.ji, c.gi).status == CellStatus::pending) ++prog.resumed;
                grid.cell(c.ji, c.gi) = c;
            }
            // rewrite without the torn tail so appends start on a fresh line
            std::ofstream clean(checkpoint, std::ios::trunc);
            for (const auto& r : records) clean << r.dump() << '\n';
        }
        log.open(checkpoint, std::ios::app);
        if (!log) throw ConfigError("cannot open checkpoint " + checkpoint);
        if (!exists) log << nlohmann::json{{"kind", "header"}, {"sweep", fp}}.dump() << '\n' << std::flush;
    }

    std::vector<std::size_t> todo;
    for (std::size_t i = 0; i < grid.cells.size(); ++i)
        if (grid.cells[i].status == CellStatus::pending) todo.push_back(i);
    std::mutex mu;
    parallel_for(todo.size(), workers, [&](std::size_t k) {
        const std::size_t i = todo[k];
        CellResult c = evaluate_cell(spec, tmpl, plan, grid.cells[i].g, grid.cells[i].J);
        c.gi = grid.cells[i].gi;
        c.ji = grid.cells[i].ji;
        std::lock_guard<std::mutex> lock(mu);
        grid.cells[i] = c;
        if (log.is_open()) log << to_json(c).dump() << '\n' << std::flush;
    });
    prog.computed = todo.size();
    if (progress) *progress = prog;
    return grid;
}

// --------------------------------------------------------------------------
// Classification and boundaries

enum class PhaseLabel { localized, delocalized, unknown };

inline std::string to_string(PhaseLabel l) {
    switch (l) {
    case PhaseLabel::localized: return "localized";
    case PhaseLabel::delocalized: return "delocalized";
    case PhaseLabel::unknown: return "unknown";
    }
    return "?";
}

using LabelMatrix = std::vector<std::vector<PhaseLabel>>;  // [ji][gi]

inline LabelMatrix classify(const PhaseGrid& grid, double threshold = 0.5) {
    if (grid.n_i <= 0) throw ConfigError("classify needs n_i > 0");
    LabelMatrix out(grid.rows(), std::vector<PhaseLabel>(grid.cols(), PhaseLabel::unknown));
    for (std::size_t j = 0; j < grid.rows(); ++j)
        for (std::size_t g = 0; g < grid.cols(); ++g) {
            const CellResult& c = grid.cell(j, g);
            if (c.status != CellStatus::done) continue;
            out[j][g] = c.z_avg / grid.n_i >= threshold ? PhaseLabel::localized : PhaseLabel::delocalized;
        }
    return out;
}

struct BoundaryPoint {
    double g = 0.0;
    double J = 0.0;
    char axis = 'g';  // direction in which the label changes
};

struct Boundary {
    std::vector<BoundaryPoint> points;
    std::optional<double> J_c;  // largest J with a localized cell
};

namespace detail {

// Midpoint of a cell edge; geometric on positive (log-like) axes.
inline double edge_mid(double a, double b) { return a > 0.0 && b > 0.0 ? std::sqrt(a * b) : 0.5 * (a + b); }

}  // namespace detail

inline Boundary boundary_extract(const PhaseGrid& grid, const LabelMatrix& labels) {
    Boundary out;
    auto known = [](PhaseLabel l) { return l != PhaseLabel::unknown; };
    for (std::size_t j = 0; j < grid.rows(); ++j)
        for (std::size_t g = 0; g < grid.cols(); ++g) {
            const PhaseLabel l = labels[j][g];
            if (l == PhaseLabel::localized) out.J_c = grid.J_values[j];
            if (g + 1 < grid.cols() && known(l) && known(labels[j][g + 1]) && l != labels[j][g + 1])
                out.points.push_back({detail::edge_mid(grid.g_values[g], grid.g_values[g + 1]), grid.J_values[j], 'g'});
            if (j + 1 < grid.rows() && known(l) && known(labels[j + 1][g]) && l != labels[j + 1][g])
                out.points.push_back({grid.g_values[g], detail::edge_mid(grid.J_values[j], grid.J_values[j + 1]), 'J'});
        }
    return out;
}

// Label changes along g at row ji: (edge midpoint, label to the right).
inline std::vector<std::pair<double, PhaseLabel>> transitions_along_g(const PhaseGrid& grid, const LabelMatrix& labels,
                                                                     std::size_t ji) {
    std::vector<std::pair<double, PhaseLabel>> out;
    std::optional<std::size_t> prev;
    for (std::size_t g = 0; g < grid.cols(); ++g) {
        if (labels[ji][g] == PhaseLabel::unknown) continue;
        if (prev && labels[ji][*prev] != labels[ji][g])
            out.emplace_back(detail::edge_mid(grid.g_values[*prev], grid.g_values[g]), labels[ji][g]);
        prev = g;
    }
    return out;
}

// --------------------------------------------------------------------------
// Output files: phase_grid.csv, phase_grid.json, phase_points.dat

inline void write_phase_outputs(const std::string& dir, const PhaseGrid& grid, const LabelMatrix& labels,
                                double threshold, const nlohmann::json& metadata = {}) {
    std::filesystem::create_directories(dir);
    char buf[128];
    {
        std::ofstream f(dir + "/phase_grid.csv");
        f << "# J \\ g";
        for (double g : grid.g_values) {
            std::snprintf(buf, sizeof buf, "%.17g", g);
            f << ", " << buf;
        }
        f << '\n';
        for (std::size_t j = 0; j < grid.rows(); ++j) {
            std::snprintf(buf, sizeof buf, "%.17g", grid.J_values[j]);
            f << buf;
            for (std::size_t g = 0; g < grid.cols(); ++g) {
                std::snprintf(buf, sizeof buf, "%.17g", grid.cell(j, g).z_avg);
                f << ", " << buf;
            }
            f << '\n';
        }
    }
    const Boundary b = boundary_extract(grid, labels);
    {
        nlohmann::json failures = nlohmann::json::array();
        nlohmann::json z = nlohmann::json::array(), lab = nlohmann::json::array(), nmax = nlohmann::json::array(),
                       status = nlohmann::json::array();
        for (std::size_t j = 0; j < grid.rows(); ++j) {
            nlohmann::json zr = nlohmann::json::array(), lr = nlohmann::json::array(), nr = nlohmann::json::array(),
                           sr = nlohmann::json::array();
            for (std::size_t g = 0; g < grid.cols(); ++g) {
                const CellResult& c = grid.cell(j, g);
                zr.push_back(std::isnan(c.z_avg) ? nlohmann::json(nullptr) : nlohmann::json(c.z_avg));
                lr.push_back(to_string(labels[j][g]));
                nr.push_back(c.n_max);
                sr.push_back(to_string(c.status));
                if (c.status == CellStatus::failed) failures.push_back(to_json(c));
            }
            z.push_back(zr);
            lab.push_back(lr);
            nmax.push_back(nr);
            status.push_back(sr);
        }
        nlohmann::json pts = nlohmann::json::array();
        for (const auto& p : b.points) pts.push_back({{"g", p.g}, {"J", p.J}, {"axis", std::string(1, p.axis)}});
        const nlohmann::json j{{"g_values", grid.g_values},
                               {"J_values", grid.J_values},
                               {"n_i", grid.n_i},
                               {"T", grid.T},
                               {"threshold", threshold},
                               {"z_avg", z},
                               {"labels", lab},
                               {"n_max_used", nmax},
                               {"status", status},
                               {"failures", failures},
                               {"boundary", pts},
                               {"J_c", b.J_c ? nlohmann::json(*b.J_c) : nlohmann::json(nullptr)},
                               {"metadata", metadata}};
        std::ofstream f(dir + "/phase_grid.json");
        f << j.dump(2) << '\n';
    }
    {
        std::ofstream f(dir + "/phase_points.dat");
        f << "# g J z_avg label\n";
        for (std::size_t j = 0; j < grid.rows(); ++j) {
            for (std::size_t g = 0; g < grid.cols(); ++g) {
                std::snprintf(buf, sizeof buf, "%.17g %.17g %.17g ", grid.g_values[g], grid.J_values[j],
                              grid.cell(j, g).z_avg);
                f << buf << to_string(labels[j][g]) << '\n';
            }
            f << '\n';  // gnuplot pm3d row separator
        }
    }
}

}  // namespace rabidimer
