// config.hpp - run configuration documents (JSON) with strict validation
//
// Blocks: model, initial_state, evolution, damping, sweep, spectrum,
// output. Unknown keys are rejected everywhere; `resolved()` materializes
// every default so a run directory is self-describing.

#pragma once

#include <nlohmann/json.hpp>

#include <cmath>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "rabidimer/errors.hpp"
#include "rabidimer/model.hpp"
#include "rabidimer/propagate.hpp"
#include "rabidimer/sweep.hpp"
#include "rabidimer/trajectories.hpp"

namespace rabidimer {

struct EvolutionOptions {
    EvolutionPlan plan;
    bool full_truncation_check = false;  // rerun at n_max + delta_n and compare
    int truncation_delta_n = 8;
    double top_mass_tol = 1e-6;
    SummaryOptions summary;
};

struct SpectrumOptions {
    Axis g{0.01, 3.0, 40, Spacing::log, {}};
    int k_levels = 400;      // levels for the spacing variance
    int chi_levels = 20;     // eigenstates averaged for the photon variance
    std::optional<int> n_max;
};

struct OutputOptions {
    std::string directory = "out";
    std::vector<std::string> formats{"csv", "json", "dat"};
    bool wants(const std::string& f) const {
        for (const auto& x : formats)
            if (x == f) return true;
        return false;
    }
};

struct RunConfig {
    ModelConfig model;
    std::vector<SiteState> initial_state;
    EvolutionOptions evolution;
    std::optional<DampingConfig> damping;
    std::optional<GridSpec> sweep;
    std::optional<SpectrumOptions> spectrum;
    OutputOptions output;

    // Photon number used for the default truncation.
    int initial_photons() const {
        int n = 0;
        for (const auto& s : initial_state) {
            if (const auto* f = std::get_if<FockSpec>(&s.field)) n = std::max(n, f->n);
            if (const auto* c = std::get_if<CoherentSpec>(&s.field))
                n = std::max(n, static_cast<int>(std::ceil(std::norm(c->alpha) + 6.0 * std::abs(c->alpha))));
        }
        return n;
    }

    int resolved_n_max() const {
        return model.n_max ? *model.n_max : default_n_max(initial_photons(), model.params.left.g / model.params.left.omega0);
    }
};

namespace detail {

inline Spin spin_from_string(const std::string& s, const std::string& where) {
    if (s == "down") return Spin::down;
    if (s == "up") return Spin::up;
    throw ConfigError(where + ": spin must be \"down\" or \"up\"");
}

inline Axis axis_from_json(const nlohmann::json& j, const std::string& where, Axis fallback) {
    reject_unknown_keys(j, {"min", "max", "points", "spacing", "values"}, where);
    Axis a = fallback;
    if (j.contains("values")) {
        a.explicit_values = get_or(j, "values", std::vector<double>{}, where);
        if (a.explicit_values.empty()) throw ConfigError(where + ".values must not be empty");
    }
    a.min = get_or(j, "min", a.min, where);
    a.max = get_or(j, "max", a.max, where);
    a.points = get_or(j, "points", a.points, where);
    const std::string sp = get_or(j, "spacing", std::string(a.spacing == Spacing::log ? "log" : "linear"), where);
    if (sp == "log") a.spacing = Spacing::log;
    else if (sp == "linear") a.spacing = Spacing::linear;
    else throw ConfigError(where + ".spacing must be \"log\" or \"linear\"");
    a.validate(where);
    return a;
}

inline nlohmann::json to_json(const Axis& a) {
    nlohmann::json j{{"min", a.min}, {"max", a.max}, {"points", a.points},
                     {"spacing", a.spacing == Spacing::log ? "log" : "linear"}};
    if (!a.explicit_values.empty()) j["values"] = a.explicit_values;
    return j;
}

inline std::vector<SiteState> initial_state_from_json(const nlohmann::json& j, int n_sites) {
    const std::string where = "initial_state";
    reject_unknown_keys(j, {"sites"}, where);
    if (!j.contains("sites") || !j.at("sites").is_array()) throw ConfigError(where + ".sites must be an array");
    const auto& arr = j.at("sites");
    if (static_cast<int>(arr.size()) != n_sites)
        throw ConfigError(where + ".sites needs " + std::to_string(n_sites) + " entries (model.n_sites)");
    std::vector<SiteState> out;
    for (std::size_t i = 0; i < arr.size(); ++i) {
        const std::string w = where + ".sites[" + std::to_string(i) + "]";
        reject_unknown_keys(arr[i], {"fock", "coherent", "spin"}, w);
        SiteState s;
        s.spin = spin_from_string(get_or(arr[i], "spin", std::string("down"), w), w + ".spin");
        const bool has_f = arr[i].contains("fock"), has_c = arr[i].contains("coherent");
        if (has_f == has_c) throw ConfigError(w + ": give exactly one of \"fock\" or \"coherent\"");
        if (has_f) {
            const int n = get_or(arr[i], "fock", 0, w);
            if (n < 0) throw ConfigError(w + ".fock must be >= 0");
            s.field = FockSpec{n};
        } else {
            const auto& c = arr[i].at("coherent");
            cplx alpha;
            if (c.is_number()) alpha = c.get<double>();
            else if (c.is_array() && c.size() == 2 && c[0].is_number() && c[1].is_number())
                alpha = {c[0].get<double>(), c[1].get<double>()};
            else throw ConfigError(w + ".coherent must be a number or [re, im]");
            s.field = CoherentSpec{alpha};
        }
        out.push_back(s);
    }
    return out;
}

inline nlohmann::json to_json(const std::vector<SiteState>& st) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& s : st) {
        nlohmann::json j{{"spin", s.spin == Spin::up ? "up" : "down"}};
        if (const auto* f = std::get_if<FockSpec>(&s.field)) j["fock"] = f->n;
        if (const auto* c = std::get_if<CoherentSpec>(&s.field)) j["coherent"] = {c->alpha.real(), c->alpha.imag()};
        arr.push_back(j);
    }
    return {{"sites", arr}};
}

}  // namespace detail

inline RunConfig run_config_from_json(const nlohmann::json& doc) {
    using detail::get_or;
    using detail::reject_unknown_keys;
    reject_unknown_keys(doc, {"model", "initial_state", "evolution", "damping", "sweep", "spectrum", "output"}, "config");
    RunConfig c;
    c.model = model_config_from_json(doc.value("model", nlohmann::json::object()));

    if (doc.contains("initial_state")) {
        c.initial_state = detail::initial_state_from_json(doc.at("initial_state"), c.model.n_sites);
    } else {
        c.initial_state.push_back({FockSpec{20}, Spin::down});
        if (c.model.n_sites == 2) c.initial_state.push_back({FockSpec{0}, Spin::down});
    }

    {
        const std::string w = "evolution";
        const nlohmann::json e = doc.value(w, nlohmann::json::object());
        reject_unknown_keys(e, {"t_final", "dt_sample", "engine", "krylov_dim", "step_tol", "full_diag_max_dim",
                                "full_truncation_check", "truncation_delta_n", "top_mass_tol", "transient_end",
                                "average_start"},
                            w);
        EvolutionOptions& o = c.evolution;
        o.plan.t_final = get_or(e, "t_final", o.plan.t_final, w);
        o.plan.dt_sample = get_or(e, "dt_sample", o.plan.dt_sample, w);
        o.plan.engine = engine_from_string(get_or(e, "engine", to_string(o.plan.engine), w));
        o.plan.krylov_dim = get_or(e, "krylov_dim", o.plan.krylov_dim, w);
        o.plan.step_tol = get_or(e, "step_tol", o.plan.step_tol, w);
        o.plan.full_diag_max_dim = get_or(e, "full_diag_max_dim", o.plan.full_diag_max_dim, w);
        o.full_truncation_check = get_or(e, "full_truncation_check", o.full_truncation_check, w);
        o.truncation_delta_n = get_or(e, "truncation_delta_n", o.truncation_delta_n, w);
        o.top_mass_tol = get_or(e, "top_mass_tol", o.top_mass_tol, w);
        o.summary.transient_end = get_or(e, "transient_end", o.summary.transient_end, w);
        o.summary.average_start = get_or(e, "average_start", o.summary.average_start, w);
        o.plan.validate();
        if (o.truncation_delta_n < 4) throw ConfigError("evolution.truncation_delta_n must be >= 4");
        if (!(o.top_mass_tol > 0.0)) throw ConfigError("evolution.top_mass_tol must be > 0");
        if (!(o.summary.transient_end > 0.0)) throw ConfigError("evolution.transient_end must be > 0");
        if (!(o.summary.average_start >= 0.0) || !(o.summary.average_start < o.plan.t_final))
            throw ConfigError("evolution.average_start must lie in [0, t_final)");
    }

    if (doc.contains("damping") && !doc.at("damping").is_null()) {
        const std::string w = "damping";
        const auto& e = doc.at(w);
        reject_unknown_keys(e, {"tau_gamma", "n_traj", "master_seed", "jump_basis", "engine", "support_tol",
                                "bisection_tol", "eigen_max_sector_dim", "keep_trajectories"},
                            w);
        DampingConfig d;
        if (e.contains("tau_gamma") && e.at("tau_gamma").is_null()) d.tau_gamma = std::numeric_limits<double>::infinity();
        else d.tau_gamma = get_or(e, "tau_gamma", d.tau_gamma, w);
        d.n_traj = get_or(e, "n_traj", d.n_traj, w);
        d.master_seed = get_or(e, "master_seed", d.master_seed, w);
        d.jump_basis = jump_basis_from_string(get_or(e, "jump_basis", to_string(d.jump_basis), w));
        d.engine = trajectory_engine_from_string(get_or(e, "engine", to_string(d.engine), w));
        d.support_tol = get_or(e, "support_tol", d.support_tol, w);
        d.bisection_tol = get_or(e, "bisection_tol", d.bisection_tol, w);
        d.eigen_max_sector_dim = get_or(e, "eigen_max_sector_dim", d.eigen_max_sector_dim, w);
        d.keep_trajectories = get_or(e, "keep_trajectories", d.keep_trajectories, w);
        d.validate();
        c.damping = d;
    }

    if (doc.contains("sweep") && !doc.at("sweep").is_null()) {
        const std::string w = "sweep";
        const auto& e = doc.at(w);
        reject_unknown_keys(e, {"g", "J", "n_i", "initial_site", "threshold", "top_mass_tol", "full_truncation_check", "preset"}, w);
        GridSpec s;
        const std::string preset = get_or(e, "preset", std::string("default"), w);
        if (preset == "ci") s = GridSpec::ci();
        else if (preset != "default") throw ConfigError("sweep.preset must be \"default\" or \"ci\"");
        if (e.contains("g")) s.g = detail::axis_from_json(e.at("g"), "sweep.g", s.g);
        if (e.contains("J")) s.J = detail::axis_from_json(e.at("J"), "sweep.J", s.J);
        s.n_i = get_or(e, "n_i", s.n_i, w);
        const std::string site = get_or(e, "initial_site", std::string("left"), w);
        if (site == "left") s.initial_site = Site::left;
        else if (site == "right") s.initial_site = Site::right;
        else throw ConfigError("sweep.initial_site must be \"left\" or \"right\"");
        s.threshold = get_or(e, "threshold", s.threshold, w);
        s.top_mass_tol = get_or(e, "top_mass_tol", s.top_mass_tol, w);
        s.full_truncation_check = get_or(e, "full_truncation_check", s.full_truncation_check, w);
        s.validate();
        c.sweep = s;
    }

    if (doc.contains("spectrum") && !doc.at("spectrum").is_null()) {
        const std::string w = "spectrum";
        const auto& e = doc.at(w);
        reject_unknown_keys(e, {"g", "k_levels", "chi_levels", "n_max"}, w);
        SpectrumOptions s;
        if (e.contains("g")) s.g = detail::axis_from_json(e.at("g"), "spectrum.g", s.g);
        s.k_levels = get_or(e, "k_levels", s.k_levels, w);
        s.chi_levels = get_or(e, "chi_levels", s.chi_levels, w);
        if (e.contains("n_max") && !e.at("n_max").is_null()) s.n_max = get_or(e, "n_max", 0, w);
        if (s.k_levels < 2 || s.chi_levels < 1) throw ConfigError("spectrum.k_levels >= 2 and chi_levels >= 1 required");
        if (s.n_max && *s.n_max < 0) throw ConfigError("spectrum.n_max must be >= 0");
        c.spectrum = s;
    }

    if (doc.contains("output")) {
        const std::string w = "output";
        const auto& e = doc.at(w);
        reject_unknown_keys(e, {"directory", "formats"}, w);
        c.output.directory = get_or(e, "directory", c.output.directory, w);
        c.output.formats = get_or(e, "formats", c.output.formats, w);
        for (const auto& f : c.output.formats)
            if (f != "csv" && f != "json" && f != "dat") throw ConfigError("output.formats: unknown format '" + f + "'");
    }
    return c;
}

// Parses a config file; JSON syntax errors carry line and column.
inline RunConfig load_run_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot open config " + path);
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(f);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(path + ": " + e.what());
    }
    return run_config_from_json(doc);
}

// Every field with defaults materialized, n_max resolved.
inline nlohmann::json resolved(const RunConfig& c) {
    nlohmann::json j;
    ModelConfig m = c.model;
    m.n_max = c.resolved_n_max();
    j["model"] = to_json(m);
    j["initial_state"] = detail::to_json(c.initial_state);
    const EvolutionOptions& o = c.evolution;
    j["evolution"] = {{"t_final", o.plan.t_final},
                      {"dt_sample", o.plan.dt_sample},
                      {"engine", to_string(o.plan.engine)},
                      {"krylov_dim", o.plan.krylov_dim},
                      {"step_tol", o.plan.step_tol},
                      {"full_diag_max_dim", o.plan.full_diag_max_dim},
                      {"full_truncation_check", o.full_truncation_check},
                      {"truncation_delta_n", o.truncation_delta_n},
                      {"top_mass_tol", o.top_mass_tol},
                      {"transient_end", o.summary.transient_end},
                      {"average_start", o.summary.average_start}};
    if (c.damping) {
        const DampingConfig& d = *c.damping;
        j["damping"] = {{"tau_gamma", std::isinf(d.tau_gamma) ? nlohmann::json(nullptr) : nlohmann::json(d.tau_gamma)},
                        {"n_traj", d.n_traj},
                        {"master_seed", d.master_seed},
                        {"jump_basis", to_string(d.resolve(c.model.params.left.g / c.model.params.left.omega0))},
                        {"engine", to_string(d.engine)},
                        {"support_tol", d.support_tol},
                        {"bisection_tol", d.bisection_tol},
                        {"eigen_max_sector_dim", d.eigen_max_sector_dim},
                        {"keep_trajectories", d.keep_trajectories}};
    }
    if (c.sweep) {
        const GridSpec& s = *c.sweep;
        j["sweep"] = {{"g", detail::to_json(s.g)},
                      {"J", detail::to_json(s.J)},
                      {"n_i", s.n_i},
                      {"initial_site", s.initial_site == Site::left ? "left" : "right"},
                      {"threshold", s.threshold},
                      {"top_mass_tol", s.top_mass_tol},
                      {"full_truncation_check", s.full_truncation_check}};
    }
    if (c.spectrum) {
        const SpectrumOptions& s = *c.spectrum;
        j["spectrum"] = {{"g", detail::to_json(s.g)},
                         {"k_levels", s.k_levels},
                         {"chi_levels", s.chi_levels},
                         {"n_max", s.n_max ? nlohmann::json(*s.n_max) : nlohmann::json(nullptr)}};
    }
    j["output"] = {{"directory", c.output.directory}, {"formats", c.output.formats}};
    return j;
}

}  // namespace rabidimer
