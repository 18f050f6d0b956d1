// propagate.hpp - unitary time evolution with sampled observables
//
// Two engines: `full_diag` expands the initial state in the eigenbasis of H
// once and rebuilds psi(t) from phases; `krylov` steps with Lanczos
// exponentials, reusing one subspace for every sample time it covers.

#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iomanip>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "rabidimer/errors.hpp"
#include "rabidimer/fockspace.hpp"
#include "rabidimer/krylov.hpp"
#include "rabidimer/model.hpp"
#include "rabidimer/spectral.hpp"

namespace rabidimer {

enum class Engine { automatic, full_diag, krylov };

inline std::string to_string(Engine e) {
    switch (e) {
    case Engine::automatic: return "auto";
    case Engine::full_diag: return "full-diag";
    case Engine::krylov: return "krylov";
    }
    return "?";
}

inline Engine engine_from_string(const std::string& s) {
    if (s == "auto") return Engine::automatic;
    if (s == "full-diag" || s == "full_diag") return Engine::full_diag;
    if (s == "krylov") return Engine::krylov;
    throw ConfigError("unknown engine '" + s + "' (expected auto, full-diag or krylov)");
}

struct EvolutionPlan {
    double t_final = 2.0e4;
    double dt_sample = 1.0;
    Engine engine = Engine::automatic;
    int krylov_dim = 60;
    double step_tol = 1e-9;
    Index full_diag_max_dim = 4000;  // automatic engine threshold

    void validate() const {
        if (!(dt_sample > 0.0) || !(dt_sample <= t_final))
            throw ConfigError("evolution plan needs 0 < dt_sample <= t_final");
        if (krylov_dim < 4) throw ConfigError("krylov_dim must be >= 4");
        if (!(step_tol > 0.0)) throw ConfigError("step_tol must be > 0");
    }

    std::size_t sample_count() const {
        return static_cast<std::size_t>(std::floor(t_final / dt_sample + 1e-9)) + 1;
    }
    double sample_time(std::size_t k) const { return static_cast<double>(k) * dt_sample; }

    Engine resolve(Index dim) const {
        if (engine != Engine::automatic) return engine;
        return dim <= full_diag_max_dim ? Engine::full_diag : Engine::krylov;
    }
};

struct TimeSeries {
    std::vector<double> times;
    std::vector<double> values;
    std::string label;

    std::size_t size() const { return times.size(); }
};

struct Observable {
    std::string label;
    OperatorMatrix op;
};

struct EvolutionDiagnostics {
    Engine engine = Engine::automatic;
    double max_norm_drift = 0.0;
    double max_top_level_mass = 0.0;  // occupation of n = n_max on either site
    KrylovStats krylov;
    std::size_t support = 0;          // eigenstates used by the full-diag engine
    std::string sector = "all";       // subspace the krylov engine worked in
};

struct EvolutionResult {
    std::vector<TimeSeries> series;
    EvolutionDiagnostics diagnostics;

    const TimeSeries& at(const std::string& label) const {
        for (const auto& s : series)
            if (s.label == label) return s;
        throw ConfigError("no series labelled '" + label + "'");
    }
};

namespace detail {

// Evaluates observables on normalized states; diagonal operators use |psi|^2.
class SampleRecorder {
public:
    SampleRecorder(const FockSpace& space, const std::vector<Observable>& obs, const EvolutionPlan& plan)
        : obs_(obs) {
        const std::size_t n = plan.sample_count();
        for (const auto& o : obs) {
            if (!(o.op.space() == space)) throw ConfigError("observable '" + o.label + "' lives on another space");
            TimeSeries ts;
            ts.label = o.label;
            ts.times.reserve(n);
            ts.values.reserve(n);
            series_.push_back(std::move(ts));
            diag_.push_back(diagonal_of(o.op));
        }
        for (Index i = 0; i < space.dim(); ++i) {
            const BasisLabel b = space.label(i);
            if (b.left.n == space.n_max() || (space.n_sites() == 2 && b.right.n == space.n_max()))
                top_.push_back(i);
        }
    }

    void record(double t, const Eigen::VectorXcd& psi, EvolutionDiagnostics& d) {
        const double nrm = psi.norm();
        d.max_norm_drift = std::max(d.max_norm_drift, std::abs(nrm - 1.0));
        if (std::abs(nrm - 1.0) > 1e-6) {
            std::ostringstream msg;
            msg << "norm drift " << std::abs(nrm - 1.0) << " at t=" << t << " (engine " << to_string(d.engine)
                << ", subspaces " << d.krylov.subspaces << ")";
            throw NumericalError(msg.str());
        }
        double top = 0.0;
        for (Index i : top_) top += std::norm(psi(i));
        d.max_top_level_mass = std::max(d.max_top_level_mass, top / (nrm * nrm));
        Eigen::VectorXd prob;
        for (std::size_t k = 0; k < obs_.size(); ++k) {
            double v;
            if (diag_[k]) {
                if (prob.size() == 0) prob = psi.cwiseAbs2();
                v = prob.dot(*diag_[k]);
            } else {
                v = psi.dot(obs_[k].op.matrix() * psi).real();
            }
            series_[k].times.push_back(t);
            series_[k].values.push_back(v / (nrm * nrm));
        }
    }

    std::vector<TimeSeries> take() { return std::move(series_); }

private:
    static std::optional<Eigen::VectorXd> diagonal_of(const OperatorMatrix& op) {
        const SparseMatrix& m = op.matrix();
        Eigen::VectorXd d = Eigen::VectorXd::Zero(m.rows());
        for (int k = 0; k < m.outerSize(); ++k)
            for (SparseMatrix::InnerIterator it(m, k); it; ++it) {
                if (it.row() != it.col() || it.value().imag() != 0.0) return std::nullopt;
                d(it.row()) = it.value().real();
            }
        return d;
    }

    const std::vector<Observable>& obs_;
    std::vector<TimeSeries> series_;
    std::vector<std::optional<Eigen::VectorXd>> diag_;
    std::vector<Index> top_;
};

// Expands psi0 in the eigenbasis of every symmetry sector it touches and
// rebuilds psi(t) from phases on the support |c_l|^2 > 1e-24.
inline void evolve_full_diag(const OperatorMatrix& H, const Eigen::VectorXcd& psi0, const EvolutionPlan& plan,
                             SampleRecorder& rec, EvolutionDiagnostics& diag) {
    struct Part {
        Sector sector;
        Eigen::VectorXd e;
        Eigen::VectorXcd c;
        Eigen::MatrixXd wr;
        Eigen::MatrixXcd wc;
        bool real = true;
    };
    std::vector<Part> parts;
    for (const Sector& sec : symmetry_sectors(H)) {
        if (sec.restrict(psi0).squaredNorm() == 0.0) continue;
        const SpectralData spec = eigensolve(H, sec.dim(), sec);
        const Eigen::VectorXcd c = spec.project(psi0);
        std::vector<Index> support;
        for (Index l = 0; l < c.size(); ++l)
            if (std::norm(c(l)) > 1e-24) support.push_back(l);
        const auto s = static_cast<Index>(support.size());
        Part p{sec, Eigen::VectorXd(s), Eigen::VectorXcd(s), {}, {}, spec.is_real};
        if (p.real) p.wr.resize(sec.dim(), s);
        else p.wc.resize(sec.dim(), s);
        for (Index j = 0; j < s; ++j) {
            const Index l = support[static_cast<std::size_t>(j)];
            p.e(j) = spec.energies(l);
            p.c(j) = c(l);
            if (p.real) p.wr.col(j) = spec.real_states.col(l);
            else p.wc.col(j) = spec.complex_states.col(l);
        }
        diag.support += support.size();
        parts.push_back(std::move(p));
    }
    Eigen::VectorXcd psi(H.dim());
    for (std::size_t k = 0; k < plan.sample_count(); ++k) {
        const double t = plan.sample_time(k);
        psi.setZero();
        for (const Part& p : parts) {
            Eigen::VectorXcd a(p.c.size());
            for (Index j = 0; j < a.size(); ++j) a(j) = p.c(j) * std::polar(1.0, -p.e(j) * t);
            Eigen::VectorXcd local(p.sector.dim());
            if (p.real) {
                local.real().noalias() = p.wr * a.real();
                local.imag().noalias() = p.wr * a.imag();
            } else {
                local.noalias() = p.wc * a;
            }
            psi += p.sector.embed(local);
        }
        rec.record(t, psi, diag);
    }
}

// The parity sector holding psi0 when H conserves parity and psi0 has a
// definite parity; nullopt otherwise.
inline std::optional<Sector> parity_sector_of(const OperatorMatrix& H, const Eigen::VectorXcd& psi0) {
    const FockSpace& space = H.space();
    std::vector<signed char> par(static_cast<std::size_t>(space.dim()));
    for (Index i = 0; i < space.dim(); ++i) par[static_cast<std::size_t>(i)] = static_cast<signed char>(basis_parity(space, i));
    int p = 0;
    for (Index i = 0; i < psi0.size(); ++i) {
        if (psi0(i) == cplx(0.0)) continue;
        const int q = par[static_cast<std::size_t>(i)];
        if (p == 0) p = q;
        else if (p != q) return std::nullopt;
    }
    if (p == 0) return std::nullopt;
    const SparseMatrix& m = H.matrix();
    for (Index i = 0; i < m.outerSize(); ++i)
        for (SparseMatrix::InnerIterator it(m, i); it; ++it)
            if (par[static_cast<std::size_t>(i)] != par[static_cast<std::size_t>(it.col())]) return std::nullopt;
    return parity_sector(space, p);
}

template <typename Matrix>
void krylov_loop(const Matrix& A, const Sector& sector, const Eigen::VectorXcd& psi0, const EvolutionPlan& plan,
                 SampleRecorder& rec, EvolutionDiagnostics& diag) {
    KrylovSubspace sub;
    Eigen::VectorXcd v = sector.restrict(psi0);
    const std::size_t n = plan.sample_count();
    rec.record(0.0, psi0, diag);
    std::size_t k = 1;
    double t = 0.0;
    double guess = plan.dt_sample;
    const double t_end = plan.sample_time(n - 1);
    while (k < n) {
        sub.build(A, v, plan.krylov_dim, true, &diag.krylov);
        const double tau = sub.accepted_step(t_end - t, guess, plan.step_tol, &diag.krylov);
        while (k < n && plan.sample_time(k) <= t + tau * (1.0 + 1e-12)) {
            rec.record(plan.sample_time(k), sector.embed(sub.evaluate(plan.sample_time(k) - t)), diag);
            ++k;
        }
        if (k < n) {
            v = sub.evaluate(tau);
            t += tau;
            guess = tau;
        }
    }
}

// Lanczos stepping, restricted to the parity sector of psi0 when possible.
inline void evolve_krylov(const OperatorMatrix& H, const Eigen::VectorXcd& psi0, const EvolutionPlan& plan,
                          SampleRecorder& rec, EvolutionDiagnostics& diag) {
    const Sector sector = parity_sector_of(H, psi0).value_or(Sector(H.space()));
    diag.sector = sector.name();
    if (H.is_real())
        krylov_loop(sector.restrict(H.real_matrix()), sector, psi0, plan, rec, diag);
    else
        krylov_loop(sector.restrict(H.matrix()), sector, psi0, plan, rec, diag);
}

}  // namespace detail

// Evolves psi0 under H and samples every observable on the plan's grid.
inline EvolutionResult evolve(const OperatorMatrix& H, const StateVector& psi0, const EvolutionPlan& plan,
                              const std::vector<Observable>& observables) {
    plan.validate();
    if (!H.hermitian()) throw ConfigError("evolve requires a Hermitian Hamiltonian");
    if (!(H.space() == psi0.space())) throw ConfigError("Hamiltonian and state live on different spaces");
    EvolutionResult out;
    out.diagnostics.engine = plan.resolve(H.dim());
    detail::SampleRecorder rec(H.space(), observables, plan);
    if (out.diagnostics.engine == Engine::full_diag)
        detail::evolve_full_diag(H, psi0.amplitudes(), plan, rec, out.diagnostics);
    else
        detail::evolve_krylov(H, psi0.amplitudes(), plan, rec, out.diagnostics);
    out.series = rec.take();
    return out;
}

// Standard observable set: N_L, N_R, sigma_z per site (and H when asked).
inline std::vector<Observable> standard_observables(const FockSpace& space, const OperatorMatrix* H = nullptr) {
    std::vector<Observable> obs;
    if (space.n_sites() == 1) {
        obs.push_back({"N", number(space, Site::left)});
        obs.push_back({"sz", pauli(space, Site::left, PauliAxis::z)});
    } else {
        obs.push_back({"N_L", number(space, Site::left)});
        obs.push_back({"N_R", number(space, Site::right)});
        obs.push_back({"sz_L", pauli(space, Site::left, PauliAxis::z)});
        obs.push_back({"sz_R", pauli(space, Site::right, PauliAxis::z)});
    }
    if (H) obs.push_back({"H", *H});
    return obs;
}

// --------------------------------------------------------------------------
// Truncation convergence

struct ConvergenceReport {
    int n_max = 0;
    int n_max_check = 0;
    double max_imbalance_deviation = 0.0;
    double max_top_level_mass = 0.0;
    bool passed = false;
};

using HamiltonianBuilder = std::function<OperatorMatrix(const FockSpace&)>;
using StateBuilder = std::function<StateVector(const FockSpace&)>;

// Reruns the evolution at n_max and n_max + delta_n and compares the
// imbalance (photon number on single-site spaces).
inline ConvergenceReport check_truncation(const HamiltonianBuilder& build_h, const StateBuilder& build_psi,
                                          const EvolutionPlan& plan, int n_sites, int n_max, int delta_n,
                                          double deviation_tol = 0.1, double top_mass_tol = 1e-6) {
    if (delta_n < 4) throw ConfigError("check_truncation needs delta_n >= 4");
    auto run = [&](int nm, double& top) {
        const FockSpace space(nm, n_sites);
        const OperatorMatrix H = build_h(space);
        std::vector<Observable> obs;
        if (n_sites == 1) {
            obs.push_back({"z", number(space, Site::left)});
        } else {
            obs.push_back({"z", number(space, Site::left) - number(space, Site::right)});
        }
        EvolutionResult r = evolve(H, build_psi(space), plan, obs);
        top = r.diagnostics.max_top_level_mass;
        return r.series[0].values;
    };
    ConvergenceReport rep;
    rep.n_max = n_max;
    rep.n_max_check = n_max + delta_n;
    double top_check = 0.0;
    const std::vector<double> z = run(n_max, rep.max_top_level_mass);
    const std::vector<double> z2 = run(n_max + delta_n, top_check);
    for (std::size_t i = 0; i < z.size(); ++i)
        rep.max_imbalance_deviation = std::max(rep.max_imbalance_deviation, std::abs(z[i] - z2[i]));
    rep.passed = rep.max_imbalance_deviation < deviation_tol && rep.max_top_level_mass < top_mass_tol;
    return rep;
}

// --------------------------------------------------------------------------
// CSV: "# t, label..." header, one row per sample, 17 significant digits.

inline void write_csv(std::ostream& os, const std::vector<TimeSeries>& series) {
    if (series.empty()) return;
    const std::size_t n = series.front().size();
    for (const auto& s : series)
        if (s.size() != n) throw ConfigError("write_csv: series lengths differ");
    os << "# t";
    for (const auto& s : series) os << ", " << s.label;
    os << '\n';
    char buf[64];
    for (std::size_t i = 0; i < n; ++i) {
        std::snprintf(buf, sizeof buf, "%.17g", series.front().times[i]);
        os << buf;
        for (const auto& s : series) {
            std::snprintf(buf, sizeof buf, "%.17g", s.values[i]);
            os << ", " << buf;
        }
        os << '\n';
    }
}

inline void write_csv(const std::string& path, const std::vector<TimeSeries>& series) {
    std::ofstream f(path);
    if (!f) throw ConfigError("cannot open " + path + " for writing");
    write_csv(f, series);
}

inline std::vector<TimeSeries> read_csv(std::istream& is) {
    std::string line;
    if (!std::getline(is, line) || line.rfind("#", 0) != 0) throw ConfigError("CSV: missing '# t, ...' header");
    std::vector<std::string> labels;
    {
        std::stringstream ss(line.substr(1));
        std::string item;
        while (std::getline(ss, item, ',')) {
            const auto b = item.find_first_not_of(' ');
            const auto e = item.find_last_not_of(' ');
            labels.push_back(b == std::string::npos ? "" : item.substr(b, e - b + 1));
        }
    }
    if (labels.empty() || labels.front() != "t") throw ConfigError("CSV: first column must be t");
    std::vector<TimeSeries> out(labels.size() - 1);
    for (std::size_t i = 1; i < labels.size(); ++i) out[i - 1].label = labels[i];
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string item;
        std::vector<double> row;
        while (std::getline(ss, item, ',')) row.push_back(std::strtod(item.c_str(), nullptr));
        if (row.size() != labels.size()) throw ConfigError("CSV: ragged row");
        for (std::size_t i = 1; i < row.size(); ++i) {
            out[i - 1].times.push_back(row[0]);
            out[i - 1].values.push_back(row[i]);
        }
    }
    return out;
}

inline std::vector<TimeSeries> read_csv(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot open " + path);
    return read_csv(f);
}

}  // namespace rabidimer
