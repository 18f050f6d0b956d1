// trajectories.hpp - cavity damping by quantum jumps, plus a dense Lindblad oracle
//
// Each trajectory evolves under H_eff = H - (i kappa / 2) sum_j C_j^dag C_j
// and jumps when |psi(t)|^2 drops to a uniform random threshold; the jump
// time is located by bisection on the norm. Two segment propagators:
//   eigen  - H_eff diagonalized once per symmetry sector, states carried as
//            eigen-coefficients restricted to their support
//   krylov - Arnoldi steps on the sparse H_eff (bare jumps only)
// Bare jumps use C_j = a_j. Dressed jumps keep only the parts of a_j that
// lower the energy between eigenstates of H.

#pragma once

#include <Eigen/Dense>
#include <Eigen/LU>
#include <boost/numeric/odeint.hpp>
#include <lapacke.h>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <limits>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "rabidimer/errors.hpp"
#include "rabidimer/fockspace.hpp"
#include "rabidimer/krylov.hpp"
#include "rabidimer/model.hpp"
#include "rabidimer/parallel.hpp"
#include "rabidimer/propagate.hpp"
#include "rabidimer/spectral.hpp"

namespace rabidimer {

enum class JumpBasis { automatic, bare, dressed };
enum class TrajectoryEngine { automatic, eigen, krylov };

inline std::string to_string(JumpBasis b) {
    switch (b) {
    case JumpBasis::automatic: return "auto";
    case JumpBasis::bare: return "bare";
    case JumpBasis::dressed: return "dressed";
    }
    return "?";
}
inline JumpBasis jump_basis_from_string(const std::string& s) {
    if (s == "auto") return JumpBasis::automatic;
    if (s == "bare") return JumpBasis::bare;
    if (s == "dressed") return JumpBasis::dressed;
    throw ConfigError("unknown jump_basis '" + s + "' (expected auto, bare or dressed)");
}
inline std::string to_string(TrajectoryEngine e) {
    switch (e) {
    case TrajectoryEngine::automatic: return "auto";
    case TrajectoryEngine::eigen: return "eigen";
    case TrajectoryEngine::krylov: return "krylov";
    }
    return "?";
}
inline TrajectoryEngine trajectory_engine_from_string(const std::string& s) {
    if (s == "auto") return TrajectoryEngine::automatic;
    if (s == "eigen") return TrajectoryEngine::eigen;
    if (s == "krylov") return TrajectoryEngine::krylov;
    throw ConfigError("unknown trajectory engine '" + s + "' (expected auto, eigen or krylov)");
}

struct DampingConfig {
    double tau_gamma = 1.0e4;  // cavity damping time; +inf switches damping off
    int n_traj = 300;
    std::uint64_t master_seed = 1;
    JumpBasis jump_basis = JumpBasis::automatic;
    TrajectoryEngine engine = TrajectoryEngine::automatic;
    double support_tol = 1e-20;      // drop eigen-coefficients with |c|^2 below this
    double bisection_tol = 1e-10;    // relative jump-time tolerance
    Index eigen_max_sector_dim = 3000;
    bool keep_trajectories = false;

    double kappa() const { return std::isinf(tau_gamma) ? 0.0 : 1.0 / tau_gamma; }

    void validate() const {
        if (!(tau_gamma > 0.0)) throw ConfigError("damping.tau_gamma must be > 0");
        if (n_traj < 1) throw ConfigError("damping.n_traj must be >= 1");
        if (!(support_tol >= 0.0) || !(bisection_tol > 0.0)) throw ConfigError("damping tolerances must be positive");
    }

    // dressed when g/omega0 >= 0.5, bare otherwise
    JumpBasis resolve(double g_over_omega) const {
        if (jump_basis != JumpBasis::automatic) return jump_basis;
        return g_over_omega >= 0.5 ? JumpBasis::dressed : JumpBasis::bare;
    }
};

// Per-trajectory generator, a pure function of (master_seed, index).
inline std::mt19937_64 trajectory_rng(std::uint64_t master_seed, std::uint64_t index) {
    std::seed_seq seq{static_cast<std::uint32_t>(master_seed), static_cast<std::uint32_t>(master_seed >> 32),
                      static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32), 0x51ed2701u};
    return std::mt19937_64(seq);
}

// Uniform in the open interval (0, 1), identical on every platform.
inline double uniform01(std::mt19937_64& rng) { return (static_cast<double>(rng() >> 11) + 0.5) * 0x1.0p-53; }

// --------------------------------------------------------------------------
// Damped system: H_eff and jump operators, shared read-only by trajectories

class DampedSystem {
public:
    DampedSystem(const OperatorMatrix& H, double kappa, JumpBasis basis,
                 TrajectoryEngine engine = TrajectoryEngine::automatic, Index eigen_max_sector_dim = 3000)
        : H_(H), kappa_(kappa), basis_(basis) {
        if (!H.hermitian()) throw ConfigError("damped evolution needs a Hermitian H");
        if (!(kappa >= 0.0)) throw ConfigError("damping rate must be >= 0");
        if (basis == JumpBasis::automatic) throw ConfigError("resolve the jump basis before building the system");
        for (int j = 0; j < H.space().n_sites(); ++j) jumps_.push_back(annihilator(H.space(), static_cast<Site>(j)));
        sectors_ = symmetry_sectors(H);
        Index biggest = 0;
        for (const auto& s : sectors_) biggest = std::max(biggest, s.dim());
        if (engine == TrajectoryEngine::automatic)
            engine = (biggest <= eigen_max_sector_dim || basis == JumpBasis::dressed) ? TrajectoryEngine::eigen
                                                                                      : TrajectoryEngine::krylov;
        if (engine == TrajectoryEngine::krylov && basis == JumpBasis::dressed)
            throw ConfigError("dressed jumps need the eigen trajectory engine");
        engine_ = engine;
        if (engine_ == TrajectoryEngine::eigen) build_eigen();
        else build_krylov();
    }

    const FockSpace& space() const { return H_.space(); }
    const OperatorMatrix& hamiltonian() const { return H_; }
    double kappa() const { return kappa_; }
    JumpBasis basis() const { return basis_; }
    TrajectoryEngine engine() const { return engine_; }
    std::size_t channels() const { return kappa_ > 0.0 ? jumps_.size() : 0; }
    const std::vector<Sector>& sectors() const { return sectors_; }

    // C_j psi
    Eigen::VectorXcd apply_jump(std::size_t j, const Eigen::VectorXcd& psi) const {
        if (basis_ == JumpBasis::bare) return jumps_[j].matrix() * psi;
        std::vector<Eigen::VectorXcd> y(blocks_.size());
        for (std::size_t s = 0; s < blocks_.size(); ++s) y[s] = to_eigen(s, psi);
        Eigen::VectorXcd out = Eigen::VectorXcd::Zero(psi.size());
        for (std::size_t s = 0; s < blocks_.size(); ++s) {
            Eigen::VectorXcd z = Eigen::VectorXcd::Zero(blocks_[s].dim);
            bool any = false;
            for (const auto& lb : lowering_[j])
                if (lb.to == s) {
                    z.real() += lb.m * y[lb.from].real();
                    z.imag() += lb.m * y[lb.from].imag();
                    any = true;
                }
            if (any) out += from_eigen(s, z);
        }
        return out;
    }

    // --- eigen engine internals -------------------------------------------
    struct Block {
        Index dim = 0;
        Eigen::MatrixXd w;          // H eigenvectors in sector coordinates (empty = identity)
        Eigen::VectorXcd lambda;    // eigenvalues of H_eff
        Eigen::MatrixXcd right;     // H_eff eigenvectors (columns)
        Eigen::MatrixXcd left;      // inverse of `right`
    };
    const std::vector<Block>& blocks() const { return blocks_; }

    // sector-coordinate vector -> coordinates of the basis H_eff was built in
    Eigen::VectorXcd to_eigen(std::size_t s, const Eigen::VectorXcd& psi) const {
        Eigen::VectorXcd v = sectors_[s].restrict(psi);
        if (blocks_[s].w.size() == 0) return v;
        Eigen::VectorXcd out(v.size());
        out.real() = blocks_[s].w.transpose() * v.real();
        out.imag() = blocks_[s].w.transpose() * v.imag();
        return out;
    }
    Eigen::VectorXcd from_eigen(std::size_t s, const Eigen::VectorXcd& y) const {
        if (blocks_[s].w.size() == 0) return sectors_[s].embed(y);
        Eigen::VectorXcd v(y.size());
        v.real() = blocks_[s].w * y.real();
        v.imag() = blocks_[s].w * y.imag();
        return sectors_[s].embed(v);
    }

    // --- krylov engine internals ------------------------------------------
    const SparseMatrix& effective_hamiltonian() const { return heff_; }

private:
    struct Lowering {
        std::size_t from, to;
        Eigen::MatrixXd m;  // <E_to,a| C_j |E_from,b>
    };

    void build_krylov() {
        SparseMatrix k(space().dim(), space().dim());
        for (const auto& a : jumps_) k += SparseMatrix(a.matrix().adjoint() * a.matrix());
        heff_ = H_.matrix() - cplx(0.0, 0.5 * kappa_) * k;
        heff_.makeCompressed();
    }

    void build_eigen() {
        const bool dressed_coords = basis_ == JumpBasis::dressed || kappa_ == 0.0;
        blocks_.resize(sectors_.size());
        std::vector<Eigen::VectorXd> energies(sectors_.size());
        if (dressed_coords) {
            for (std::size_t s = 0; s < sectors_.size(); ++s) {
                SpectralData sd = eigensolve(H_, sectors_[s].dim(), sectors_[s]);
                blocks_[s].w = std::move(sd.real_states);
                if (!sd.is_real) throw ConfigError("eigen trajectory engine needs a real Hamiltonian");
                energies[s] = sd.energies;
            }
        }
        lowering_.assign(jumps_.size(), {});
        if (basis_ == JumpBasis::dressed && kappa_ > 0.0) {
            for (std::size_t j = 0; j < jumps_.size(); ++j)
                for (std::size_t from = 0; from < sectors_.size(); ++from)
                    for (std::size_t to = 0; to < sectors_.size(); ++to) {
                        const RealSparseMatrix a = jumps_[j].real_matrix();
                        const Eigen::SparseMatrix<double> cross =
                            sectors_[to].isometry_or_identity().transpose() * a * sectors_[from].isometry_or_identity();
                        if (cross.nonZeros() == 0) continue;
                        Eigen::MatrixXd m = blocks_[to].w.transpose() * (cross * blocks_[from].w);
                        for (Index c = 0; c < m.cols(); ++c)
                            for (Index r = 0; r < m.rows(); ++r)
                                if (!(energies[from](c) - energies[to](r) > 1e-10)) m(r, c) = 0.0;
                        lowering_[j].push_back({from, to, std::move(m)});
                    }
        }
        for (std::size_t s = 0; s < sectors_.size(); ++s) {
            Block& b = blocks_[s];
            b.dim = sectors_[s].dim();
            if (kappa_ == 0.0) {
                b.lambda = energies[s].cast<cplx>();
                b.right = Eigen::MatrixXcd::Identity(b.dim, b.dim);
                b.left = b.right;
                continue;
            }
            Eigen::MatrixXcd m;
            if (basis_ == JumpBasis::dressed) {
                Eigen::MatrixXd k = Eigen::MatrixXd::Zero(b.dim, b.dim);
                for (const auto& lows : lowering_)
                    for (const auto& lb : lows)
                        if (lb.from == s) k.noalias() += lb.m.transpose() * lb.m;
                m = cplx(0.0, -0.5 * kappa_) * k.cast<cplx>();
                m.diagonal() += energies[s].cast<cplx>();
            } else {
                SparseMatrix n(space().dim(), space().dim());
                for (const auto& a : jumps_) n += SparseMatrix(a.matrix().adjoint() * a.matrix());
                const SparseMatrix heff = H_.matrix() - cplx(0.0, 0.5 * kappa_) * n;
                m = Eigen::MatrixXcd(sectors_[s].restrict(heff));
            }
            diagonalize(m, b);
        }
    }

    static void diagonalize(Eigen::MatrixXcd m, Block& b) {
        const Index n = m.rows();
        const Eigen::MatrixXcd orig = m;
        b.lambda.resize(n);
        b.right.resize(n, n);
        const lapack_int ln = static_cast<lapack_int>(n);
        const lapack_int info = LAPACKE_zgeev(LAPACK_COL_MAJOR, 'N', 'V', ln, reinterpret_cast<lapack_complex_double*>(m.data()), ln,
                                              reinterpret_cast<lapack_complex_double*>(b.lambda.data()), nullptr, 1,
                                              reinterpret_cast<lapack_complex_double*>(b.right.data()), ln);
        if (info != 0) throw NumericalError("zgeev failed, info=" + std::to_string(info));
        b.left = b.right.partialPivLu().inverse();
        const double scale = 1.0 + orig.cwiseAbs().maxCoeff();
        const double res = (orig * b.right - b.right * b.lambda.asDiagonal()).cwiseAbs().maxCoeff() / scale;
        const double inv = (b.left * b.right - Eigen::MatrixXcd::Identity(n, n)).cwiseAbs().maxCoeff();
        if (!(res < 1e-10) || !(inv < 1e-8))
            throw NumericalError("H_eff eigendecomposition is ill-conditioned (residual " + std::to_string(res) +
                                 ", inverse error " + std::to_string(inv) + ")");
    }

    OperatorMatrix H_;
    double kappa_;
    JumpBasis basis_;
    TrajectoryEngine engine_ = TrajectoryEngine::eigen;
    std::vector<OperatorMatrix> jumps_;
    std::vector<Sector> sectors_;
    std::vector<Block> blocks_;
    std::vector<std::vector<Lowering>> lowering_;  // per channel
    SparseMatrix heff_;
};

namespace detail {

// exp(-i H_eff t) psi from eigen-coefficients on their support.
class EigenSegment {
public:
    EigenSegment(const DampedSystem& sys, double support_tol) : sys_(&sys), tol_(support_tol) {}

    void begin(const Eigen::VectorXcd& psi) {
        parts_.clear();
        for (std::size_t s = 0; s < sys_->blocks().size(); ++s) {
            const auto& b = sys_->blocks()[s];
            const Eigen::VectorXcd c = b.left * sys_->to_eigen(s, psi);
            std::vector<Index> keep;
            for (Index k = 0; k < c.size(); ++k)
                if (std::norm(c(k)) * b.right.col(k).squaredNorm() > tol_) keep.push_back(k);
            if (keep.empty()) continue;
            Part p;
            p.sector = s;
            p.c.resize(static_cast<Index>(keep.size()));
            p.lambda.resize(p.c.size());
            p.r.resize(b.dim, p.c.size());
            for (std::size_t i = 0; i < keep.size(); ++i) {
                const auto ii = static_cast<Index>(i);
                p.c(ii) = c(keep[i]);
                p.lambda(ii) = b.lambda(keep[i]);
                p.r.col(ii) = b.right.col(keep[i]);
            }
            parts_.push_back(std::move(p));
        }
        dim_ = psi.size();
    }

    double span() const { return std::numeric_limits<double>::infinity(); }

    Eigen::VectorXcd at(double t) const {
        Eigen::VectorXcd out = Eigen::VectorXcd::Zero(dim_);
        for (const auto& p : parts_) {
            Eigen::VectorXcd a(p.c.size());
            for (Index k = 0; k < a.size(); ++k) a(k) = p.c(k) * std::exp(cplx(0.0, -t) * p.lambda(k));
            out += sys_->from_eigen(p.sector, p.r * a);
        }
        return out;
    }

    std::size_t support() const {
        std::size_t n = 0;
        for (const auto& p : parts_) n += static_cast<std::size_t>(p.c.size());
        return n;
    }

private:
    struct Part {
        std::size_t sector = 0;
        Eigen::VectorXcd c, lambda;
        Eigen::MatrixXcd r;
    };
    const DampedSystem* sys_;
    double tol_;
    std::vector<Part> parts_;
    Index dim_ = 0;
};

// Arnoldi segments on the sparse H_eff; one subspace per segment.
class KrylovSegment {
public:
    KrylovSegment(const DampedSystem& sys, const EvolutionPlan& plan) : sys_(&sys), plan_(plan) {}

    void begin(const Eigen::VectorXcd& psi) {
        sub_.build(sys_->effective_hamiltonian(), psi, plan_.krylov_dim, sys_->kappa() == 0.0, &stats_);
        span_ = sub_.accepted_step(std::numeric_limits<double>::max(), guess_, plan_.step_tol, &stats_);
        guess_ = span_;
    }
    double span() const { return span_; }
    Eigen::VectorXcd at(double t) const { return sub_.evaluate(t); }
    std::size_t support() const { return 0; }

private:
    const DampedSystem* sys_;
    EvolutionPlan plan_;
    KrylovSubspace sub_;
    KrylovStats stats_;
    double guess_ = 1.0;
    double span_ = 0.0;
};

}  // namespace detail

struct TrajectoryRecord {
    std::vector<TimeSeries> series;
    std::vector<double> jump_times;
    std::vector<int> jump_channels;
    double max_top_level_mass = 0.0;
};

namespace detail {

template <typename Segment>
TrajectoryRecord run_with(Segment seg, const DampedSystem& sys, const StateVector& psi0, const EvolutionPlan& plan,
                          const std::vector<Observable>& obs, std::uint64_t seed, std::uint64_t index,
                          double bisection_tol) {
    auto rng = trajectory_rng(seed, index);
    TrajectoryRecord out;
    EvolutionDiagnostics diag;
    SampleRecorder rec(sys.space(), obs, plan);
    const std::size_t n = plan.sample_count();
    const double t_end = plan.sample_time(n - 1);
    const bool damped = sys.channels() > 0;

    Eigen::VectorXcd psi = psi0.amplitudes() / psi0.norm();
    rec.record(0.0, psi, diag);
    std::size_t k = 1;
    double t0 = 0.0;
    double r = damped ? uniform01(rng) : 0.0;
    seg.begin(psi);
    auto record_until = [&](double t_stop, bool inclusive) {
        while (k < n) {
            const double tk = plan.sample_time(k);
            if (inclusive ? tk > t_stop * (1.0 + 1e-14) : tk >= t_stop) break;
            const Eigen::VectorXcd v = seg.at(tk - t0);
            const double nv = v.norm();
            if (!(nv > 0.0)) throw NumericalError("trajectory state vanished between jumps");
            rec.record(tk, v / nv, diag);
            ++k;
        }
    };
    while (k < n) {
        const double span = std::min(seg.span(), t_end - t0);
        const Eigen::VectorXcd end = seg.at(span);
        if (!damped || end.squaredNorm() > r) {
            record_until(t0 + span, true);
            if (k >= n) break;
            psi = end;
            t0 += span;
            seg.begin(psi);
            continue;
        }
        // |psi(lo)|^2 > r >= |psi(hi)|^2
        double lo = 0.0, hi = span;
        while (hi - lo > bisection_tol * std::max(1.0, t0 + hi)) {
            const double mid = 0.5 * (lo + hi);
            if (seg.at(mid).squaredNorm() > r) lo = mid;
            else hi = mid;
        }
        record_until(t0 + hi, false);
        const Eigen::VectorXcd before = seg.at(hi);
        std::vector<Eigen::VectorXcd> cand;
        std::vector<double> w;
        double wsum = 0.0;
        for (std::size_t j = 0; j < sys.channels(); ++j) {
            cand.push_back(sys.apply_jump(j, before));
            w.push_back(cand.back().squaredNorm());
            wsum += w.back();
        }
        if (!(wsum > 0.0)) throw NumericalError("quantum jump with vanishing rate");
        const double pick = uniform01(rng) * wsum;
        std::size_t ch = 0;
        for (double acc = w[0]; ch + 1 < w.size() && acc < pick; acc += w[++ch]) {}
        psi = cand[ch] / std::sqrt(w[ch]);
        t0 += hi;
        out.jump_times.push_back(t0);
        out.jump_channels.push_back(static_cast<int>(ch));
        r = uniform01(rng);
        seg.begin(psi);
    }
    out.series = rec.take();
    out.max_top_level_mass = diag.max_top_level_mass;
    return out;
}

}  // namespace detail

// One quantum-jump trajectory; reproducible from (master_seed, traj_index).
inline TrajectoryRecord run_trajectory(const DampedSystem& sys, const StateVector& psi0, const EvolutionPlan& plan,
                                       const DampingConfig& cfg, const std::vector<Observable>& obs,
                                       std::uint64_t traj_index) {
    plan.validate();
    cfg.validate();
    if (!(psi0.space() == sys.space())) throw ConfigError("state and damped system live on different spaces");
    if (sys.engine() == TrajectoryEngine::eigen)
        return detail::run_with(detail::EigenSegment(sys, cfg.support_tol), sys, psi0, plan, obs, cfg.master_seed,
                                traj_index, cfg.bisection_tol);
    return detail::run_with(detail::KrylovSegment(sys, plan), sys, psi0, plan, obs, cfg.master_seed, traj_index,
                            cfg.bisection_tol);
}

inline TrajectoryRecord run_trajectory(const OperatorMatrix& H, const StateVector& psi0, const EvolutionPlan& plan,
                                       const DampingConfig& cfg, const std::vector<Observable>& obs,
                                       std::uint64_t traj_index, double g_over_omega = 0.0) {
    const DampedSystem sys(H, cfg.kappa(), cfg.resolve(g_over_omega), cfg.engine, cfg.eigen_max_sector_dim);
    return run_trajectory(sys, psi0, plan, cfg, obs, traj_index);
}

struct TrajectoryEnsemble {
    std::vector<TimeSeries> mean;
    std::vector<TimeSeries> std_error;  // sample standard deviation / sqrt(n_traj)
    int n_traj = 0;
    std::uint64_t master_seed = 0;
    JumpBasis jump_basis = JumpBasis::bare;
    TrajectoryEngine engine = TrajectoryEngine::eigen;
    std::size_t total_jumps = 0;
    double max_top_level_mass = 0.0;
    std::vector<TrajectoryRecord> trajectories;  // filled when keep_trajectories
};

// Runs cfg.n_traj trajectories on `workers` threads and reduces them in
// index order, so the result does not depend on scheduling.
inline TrajectoryEnsemble run_trajectories(const DampedSystem& sys, const StateVector& psi0, const EvolutionPlan& plan,
                                           const DampingConfig& cfg, const std::vector<Observable>& obs, int workers) {
    cfg.validate();
    std::vector<TrajectoryRecord> recs(static_cast<std::size_t>(cfg.n_traj));
    parallel_for(recs.size(), workers, [&](std::size_t i) { recs[i] = run_trajectory(sys, psi0, plan, cfg, obs, i); });

    TrajectoryEnsemble out;
    out.n_traj = cfg.n_traj;
    out.master_seed = cfg.master_seed;
    out.jump_basis = sys.basis();
    out.engine = sys.engine();
    const double nt = static_cast<double>(cfg.n_traj);
    for (std::size_t o = 0; o < obs.size(); ++o) {
        const auto& first = recs.front().series[o];
        TimeSeries mean{first.times, std::vector<double>(first.size(), 0.0), first.label};
        TimeSeries err{first.times, std::vector<double>(first.size(), 0.0), first.label};
        for (const auto& r : recs)
            for (std::size_t i = 0; i < mean.size(); ++i) mean.values[i] += r.series[o].values[i];
        for (double& v : mean.values) v /= nt;
        if (cfg.n_traj > 1) {
            for (const auto& r : recs)
                for (std::size_t i = 0; i < err.size(); ++i) {
                    const double d = r.series[o].values[i] - mean.values[i];
                    err.values[i] += d * d;
                }
            for (double& v : err.values) v = std::sqrt(v / (nt - 1.0) / nt);
        }
        out.mean.push_back(std::move(mean));
        out.std_error.push_back(std::move(err));
    }
    for (const auto& r : recs) {
        out.total_jumps += r.jump_times.size();
        out.max_top_level_mass = std::max(out.max_top_level_mass, r.max_top_level_mass);
    }
    if (cfg.keep_trajectories) out.trajectories = std::move(recs);
    return out;
}

inline nlohmann::json to_json(const TrajectoryEnsemble& e, const DampingConfig& cfg) {
    nlohmann::json errs = nlohmann::json::object();
    for (const auto& s : e.std_error) {
        double worst = 0.0;
        for (double v : s.values) worst = std::max(worst, v);
        errs[s.label] = worst;
    }
    return {{"n_traj", e.n_traj},
            {"master_seed", e.master_seed},
            {"jump_basis", to_string(e.jump_basis)},
            {"engine", to_string(e.engine)},
            {"tau_gamma", std::isinf(cfg.tau_gamma) ? nlohmann::json(nullptr) : nlohmann::json(cfg.tau_gamma)},
            {"total_jumps", e.total_jumps},
            {"max_std_error", errs},
            {"max_top_level_mass", e.max_top_level_mass}};
}

// --------------------------------------------------------------------------
// Dense Lindblad reference (small systems only)

// Jump operators as dense matrices, built straight from a full eigensolve.
inline std::vector<Eigen::MatrixXcd> dense_jump_operators(const OperatorMatrix& H, JumpBasis basis) {
    std::vector<Eigen::MatrixXcd> out;
    const FockSpace& space = H.space();
    std::optional<SpectralData> spec;
    if (basis == JumpBasis::dressed) spec = eigensolve(H, H.dim());
    for (int j = 0; j < space.n_sites(); ++j) {
        Eigen::MatrixXcd a = Eigen::MatrixXcd(annihilator(space, static_cast<Site>(j)).matrix());
        if (basis == JumpBasis::dressed) {
            Eigen::MatrixXcd v(H.dim(), H.dim());
            for (Index k = 0; k < H.dim(); ++k) v.col(k) = spec->state(k);
            Eigen::MatrixXcd e = v.adjoint() * a * v;
            for (Index c = 0; c < e.cols(); ++c)
                for (Index r = 0; r < e.rows(); ++r)
                    if (!(spec->energies(c) - spec->energies(r) > 1e-10)) e(r, c) = 0.0;
            a = v * e * v.adjoint();
        }
        out.push_back(std::move(a));
    }
    return out;
}

// Integrates rho' = -i[H, rho] + kappa sum_j (C rho C^dag - {C^dag C, rho}/2)
// with adaptive Dormand-Prince steps (abs/rel tolerance 1e-8).
inline std::vector<TimeSeries> lindblad_reference(const OperatorMatrix& H, const StateVector& psi0,
                                                  const EvolutionPlan& plan, double kappa, JumpBasis basis,
                                                  const std::vector<Observable>& obs, Index max_dim = 300) {
    namespace ode = boost::numeric::odeint;
    plan.validate();
    if (H.dim() > max_dim)
        throw ConfigError("lindblad_reference supports dim <= " + std::to_string(max_dim) + ", got " +
                          std::to_string(H.dim()));
    if (basis == JumpBasis::automatic) throw ConfigError("lindblad_reference needs an explicit jump basis");
    const Index n = H.dim();
    const std::vector<Eigen::MatrixXcd> cs = kappa > 0.0 ? dense_jump_operators(H, basis) : std::vector<Eigen::MatrixXcd>{};
    Eigen::MatrixXcd k = Eigen::MatrixXcd::Zero(n, n);
    for (const auto& c : cs) k += c.adjoint() * c;
    const Eigen::MatrixXcd heff = Eigen::MatrixXcd(H.matrix()) - cplx(0.0, 0.5 * kappa) * k;
    const Eigen::MatrixXcd heff_dag = heff.adjoint();

    using State = std::vector<double>;
    State x(static_cast<std::size_t>(2 * n * n));
    {
        const Eigen::VectorXcd p = psi0.amplitudes() / psi0.norm();
        Eigen::Map<Eigen::MatrixXcd>(reinterpret_cast<cplx*>(x.data()), n, n) = p * p.adjoint();
    }
    auto rhs = [&](const State& in, State& out, double) {
        Eigen::Map<const Eigen::MatrixXcd> rho(reinterpret_cast<const cplx*>(in.data()), n, n);
        Eigen::Map<Eigen::MatrixXcd> d(reinterpret_cast<cplx*>(out.data()), n, n);
        d.noalias() = cplx(0.0, -1.0) * (heff * rho);
        d.noalias() += cplx(0.0, 1.0) * (rho * heff_dag);
        for (const auto& c : cs) d.noalias() += kappa * (c * rho * c.adjoint());
    };

    std::vector<TimeSeries> series;
    std::vector<Eigen::MatrixXcd> dense_obs;
    for (const auto& o : obs) {
        series.push_back({{}, {}, o.label});
        dense_obs.push_back(Eigen::MatrixXcd(o.op.matrix()));
    }
    std::vector<double> times;
    for (std::size_t i = 0; i < plan.sample_count(); ++i) times.push_back(plan.sample_time(i));
    auto observer = [&](const State& s, double t) {
        Eigen::Map<const Eigen::MatrixXcd> rho(reinterpret_cast<const cplx*>(s.data()), n, n);
        const double tr = rho.trace().real();
        for (std::size_t o = 0; o < obs.size(); ++o) {
            series[o].times.push_back(t);
            series[o].values.push_back((dense_obs[o].cwiseProduct(rho.transpose())).sum().real() / tr);
        }
    };
    auto stepper = ode::make_dense_output(1e-8, 1e-8, ode::runge_kutta_dopri5<State>());
    ode::integrate_times(stepper, rhs, x, times.begin(), times.end(), std::min(0.01, plan.dt_sample), observer);
    return series;
}

}  // namespace rabidimer
