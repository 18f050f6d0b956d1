// spectral.hpp - eigenstructure diagnostics
//
// Dense LAPACK eigensolves of (sector-restricted) Hamiltonians, level-spacing
// variance, photon-number variance, initial-state overlaps, the diagonal
// ensemble, and the closed-form overlap of oppositely displaced Fock states.

#pragma once

#include <Eigen/Dense>
#include <lapacke.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "rabidimer/errors.hpp"
#include "rabidimer/fockspace.hpp"

namespace rabidimer {

// Eigenpairs of a Hermitian operator, optionally restricted to a symmetry
// sector. Eigenvectors are stored in sector coordinates; real Hamiltonians
// keep real eigenvectors.
struct SpectralData {
    Sector sector;
    Eigen::VectorXd energies;   // ascending
    Eigen::MatrixXd real_states;
    Eigen::MatrixXcd complex_states;
    bool is_real = true;
    Index k_levels = 0;
    double max_residual = 0.0;

    const FockSpace& space() const { return sector.space(); }

    // Eigenvector k in full-space coordinates.
    Eigen::VectorXcd state(Index k) const {
        Eigen::VectorXcd s = is_real ? Eigen::VectorXcd(real_states.col(k).cast<cplx>()) : Eigen::VectorXcd(complex_states.col(k));
        return sector.embed(s);
    }

    // c_l = <E_l|psi> for every retained eigenvector.
    Eigen::VectorXcd project(const Eigen::VectorXcd& full) const {
        const Eigen::VectorXcd r = sector.restrict(full);
        if (is_real) {
            Eigen::VectorXcd c(k_levels);
            c.real() = real_states.transpose() * r.real();
            c.imag() = real_states.transpose() * r.imag();
            return c;
        }
        return complex_states.adjoint() * r;
    }
};

namespace detail {

template <typename Dense, typename Sparse>
Dense to_dense(const Sparse& m) {
    Dense d = Dense::Zero(m.rows(), m.cols());
    for (Index k = 0; k < m.outerSize(); ++k)
        for (typename Sparse::InnerIterator it(m, k); it; ++it) d(it.row(), it.col()) = it.value();
    return d;
}

// max_j |M v_j - e_j v_j|, in column chunks to bound memory
template <typename Sparse, typename Dense>
double max_residual(const Sparse& m, const Dense& v, const Eigen::VectorXd& e) {
    double worst = 0.0;
    const Index chunk = 256;
    for (Index j0 = 0; j0 < v.cols(); j0 += chunk) {
        const Index w = std::min(chunk, v.cols() - j0);
        Dense r = m * v.middleCols(j0, w);
        for (Index j = 0; j < w; ++j) {
            r.col(j) -= e(j0 + j) * v.col(j0 + j);
            worst = std::max(worst, r.col(j).norm());
        }
    }
    return worst;
}

}  // namespace detail

// Lowest k eigenpairs of H restricted to `sector` (all of them when k is
// the sector dimension). The sector must be invariant under H.
inline SpectralData eigensolve(const OperatorMatrix& H, Index k, const Sector& sector, double residual_tol = 1e-8) {
    if (!H.hermitian()) throw ConfigError("eigensolve requires a Hermitian operator");
    if (!(sector.space() == H.space())) throw ConfigError("eigensolve: sector lives on another space");
    SpectralData out;
    out.sector = sector;
    const Index n = sector.dim();
    if (k <= 0 || k > n) throw ConfigError("eigensolve: k must lie in [1, dim]");
    out.k_levels = k;
    out.is_real = H.is_real();
    const lapack_int ln = static_cast<lapack_int>(n);
    const char range = k == n ? 'A' : 'I';
    std::vector<double> w(static_cast<std::size_t>(n));
    std::vector<lapack_int> isuppz(static_cast<std::size_t>(2 * n));
    lapack_int found = 0;
    lapack_int info = 0;

    if (out.is_real) {
        const RealSparseMatrix hs = sector.restrict(H.real_matrix());
        {
            Eigen::MatrixXd a = detail::to_dense<Eigen::MatrixXd>(hs);
            out.real_states.resize(n, k);
            info = LAPACKE_dsyevr(LAPACK_COL_MAJOR, 'V', range, 'U', ln, a.data(), ln, 0.0, 0.0, 1,
                                  static_cast<lapack_int>(k), 0.0, &found, w.data(), out.real_states.data(), ln,
                                  isuppz.data());
        }
        if (info == 0 && found == k) {
            out.energies = Eigen::Map<Eigen::VectorXd>(w.data(), k);
            out.max_residual = detail::max_residual(hs, out.real_states, out.energies);
        }
    } else {
        const SparseMatrix hs = sector.restrict(H.matrix());
        {
            Eigen::MatrixXcd a = detail::to_dense<Eigen::MatrixXcd>(hs);
            out.complex_states.resize(n, k);
            info = LAPACKE_zheevr(LAPACK_COL_MAJOR, 'V', range, 'U', ln, reinterpret_cast<lapack_complex_double*>(a.data()),
                                  ln, 0.0, 0.0, 1, static_cast<lapack_int>(k), 0.0, &found, w.data(),
                                  reinterpret_cast<lapack_complex_double*>(out.complex_states.data()), ln,
                                  isuppz.data());
        }
        if (info == 0 && found == k) {
            out.energies = Eigen::Map<Eigen::VectorXd>(w.data(), k);
            out.max_residual = detail::max_residual(hs, out.complex_states, out.energies);
        }
    }
    if (info != 0) throw NumericalError("LAPACK eigensolver failed, info=" + std::to_string(info));
    if (found != k)
        throw NumericalError("LAPACK eigensolver returned " + std::to_string(found) + " of " + std::to_string(k) +
                             " eigenpairs");
    if (!(out.max_residual <= residual_tol))
        throw NumericalError("eigensolve residual " + std::to_string(out.max_residual) + " exceeds tolerance");
    return out;
}

inline SpectralData eigensolve(const OperatorMatrix& H, Index k, double residual_tol = 1e-8) {
    return eigensolve(H, k, Sector(H.space()), residual_tol);
}

// Variance of the lowest K consecutive level spacings.
inline double level_spacing_variance(const Eigen::VectorXd& energies, Index K) {
    if (K < 1 || K + 1 > energies.size()) throw ConfigError("level_spacing_variance needs K+1 levels");
    double s1 = 0.0, s2 = 0.0;
    for (Index k = 0; k < K; ++k) {
        const double gap = energies(k + 1) - energies(k);
        s1 += gap;
        s2 += gap * gap;
    }
    s1 /= static_cast<double>(K);
    s2 /= static_cast<double>(K);
    return s2 - s1 * s1;
}

// <N^2> - <N>^2 for the photon number of a single-site state.
inline double photon_number_variance(const FockSpace& space, const Eigen::VectorXcd& psi) {
    if (space.n_sites() != 1) throw ConfigError("photon_number_variance needs a single-site state");
    double m1 = 0.0, m2 = 0.0, norm = 0.0;
    for (Index i = 0; i < psi.size(); ++i) {
        const double p = std::norm(psi(i));
        const double n = static_cast<double>(i / 2);
        m1 += p * n;
        m2 += p * n * n;
        norm += p;
    }
    m1 /= norm;
    m2 /= norm;
    return m2 - m1 * m1;
}
inline double photon_number_variance(const StateVector& psi) {
    return photon_number_variance(psi.space(), psi.amplitudes());
}

// Laguerre polynomial L_n(x) by the three-term recurrence.
inline double laguerre(int n, double x) {
    if (n == 0) return 1.0;
    double prev = 1.0, cur = 1.0 - x;
    for (int k = 1; k < n; ++k) {
        const double next = ((2.0 * k + 1.0 - x) * cur - k * prev) / (k + 1.0);
        prev = cur;
        cur = next;
    }
    return cur;
}

// <n, -alpha | n, alpha> = exp(-2 alpha^2) L_n(4 alpha^2) for real alpha.
inline double franck_condon(int n, double alpha) {
    if (n < 0) throw ConfigError("franck_condon needs n >= 0");
    const double x = 4.0 * alpha * alpha;
    return std::exp(-0.5 * x) * laguerre(n, x);
}

// |<psi0|E_l>|^2 for every retained eigenstate.
inline Eigen::VectorXd overlaps(const StateVector& psi0, const SpectralData& spec, double completeness_tol = 1e-3) {
    const Eigen::VectorXcd c = spec.project(psi0.amplitudes());
    Eigen::VectorXd w = c.cwiseAbs2();
    const double total = w.sum();
    if (total < 1.0 - completeness_tol)
        throw NumericalError("overlaps: retained eigenstates capture only " + std::to_string(total) +
                             " of the initial state");
    return w;
}

// Groups of (near-)degenerate levels: [begin, end) ranges with gaps < tol.
inline std::vector<std::pair<Index, Index>> degenerate_blocks(const Eigen::VectorXd& e, double tol = 1e-10) {
    std::vector<std::pair<Index, Index>> blocks;
    Index start = 0;
    for (Index i = 1; i <= e.size(); ++i) {
        if (i == e.size() || e(i) - e(i - 1) >= tol) {
            blocks.emplace_back(start, i);
            start = i;
        }
    }
    return blocks;
}

// Infinite-time average of <O> over the eigenpairs of one or more
// mutually orthogonal sectors: sum over degenerate blocks B of
// sum_{a,b in B} c_a^* c_b <a|O|b>. Blocks may straddle sectors.
inline double diagonal_ensemble(const StateVector& psi0, const std::vector<const SpectralData*>& sectors,
                                const OperatorMatrix& O, double degeneracy_tol = 1e-10,
                                double completeness_tol = 1e-3) {
    struct Level {
        double e;
        std::size_t sector;
        Index idx;
        cplx c;
    };
    std::vector<Level> levels;
    double total = 0.0;
    for (std::size_t s = 0; s < sectors.size(); ++s) {
        const Eigen::VectorXcd c = sectors[s]->project(psi0.amplitudes());
        total += c.squaredNorm();
        for (Index l = 0; l < c.size(); ++l) levels.push_back({sectors[s]->energies(l), s, l, c(l)});
    }
    if (total < 1.0 - completeness_tol)
        throw NumericalError("diagonal_ensemble: retained eigenstates capture only " + std::to_string(total) +
                             " of the initial state");
    std::stable_sort(levels.begin(), levels.end(), [](const Level& a, const Level& b) { return a.e < b.e; });
    Eigen::VectorXd e(static_cast<Index>(levels.size()));
    for (std::size_t i = 0; i < levels.size(); ++i) e(static_cast<Index>(i)) = levels[i].e;
    cplx acc = 0.0;
    for (const auto& [b, end] : degenerate_blocks(e, degeneracy_tol)) {
        // projected initial state inside the block
        Eigen::VectorXcd phi;
        for (Index i = b; i < end; ++i) {
            const Level& lv = levels[static_cast<std::size_t>(i)];
            if (std::norm(lv.c) < 1e-30) continue;
            const Eigen::VectorXcd v = lv.c * sectors[lv.sector]->state(lv.idx);
            if (phi.size() == 0) phi = v;
            else phi += v;
        }
        if (phi.size() == 0) continue;
        acc += phi.dot(O.matrix() * phi);
    }
    return acc.real();
}

inline double diagonal_ensemble(const StateVector& psi0, const SpectralData& spec, const OperatorMatrix& O,
                                double degeneracy_tol = 1e-10, double completeness_tol = 1e-3) {
    return diagonal_ensemble(psi0, std::vector<const SpectralData*>{&spec}, O, degeneracy_tol, completeness_tol);
}

// Per-eigenstate expectation values <E_l|O|E_l> for the lowest `count` levels.
inline Eigen::VectorXd eigen_expectations(const SpectralData& spec, const OperatorMatrix& O, Index count) {
    count = std::min(count, spec.k_levels);
    Eigen::VectorXd out(count);
    for (Index l = 0; l < count; ++l) {
        const Eigen::VectorXcd v = spec.state(l);
        out(l) = v.dot(O.matrix() * v).real();
    }
    return out;
}

}  // namespace rabidimer
