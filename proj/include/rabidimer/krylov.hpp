// krylov.hpp - matrix-exponential action exp(-i t A) v via Krylov subspaces
//
// Hermitian A uses the Lanczos three-term recurrence; general (dissipative)
// A uses Arnoldi with classical Gram-Schmidt plus one reorthogonalization
// pass. Both pick the substep length from the a-posteriori residual
// estimate  beta_m * |[exp(-i tau T_m)]_{m-1,0}| * |v|  so that every
// substep stays below `step_tol`. One subspace serves any tau up to the
// accepted step, which the quantum-jump code uses for norm bisection.

#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <unsupported/Eigen/MatrixFunctions>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <limits>

#include "rabidimer/errors.hpp"

namespace rabidimer {

using cplx = std::complex<double>;
using SparseMatrix = Eigen::SparseMatrix<cplx, Eigen::RowMajor>;
using RealSparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

struct KrylovOptions {
    int krylov_dim = 30;
    double step_tol = 1e-9;
};

struct KrylovStats {
    std::size_t subspaces = 0;   // bases built
    std::size_t matvecs = 0;
    std::size_t rejected = 0;    // tau shrink events
};

// A Krylov subspace built from one starting vector. `evaluate(tau)`
// returns the approximation to exp(-i tau A) v for any tau.
class KrylovSubspace {
public:
    KrylovSubspace() = default;

    // Builds the subspace. `hermitian` selects Lanczos over Arnoldi.
    template <typename Matrix>
    void build(const Matrix& A, const Eigen::VectorXcd& v, int m, bool hermitian,
               KrylovStats* stats = nullptr) {
        const Eigen::Index n = v.size();
        m = static_cast<int>(std::min<Eigen::Index>(m, n));
        hermitian_ = hermitian;
        beta0_ = v.norm();
        basis_.resize(n, m);
        hess_ = Eigen::MatrixXcd::Zero(m, m);
        residual_ = 0.0;
        exact_ = false;
        if (beta0_ == 0.0) {
            dim_ = 0;
            exact_ = true;
            return;
        }
        basis_.col(0) = v / beta0_;
        Eigen::VectorXcd w(n);
        int j = 0;
        for (; j < m; ++j) {
            w.noalias() = A * basis_.col(j);
            if (stats) ++stats->matvecs;
            if (hermitian) {
                const double alpha = basis_.col(j).dot(w).real();
                w -= alpha * basis_.col(j);
                if (j > 0) w -= hess_(j - 1, j) * basis_.col(j - 1);
                // local reorthogonalization against the last two vectors
                const cplx c0 = basis_.col(j).dot(w);
                w -= c0 * basis_.col(j);
                hess_(j, j) = alpha + c0.real();
                if (j > 0) {
                    const cplx c1 = basis_.col(j - 1).dot(w);
                    w -= c1 * basis_.col(j - 1);
                }
            } else {
                auto prev = basis_.leftCols(j + 1);
                Eigen::VectorXcd h = prev.adjoint() * w;
                w.noalias() -= prev * h;
                Eigen::VectorXcd h2 = prev.adjoint() * w;
                w.noalias() -= prev * h2;
                h += h2;
                hess_.col(j).head(j + 1) = h;
            }
            const double beta = w.norm();
            if (beta <= 1e-13 * (1.0 + std::abs(hess_(j, j)))) {
                // invariant subspace: the projection is exact
                dim_ = j + 1;
                exact_ = true;
                residual_ = 0.0;
                break;
            }
            if (j + 1 < m) {
                hess_(j + 1, j) = beta;
                if (hermitian) hess_(j, j + 1) = beta;
                basis_.col(j + 1) = w / beta;
            } else {
                residual_ = beta;
            }
        }
        if (!exact_) dim_ = m;
        if (stats) ++stats->subspaces;
        if (hermitian_) {
            Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(hess_.topLeftCorner(dim_, dim_).real());
            ritz_values_ = es.eigenvalues();
            ritz_vectors_ = es.eigenvectors();
        }
    }

    int dim() const { return dim_; }
    bool exact() const { return exact_; }
    double start_norm() const { return beta0_; }

    // Coefficients y(tau) = beta0 * exp(-i tau H_m) e_1 in the subspace.
    Eigen::VectorXcd coefficients(double tau) const {
        if (dim_ == 0) return {};
        if (hermitian_) {
            Eigen::VectorXcd phase(dim_);
            for (int k = 0; k < dim_; ++k)
                phase(k) = std::polar(ritz_vectors_(0, k), -tau * ritz_values_(k));
            return beta0_ * (ritz_vectors_ * phase);
        }
        Eigen::MatrixXcd gen = cplx(0.0, -tau) * hess_.topLeftCorner(dim_, dim_);
        Eigen::MatrixXcd e = gen.exp();
        return beta0_ * e.col(0);
    }

    // Residual-based error estimate for a step of length tau.
    double error_estimate(double tau) const {
        if (exact_ || dim_ == 0) return 0.0;
        if (hermitian_) {
            cplx last = 0.0;
            for (int k = 0; k < dim_; ++k)
                last += std::polar(ritz_vectors_(dim_ - 1, k) * ritz_vectors_(0, k), -tau * ritz_values_(k));
            return residual_ * beta0_ * std::abs(last);
        }
        const Eigen::VectorXcd y = coefficients(tau);
        return residual_ * std::abs(y(dim_ - 1));
    }

    Eigen::VectorXcd evaluate(double tau) const {
        if (dim_ == 0) return Eigen::VectorXcd::Zero(basis_.rows());
        return basis_.leftCols(dim_) * coefficients(tau);
    }

    // Largest tau <= tau_max (starting the search from `guess`) whose
    // error estimate is below tol.
    double accepted_step(double tau_max, double guess, double tol, KrylovStats* stats = nullptr) const {
        if (exact_) return tau_max;
        double tau = std::min(tau_max, guess);
        double err = error_estimate(tau);
        int guard = 0;
        while (err > tol) {
            const double factor = std::clamp(0.9 * std::pow(tol / err, 1.0 / std::max(1, dim_ / 2)), 0.1, 0.9);
            tau *= factor;
            err = error_estimate(tau);
            if (stats) ++stats->rejected;
            if (++guard > 200 || tau < 1e-300)
                throw NumericalError("Krylov step size underflow; increase krylov_dim or step_tol");
        }
        // try to grow within the same subspace
        while (tau < tau_max) {
            const double bigger = std::min(tau_max, tau * 1.25);
            if (error_estimate(bigger) > tol) break;
            tau = bigger;
        }
        return tau;
    }

private:
    Eigen::MatrixXcd basis_;
    Eigen::MatrixXcd hess_;
    Eigen::VectorXd ritz_values_;
    Eigen::MatrixXd ritz_vectors_;
    double beta0_ = 0.0;
    double residual_ = 0.0;
    int dim_ = 0;
    bool exact_ = false;
    bool hermitian_ = true;
};

// Stateful propagator: advances a vector by arbitrary time spans with
// adaptive substeps. Remembers the last accepted step as the next guess.
template <typename Matrix = SparseMatrix>
class KrylovPropagator {
public:
    KrylovPropagator(const Matrix& A, bool hermitian, KrylovOptions opts = {})
        : A_(&A), hermitian_(hermitian), opts_(opts) {
        if (opts_.krylov_dim < 4) throw ConfigError("krylov_dim must be >= 4");
        if (!(opts_.step_tol > 0.0)) throw ConfigError("step_tol must be > 0");
    }

    // v <- exp(-i t A) v. Negative t is allowed.
    void advance(Eigen::VectorXcd& v, double t) {
        const double sign = t < 0 ? -1.0 : 1.0;
        double remaining = std::abs(t);
        while (remaining > 0.0) {
            subspace_.build(*A_, v, opts_.krylov_dim, hermitian_, &stats_);
            if (sign < 0) {
                // exp(+i tau A) v: evaluate with negative tau
                const double tau = accepted_negative(remaining);
                v = subspace_.evaluate(-tau);
                remaining -= tau;
            } else {
                const double tau = subspace_.accepted_step(remaining, guess_, opts_.step_tol, &stats_);
                v = subspace_.evaluate(tau);
                // a step clipped by `remaining` says nothing about the limit
                guess_ = tau < remaining ? tau : std::max(guess_, tau);
                remaining -= tau;
            }
            if (remaining < 1e-14 * std::abs(t)) remaining = 0.0;
        }
    }

    const KrylovSubspace& subspace() const { return subspace_; }
    KrylovSubspace& subspace() { return subspace_; }
    const KrylovStats& stats() const { return stats_; }
    double guess() const { return guess_; }
    void set_guess(double g) { guess_ = g; }
    const KrylovOptions& options() const { return opts_; }
    bool hermitian() const { return hermitian_; }
    const Matrix& matrix() const { return *A_; }

private:
    double accepted_negative(double tau_max) {
        double tau = std::min(tau_max, guess_);
        int guard = 0;
        while (subspace_.error_estimate(-tau) > opts_.step_tol) {
            tau *= 0.5;
            if (++guard > 200) throw NumericalError("Krylov step size underflow");
        }
        while (tau < tau_max) {
            const double bigger = std::min(tau_max, tau * 1.25);
            if (subspace_.error_estimate(-bigger) > opts_.step_tol) break;
            tau = bigger;
        }
        guess_ = tau;
        return tau;
    }

    const Matrix* A_;
    bool hermitian_;
    KrylovOptions opts_;
    KrylovSubspace subspace_;
    KrylovStats stats_;
    double guess_ = 1.0;
};

}  // namespace rabidimer
