// fockspace.hpp - truncated oscillator (x) qubit Hilbert spaces and elementary operators
//
// Basis ordering is site-major, then Fock level, then qubit (qubit fastest):
//   local index  = 2 n + s          (s = 0 for down, 1 for up)
//   dimer index  = local_L * d + local_R,   d = 2 (n_max + 1)
// Frequencies are in units of the cavity frequency, times in its inverse.

#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <cmath>
#include <complex>
#include <cstdint>
#include <limits>
#include <memory>
#include <string>
#include <variant>
#include <vector>

#include "rabidimer/errors.hpp"
#include "rabidimer/krylov.hpp"

namespace rabidimer {

using Index = Eigen::Index;

enum class Site : int { left = 0, right = 1 };
enum class Spin : int { down = 0, up = 1 };
enum class PauliAxis { x, y, z, plus, minus };

struct LocalLabel {
    int n = 0;
    Spin spin = Spin::down;
    bool operator==(const LocalLabel&) const = default;
};

struct BasisLabel {
    LocalLabel left;
    LocalLabel right;  // unused on single-site spaces
    bool operator==(const BasisLabel&) const = default;
};

class FockSpace {
public:
    FockSpace() = default;

    FockSpace(int n_max, int n_sites) : n_max_(n_max), n_sites_(n_sites) {
        if (n_sites != 1 && n_sites != 2)
            throw ConfigError("n_sites must be 1 or 2, got " + std::to_string(n_sites));
        if (n_max < 0) throw ConfigError("n_max must be >= 0, got " + std::to_string(n_max));
        // sparse storage indices are int; the whole space must fit
        int local = 0;
        if (__builtin_mul_overflow(2, n_max + 1, &local) || n_max == std::numeric_limits<int>::max())
            throw ConfigError("n_max too large: dimension overflows int");
        int dim = local;
        if (n_sites == 2 && __builtin_mul_overflow(local, local, &dim))
            throw ConfigError("n_max too large: dimension overflows int");
        local_dim_ = local;
        dim_ = dim;
    }

    int n_max() const { return n_max_; }
    int n_sites() const { return n_sites_; }
    Index dim() const { return dim_; }
    Index local_dim() const { return local_dim_; }

    bool has_site(Site s) const { return static_cast<int>(s) < n_sites_; }

    Index local_index(LocalLabel l) const { return 2 * static_cast<Index>(l.n) + static_cast<Index>(l.spin); }
    LocalLabel local_label(Index i) const {
        return {static_cast<int>(i / 2), (i % 2) ? Spin::up : Spin::down};
    }

    Index index(const BasisLabel& b) const {
        check_label(b.left);
        if (n_sites_ == 1) return local_index(b.left);
        check_label(b.right);
        return local_index(b.left) * local_dim_ + local_index(b.right);
    }

    BasisLabel label(Index i) const {
        if (i < 0 || i >= dim_) throw ConfigError("basis index out of range");
        if (n_sites_ == 1) return {local_label(i), {}};
        return {local_label(i / local_dim_), local_label(i % local_dim_)};
    }

    // Local (single-site) index of `site` inside global index i.
    Index local_of(Index i, Site site) const {
        if (n_sites_ == 1) return i;
        return site == Site::left ? i / local_dim_ : i % local_dim_;
    }

    bool operator==(const FockSpace& o) const { return n_max_ == o.n_max_ && n_sites_ == o.n_sites_; }

private:
    void check_label(const LocalLabel& l) const {
        if (l.n < 0 || l.n > n_max_) throw ConfigError("Fock level outside truncation");
    }

    int n_max_ = 0;
    int n_sites_ = 1;
    Index local_dim_ = 2;
    Index dim_ = 2;
};

inline FockSpace make_space(int n_max, int n_sites) { return FockSpace(n_max, n_sites); }

// Default truncation for an initial Fock population n_i and coupling g
// (in units of omega0): the classical turning point of |n_i> displaced by
// 2g, plus a tail margin growing with g. Keeps the top-level mass below
// 1e-7 for g <= 3 and n_i <= 30.
inline int default_n_max(int n_initial, double g) {
    if (n_initial < 0 || !(g >= 0.0)) throw ConfigError("default_n_max needs n_i >= 0 and g >= 0");
    const double turning = std::pow(std::sqrt(static_cast<double>(n_initial)) + 2.0 * g, 2);
    return static_cast<int>(std::ceil(turning + 6.0 + 9.0 * g));
}

// --------------------------------------------------------------------------
// Operators

class OperatorMatrix {
public:
    OperatorMatrix() = default;
    OperatorMatrix(FockSpace space, SparseMatrix m, bool hermitian = false)
        : space_(space), m_(std::move(m)), hermitian_(hermitian) {
        if (m_.rows() != space_.dim() || m_.cols() != space_.dim())
            throw ConfigError("operator dimensions do not match its space");
        m_.prune([](Index, Index, const cplx& v) { return std::abs(v) > 1e-15; });
        m_.makeCompressed();
        bool real = true;
        for (Index k = 0; k < m_.nonZeros() && real; ++k) real = m_.valuePtr()[k].imag() == 0.0;
        if (real) real_ = std::make_shared<const RealSparseMatrix>(m_.real());
    }

    const FockSpace& space() const { return space_; }
    const SparseMatrix& matrix() const { return m_; }
    bool hermitian() const { return hermitian_; }
    Index dim() const { return m_.rows(); }

    // Real copy of the matrix when every entry is real (faster products).
    bool is_real() const { return real_ != nullptr; }
    const RealSparseMatrix& real_matrix() const {
        if (!real_) throw ConfigError("operator has complex entries");
        return *real_;
    }

    // Largest |M - M^dagger| entry.
    double hermitian_deviation() const {
        SparseMatrix diff = m_ - SparseMatrix(m_.adjoint());
        double worst = 0.0;
        for (int k = 0; k < diff.outerSize(); ++k)
            for (SparseMatrix::InnerIterator it(diff, k); it; ++it) worst = std::max(worst, std::abs(it.value()));
        return worst;
    }

    OperatorMatrix adjoint() const { return {space_, SparseMatrix(m_.adjoint()), hermitian_}; }

    friend OperatorMatrix operator+(const OperatorMatrix& a, const OperatorMatrix& b) {
        check_same(a, b);
        return {a.space_, SparseMatrix(a.m_ + b.m_), a.hermitian_ && b.hermitian_};
    }
    friend OperatorMatrix operator-(const OperatorMatrix& a, const OperatorMatrix& b) {
        check_same(a, b);
        return {a.space_, SparseMatrix(a.m_ - b.m_), a.hermitian_ && b.hermitian_};
    }
    // Product; the hermitian flag is not inferred.
    friend OperatorMatrix operator*(const OperatorMatrix& a, const OperatorMatrix& b) {
        check_same(a, b);
        return {a.space_, SparseMatrix(a.m_ * b.m_), false};
    }
    friend OperatorMatrix operator*(double s, const OperatorMatrix& a) {
        return {a.space_, SparseMatrix(s * a.m_), a.hermitian_};
    }
    friend OperatorMatrix operator*(cplx s, const OperatorMatrix& a) {
        return {a.space_, SparseMatrix(s * a.m_), a.hermitian_ && s.imag() == 0.0};
    }

    OperatorMatrix with_hermitian_flag(bool h) const {
        OperatorMatrix r = *this;
        r.hermitian_ = h;
        return r;
    }

private:
    static void check_same(const OperatorMatrix& a, const OperatorMatrix& b) {
        if (!(a.space_ == b.space_)) throw ConfigError("operators live on different spaces");
    }

    FockSpace space_;
    SparseMatrix m_;
    std::shared_ptr<const RealSparseMatrix> real_;
    bool hermitian_ = false;
};

namespace detail {

struct LocalEntry {
    Index row;
    Index col;
    cplx value;
};

// Embeds a single-site operator given by its nonzero entries onto `site`.
inline OperatorMatrix embed(const FockSpace& space, Site site, const std::vector<LocalEntry>& local,
                            bool hermitian) {
    if (!space.has_site(site)) throw ConfigError("site not present in this space");
    std::vector<Eigen::Triplet<cplx>> trips;
    if (space.n_sites() == 1) {
        trips.reserve(local.size());
        for (const auto& e : local) trips.emplace_back(e.row, e.col, e.value);
    } else {
        const Index d = space.local_dim();
        trips.reserve(local.size() * static_cast<std::size_t>(d));
        for (const auto& e : local)
            for (Index o = 0; o < d; ++o) {
                if (site == Site::left)
                    trips.emplace_back(e.row * d + o, e.col * d + o, e.value);
                else
                    trips.emplace_back(o * d + e.row, o * d + e.col, e.value);
            }
    }
    SparseMatrix m(space.dim(), space.dim());
    m.setFromTriplets(trips.begin(), trips.end());
    return {space, std::move(m), hermitian};
}

}  // namespace detail

inline OperatorMatrix identity(const FockSpace& space) {
    SparseMatrix m(space.dim(), space.dim());
    m.setIdentity();
    return {space, std::move(m), true};
}

// a_site with <n-1|a|n> = sqrt(n); the top level has nothing above it.
inline OperatorMatrix annihilator(const FockSpace& space, Site site = Site::left) {
    std::vector<detail::LocalEntry> e;
    for (int n = 1; n <= space.n_max(); ++n)
        for (int s = 0; s < 2; ++s) e.push_back({2 * (n - 1) + s, 2 * n + s, std::sqrt(static_cast<double>(n))});
    return detail::embed(space, site, e, false);
}

inline OperatorMatrix creator(const FockSpace& space, Site site = Site::left) {
    return annihilator(space, site).adjoint();
}

inline OperatorMatrix number(const FockSpace& space, Site site = Site::left) {
    std::vector<detail::LocalEntry> e;
    for (int n = 1; n <= space.n_max(); ++n)
        for (int s = 0; s < 2; ++s) e.push_back({2 * n + s, 2 * n + s, static_cast<double>(n)});
    return detail::embed(space, site, e, true);
}

// Projector onto Fock level n on `site` (any qubit state).
inline OperatorMatrix level_projector(const FockSpace& space, Site site, int n) {
    std::vector<detail::LocalEntry> e{{2 * n, 2 * n, 1.0}, {2 * n + 1, 2 * n + 1, 1.0}};
    return detail::embed(space, site, e, true);
}

// Pauli operators with sigma_z|up> = |up>, sigma_z|down> = -|down>,
// sigma_+ = |up><down| = (sigma_x + i sigma_y)/2.
inline OperatorMatrix pauli(const FockSpace& space, Site site, PauliAxis axis) {
    std::vector<detail::LocalEntry> e;
    const cplx I(0.0, 1.0);
    for (int n = 0; n <= space.n_max(); ++n) {
        const Index dn = 2 * n, up = 2 * n + 1;
        switch (axis) {
        case PauliAxis::x:
            e.push_back({up, dn, 1.0});
            e.push_back({dn, up, 1.0});
            break;
        case PauliAxis::y:
            e.push_back({up, dn, -I});
            e.push_back({dn, up, I});
            break;
        case PauliAxis::z:
            e.push_back({up, up, 1.0});
            e.push_back({dn, dn, -1.0});
            break;
        case PauliAxis::plus:
            e.push_back({up, dn, 1.0});
            break;
        case PauliAxis::minus:
            e.push_back({dn, up, 1.0});
            break;
        }
    }
    const bool herm = axis == PauliAxis::x || axis == PauliAxis::y || axis == PauliAxis::z;
    return detail::embed(space, site, e, herm);
}

// --------------------------------------------------------------------------
// Sectors

// An invariant subspace given by a real isometry V (dim x k, orthonormal
// columns). A default-constructed sector on a space is the whole space.
class Sector {
public:
    using Isometry = Eigen::SparseMatrix<double>;

    Sector() = default;
    explicit Sector(FockSpace space) : space_(space), dim_(space.dim()), name_("all") {}
    Sector(FockSpace space, Isometry v, std::string name)
        : space_(space), iso_(std::make_shared<const Isometry>(std::move(v))), name_(std::move(name)) {
        if (iso_->rows() != space_.dim()) throw ConfigError("sector isometry has the wrong row count");
        dim_ = iso_->cols();
    }

    // Sector spanned by a set of basis states.
    static Sector from_indices(FockSpace space, const std::vector<Index>& idx, std::string name) {
        std::vector<Eigen::Triplet<double>> t;
        t.reserve(idx.size());
        for (std::size_t k = 0; k < idx.size(); ++k) t.emplace_back(idx[k], static_cast<Index>(k), 1.0);
        Isometry v(space.dim(), static_cast<Index>(idx.size()));
        v.setFromTriplets(t.begin(), t.end());
        return Sector(space, std::move(v), std::move(name));
    }

    const FockSpace& space() const { return space_; }
    Index dim() const { return dim_; }
    bool whole() const { return iso_ == nullptr; }
    const std::string& name() const { return name_; }
    const Isometry& isometry() const { return *iso_; }
    Isometry isometry_or_identity() const {
        if (!whole()) return *iso_;
        Isometry id(dim_, dim_);
        id.setIdentity();
        return id;
    }

    // V^T x
    Eigen::VectorXcd restrict(const Eigen::VectorXcd& full) const {
        if (whole()) return full;
        Eigen::VectorXcd r(dim_);
        r.real() = iso_->transpose() * full.real();
        r.imag() = iso_->transpose() * full.imag();
        return r;
    }

    // V y
    Eigen::VectorXcd embed(const Eigen::VectorXcd& sector) const {
        if (whole()) return sector;
        Eigen::VectorXcd f(space_.dim());
        f.real() = *iso_ * sector.real();
        f.imag() = *iso_ * sector.imag();
        return f;
    }

    // V^T M V
    RealSparseMatrix restrict(const RealSparseMatrix& m) const {
        if (whole()) return m;
        return RealSparseMatrix(iso_->transpose() * (m * *iso_));
    }
    SparseMatrix restrict(const SparseMatrix& m) const {
        if (whole()) return m;
        const Eigen::SparseMatrix<cplx> v = iso_->cast<cplx>();
        return SparseMatrix(v.transpose() * (m * v));
    }

private:
    FockSpace space_;
    std::shared_ptr<const Isometry> iso_;
    Index dim_ = 0;
    std::string name_;
};

// --------------------------------------------------------------------------
// States

class StateVector {
public:
    StateVector() = default;
    StateVector(FockSpace space, Eigen::VectorXcd amps) : space_(space), amps_(std::move(amps)) {
        if (amps_.size() != space_.dim()) throw ConfigError("state size does not match its space");
    }

    const FockSpace& space() const { return space_; }
    const Eigen::VectorXcd& amplitudes() const { return amps_; }
    Eigen::VectorXcd& amplitudes() { return amps_; }
    double norm() const { return amps_.norm(); }

    StateVector& normalize() {
        const double nrm = amps_.norm();
        if (nrm == 0.0) throw NumericalError("cannot normalize a zero vector");
        amps_ /= nrm;
        return *this;
    }

private:
    FockSpace space_;
    Eigen::VectorXcd amps_;
};

inline cplx expectation(const OperatorMatrix& op, const Eigen::VectorXcd& psi) {
    return psi.dot(op.matrix() * psi);
}
inline cplx expectation(const OperatorMatrix& op, const StateVector& psi) {
    if (!(op.space() == psi.space())) throw ConfigError("operator and state live on different spaces");
    return expectation(op, psi.amplitudes());
}

struct FockSpec {
    int n = 0;
};
struct CoherentSpec {
    cplx alpha{0.0, 0.0};
};

struct SiteState {
    std::variant<FockSpec, CoherentSpec> field = FockSpec{};
    Spin spin = Spin::down;
};

// Poisson mass of a coherent state above level n_max.
inline double coherent_tail(cplx alpha, int n_max) {
    const double x = std::norm(alpha);
    if (x == 0.0) return 0.0;
    // log of the first omitted term, then sum the tail by recurrence
    const double n1 = static_cast<double>(n_max + 1);
    double log_term = -x + n1 * std::log(x) - std::lgamma(n1 + 1.0);
    double term = std::exp(log_term);
    double tail = 0.0;
    for (double k = n1; term > 0.0; k += 1.0) {
        tail += term;
        term *= x / (k + 1.0);
        if (term < 1e-300 || (k > x && term < 1e-18 * tail)) break;
    }
    return tail;
}

namespace detail {

inline Eigen::VectorXcd field_amplitudes(const FockSpace& space, const SiteState& st, double tail_tol) {
    Eigen::VectorXcd c = Eigen::VectorXcd::Zero(space.n_max() + 1);
    if (const auto* f = std::get_if<FockSpec>(&st.field)) {
        if (f->n < 0 || f->n > space.n_max()) throw ConfigError("Fock level outside truncation");
        c(f->n) = 1.0;
        return c;
    }
    const cplx alpha = std::get<CoherentSpec>(st.field).alpha;
    const double tail = coherent_tail(alpha, space.n_max());
    if (tail >= tail_tol)
        throw TruncationError("coherent state truncation tail " + std::to_string(tail) + " exceeds " +
                              std::to_string(tail_tol));
    c(0) = std::exp(-0.5 * std::norm(alpha));
    for (int n = 1; n <= space.n_max(); ++n) c(n) = c(n - 1) * alpha / std::sqrt(static_cast<double>(n));
    c /= c.norm();
    return c;
}

inline Eigen::VectorXcd local_state(const FockSpace& space, const SiteState& st, double tail_tol) {
    const Eigen::VectorXcd field = field_amplitudes(space, st, tail_tol);
    Eigen::VectorXcd v = Eigen::VectorXcd::Zero(space.local_dim());
    for (int n = 0; n <= space.n_max(); ++n) v(2 * n + static_cast<int>(st.spin)) = field(n);
    return v;
}

}  // namespace detail

// Normalized product state. `sites` holds one entry per site (left first).
inline StateVector product_state(const FockSpace& space, const std::vector<SiteState>& sites,
                                 double tail_tol = 1e-10) {
    if (static_cast<int>(sites.size()) != space.n_sites())
        throw ConfigError("product_state needs one site specification per site");
    Eigen::VectorXcd left = detail::local_state(space, sites[0], tail_tol);
    if (space.n_sites() == 1) return StateVector(space, std::move(left)).normalize();
    Eigen::VectorXcd right = detail::local_state(space, sites[1], tail_tol);
    Eigen::VectorXcd v = Eigen::VectorXcd::Zero(space.dim());
    const Index d = space.local_dim();
    for (Index i = 0; i < d; ++i) {
        if (left(i) == cplx(0.0)) continue;
        v.segment(i * d, d) = left(i) * right;
    }
    return StateVector(space, std::move(v)).normalize();
}

// Displaced Fock state D(alpha)|n> on a single-site space, computed by
// applying exp(alpha a^dag - alpha^* a) with a Krylov exponential on an
// enlarged working truncation and projecting back.
inline StateVector displaced_fock(const FockSpace& space, int n, cplx alpha, Spin spin = Spin::down,
                                  double tail_tol = 1e-10) {
    if (space.n_sites() != 1) throw ConfigError("displaced_fock requires a single-site space");
    if (n < 0 || n > space.n_max()) throw ConfigError("Fock level outside truncation");
    const double a = std::abs(alpha);
    const int pad = 30 + static_cast<int>(std::ceil(6.0 * a * a + 12.0 * a * std::sqrt(n + 1.0)));
    const FockSpace work(space.n_max() + pad, 1);
    // the qubit is a spectator of the displacement
    const OperatorMatrix ann = annihilator(work, Site::left);
    // exp(alpha a^dag - alpha^* a) = exp(-i K) with K = i(alpha a^dag - alpha^* a)
    SparseMatrix K = cplx(0.0, 1.0) * (alpha * SparseMatrix(ann.matrix().adjoint()) - std::conj(alpha) * ann.matrix());
    K.makeCompressed();
    Eigen::VectorXcd v = Eigen::VectorXcd::Zero(work.dim());
    v(2 * n + static_cast<int>(spin)) = 1.0;
    if (a > 0.0) {
        KrylovPropagator prop(K, true, {30, 1e-14});
        prop.advance(v, 1.0);
    }
    const Index keep = space.dim();
    const double tail = v.tail(v.size() - keep).squaredNorm();
    if (tail >= tail_tol)
        throw TruncationError("displaced Fock state truncation tail " + std::to_string(tail) + " exceeds " +
                              std::to_string(tail_tol));
    return StateVector(space, v.head(keep)).normalize();
}

}  // namespace rabidimer
