// model.hpp - single Rabi and Rabi-dimer Hamiltonians, symmetry operators, A^2 map

#pragma once

#include <nlohmann/json.hpp>

#include <cmath>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "rabidimer/errors.hpp"
#include "rabidimer/fockspace.hpp"

namespace rabidimer {

struct RabiParams {
    double omega0 = 1.0;  // cavity frequency
    double Omega = 1.0;   // qubit splitting
    double g = 0.0;       // qubit-cavity coupling

    bool resonant() const { return omega0 == Omega; }
    bool operator==(const RabiParams&) const = default;

    void validate() const {
        if (!(omega0 >= 0.0) || !(Omega >= 0.0) || !(g >= 0.0))
            throw ConfigError("RabiParams: omega0, Omega and g must be >= 0");
    }
};

struct DimerParams {
    RabiParams left;
    RabiParams right;
    double J = 0.0;  // photon hopping
    double D = 0.0;  // A^2-term coefficient

    bool identical_sites() const { return left == right; }
    bool operator==(const DimerParams&) const = default;

    static DimerParams identical(RabiParams site, double J, double D = 0.0) { return {site, site, J, D}; }

    void validate() const {
        left.validate();
        right.validate();
        if (!(J >= 0.0)) throw ConfigError("DimerParams: J must be >= 0");
        if (!(D >= 0.0)) throw ConfigError("DimerParams: D must be >= 0");
    }
};

struct BuildOptions {
    bool jc_only = false;  // drop the counter-rotating a sigma_- + a^dag sigma_+ terms
};

namespace detail {

inline OperatorMatrix rabi_terms(const FockSpace& space, Site site, const RabiParams& p, const BuildOptions& opt) {
    const OperatorMatrix a = annihilator(space, site);
    const OperatorMatrix ad = a.adjoint();
    OperatorMatrix h = p.omega0 * number(space, site) + (0.5 * p.Omega) * pauli(space, site, PauliAxis::z);
    if (p.g != 0.0) {
        if (opt.jc_only) {
            const OperatorMatrix jc = a * pauli(space, site, PauliAxis::plus) + ad * pauli(space, site, PauliAxis::minus);
            h = h - p.g * jc;
        } else {
            const OperatorMatrix x = a + ad;
            h = h - p.g * (x * pauli(space, site, PauliAxis::x));
        }
    }
    return h.with_hermitian_flag(true);
}

}  // namespace detail

// H = omega0 a^dag a + (Omega/2) sigma_z - g (a + a^dag) sigma_x
inline OperatorMatrix build_rabi(const FockSpace& space, const RabiParams& p, BuildOptions opt = {}) {
    if (space.n_sites() != 1) throw ConfigError("build_rabi needs a single-site space");
    p.validate();
    return detail::rabi_terms(space, Site::left, p, opt);
}

// H = H_L + H_R - J (a_L^dag a_R + a_R^dag a_L) + D sum_j (a_j + a_j^dag)^2
inline OperatorMatrix build_dimer(const FockSpace& space, const DimerParams& p, BuildOptions opt = {}) {
    if (space.n_sites() != 2) throw ConfigError("build_dimer needs a two-site space");
    p.validate();
    OperatorMatrix h = detail::rabi_terms(space, Site::left, p.left, opt) +
                       detail::rabi_terms(space, Site::right, p.right, opt);
    if (p.J != 0.0) {
        const OperatorMatrix aL = annihilator(space, Site::left);
        const OperatorMatrix aR = annihilator(space, Site::right);
        const OperatorMatrix hop = aL.adjoint() * aR;
        h = h - p.J * (hop + hop.adjoint());
    }
    if (p.D > 0.0) {
        for (Site s : {Site::left, Site::right}) {
            const OperatorMatrix a = annihilator(space, s);
            const OperatorMatrix x = a + a.adjoint();
            h = h + p.D * (x * x);
        }
    }
    return h.with_hermitian_flag(true);
}

// Number of excitations N_L + N_R + n_up(L) + n_up(R), diagonal.
inline OperatorMatrix excitation_number(const FockSpace& space) {
    std::vector<Eigen::Triplet<cplx>> t;
    for (Index i = 0; i < space.dim(); ++i) {
        const BasisLabel b = space.label(i);
        int e = b.left.n + static_cast<int>(b.left.spin);
        if (space.n_sites() == 2) e += b.right.n + static_cast<int>(b.right.spin);
        t.emplace_back(i, i, static_cast<double>(e));
    }
    SparseMatrix m(space.dim(), space.dim());
    m.setFromTriplets(t.begin(), t.end());
    return {space, std::move(m), true};
}

// +1 or -1 per basis state: parity of the excitation number.
inline int basis_parity(const FockSpace& space, Index i) {
    const BasisLabel b = space.label(i);
    int e = b.left.n + static_cast<int>(b.left.spin);
    if (space.n_sites() == 2) e += b.right.n + static_cast<int>(b.right.spin);
    return (e % 2 == 0) ? 1 : -1;
}

inline OperatorMatrix parity_operator(const FockSpace& space) {
    std::vector<Eigen::Triplet<cplx>> t;
    for (Index i = 0; i < space.dim(); ++i) t.emplace_back(i, i, static_cast<double>(basis_parity(space, i)));
    SparseMatrix m(space.dim(), space.dim());
    m.setFromTriplets(t.begin(), t.end());
    return {space, std::move(m), true};
}

// Basis indices with the given excitation parity (+1 even, -1 odd), ascending.
inline std::vector<Index> parity_indices(const FockSpace& space, int parity) {
    if (parity != 1 && parity != -1) throw ConfigError("parity must be +1 or -1");
    std::vector<Index> idx;
    for (Index i = 0; i < space.dim(); ++i)
        if (basis_parity(space, i) == parity) idx.push_back(i);
    return idx;
}

inline Sector parity_sector(const FockSpace& space, int parity) {
    return Sector::from_indices(space, parity_indices(space, parity), parity > 0 ? "even" : "odd");
}

// Joint eigenspace of parity and the L<->R swap (swap = +1 symmetric,
// -1 antisymmetric). Both commute with an identical-site dimer.
inline Sector parity_swap_sector(const FockSpace& space, int parity, int swap) {
    if (space.n_sites() != 2) throw ConfigError("parity_swap_sector needs a two-site space");
    if (swap != 1 && swap != -1) throw ConfigError("swap must be +1 or -1");
    const Index d = space.local_dim();
    std::vector<Eigen::Triplet<double>> t;
    Index col = 0;
    const double h = std::sqrt(0.5);
    for (Index i : parity_indices(space, parity)) {
        const Index l = i / d, r = i % d;
        if (l > r) continue;
        if (l == r) {
            if (swap < 0) continue;
            t.emplace_back(i, col++, 1.0);
        } else {
            t.emplace_back(i, col, h);
            t.emplace_back(r * d + l, col++, swap * h);
        }
    }
    Sector::Isometry v(space.dim(), col);
    v.setFromTriplets(t.begin(), t.end());
    return Sector(space, std::move(v), std::string(parity > 0 ? "even" : "odd") + (swap > 0 ? "+" : "-"));
}

// Permutation exchanging the left and right sites.
inline OperatorMatrix swap_operator(const FockSpace& space) {
    if (space.n_sites() != 2) throw ConfigError("swap_operator needs a two-site space");
    const Index d = space.local_dim();
    std::vector<Eigen::Triplet<cplx>> t;
    for (Index l = 0; l < d; ++l)
        for (Index r = 0; r < d; ++r) t.emplace_back(r * d + l, l * d + r, 1.0);
    SparseMatrix m(space.dim(), space.dim());
    m.setFromTriplets(t.begin(), t.end());
    return {space, std::move(m), true};
}

// True when no matrix element of `op` connects opposite parities.
inline bool conserves_parity(const OperatorMatrix& op) {
    const SparseMatrix& m = op.matrix();
    for (Index i = 0; i < m.outerSize(); ++i)
        for (SparseMatrix::InnerIterator it(m, i); it; ++it)
            if (basis_parity(op.space(), i) != basis_parity(op.space(), it.col())) return false;
    return true;
}

inline bool commutes_with_swap(const OperatorMatrix& op) {
    if (op.space().n_sites() != 2) return false;
    const OperatorMatrix swap = swap_operator(op.space());
    const SparseMatrix& s = swap.matrix();
    const SparseMatrix diff = SparseMatrix(s * op.matrix() * s) - op.matrix();
    for (Index k = 0; k < diff.nonZeros(); ++k)
        if (diff.valuePtr()[k] != cplx(0.0)) return false;
    return true;
}

// Finest sector decomposition the operator respects: parity x swap,
// parity, or the whole space. Empty sectors are dropped.
inline std::vector<Sector> symmetry_sectors(const OperatorMatrix& op) {
    std::vector<Sector> out;
    const FockSpace& space = op.space();
    if (!conserves_parity(op)) {
        out.emplace_back(space);
        return out;
    }
    const bool swap = commutes_with_swap(op);
    for (int p : {1, -1}) {
        if (swap) {
            for (int s : {1, -1}) {
                Sector sec = parity_swap_sector(space, p, s);
                if (sec.dim() > 0) out.push_back(std::move(sec));
            }
        } else {
            Sector sec = parity_sector(space, p);
            if (sec.dim() > 0) out.push_back(std::move(sec));
        }
    }
    return out;
}

// Maps H + D sum_j (a_j + a_j^dag)^2 onto a D = 0 dimer by the squeezing
// relations e^{4r} = 1 + 4D/omega0, omega0 -> omega0 e^{2r}, g -> g e^{r},
// J -> J e^{2r}; Omega is unchanged.
inline DimerParams a2_renormalize(const DimerParams& p) {
    p.validate();
    if (!p.identical_sites()) throw ConfigError("a2_renormalize requires identical sites");
    if (p.D == 0.0) return p;
    if (p.left.omega0 <= 0.0) throw ConfigError("a2_renormalize requires omega0 > 0");
    const double r = 0.25 * std::log1p(4.0 * p.D / p.left.omega0);
    RabiParams site = p.left;
    site.omega0 = p.left.omega0 * std::exp(2.0 * r);
    site.g = p.left.g * std::exp(r);
    return DimerParams::identical(site, p.J * std::exp(2.0 * r), 0.0);
}

inline double squeezing_parameter(double D, double omega0) { return 0.25 * std::log1p(4.0 * D / omega0); }

// --------------------------------------------------------------------------
// JSON block: {omega0, Omega, g, J, D, n_max, jc_only}

struct ModelConfig {
    DimerParams params = DimerParams::identical({1.0, 1.0, 0.0}, 0.0, 0.0);
    std::optional<int> n_max;
    bool jc_only = false;
    int n_sites = 2;
};

namespace detail {

inline void reject_unknown_keys(const nlohmann::json& j, const std::set<std::string>& allowed, const std::string& where) {
    if (!j.is_object()) throw ConfigError(where + ": expected a JSON object");
    for (const auto& [key, _] : j.items())
        if (!allowed.count(key)) throw ConfigError(where + ": unknown key '" + key + "'");
}

template <typename T>
T get_or(const nlohmann::json& j, const char* key, T fallback, const std::string& where) {
    if (!j.contains(key)) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(where + "." + key + ": " + e.what());
    }
}

}  // namespace detail

inline ModelConfig model_config_from_json(const nlohmann::json& j) {
    const std::string where = "model";
    detail::reject_unknown_keys(j, {"omega0", "Omega", "g", "J", "D", "n_max", "jc_only", "n_sites"}, where);
    ModelConfig c;
    RabiParams site;
    site.omega0 = detail::get_or(j, "omega0", 1.0, where);
    site.Omega = detail::get_or(j, "Omega", site.omega0, where);
    site.g = detail::get_or(j, "g", 0.0, where);
    c.params = DimerParams::identical(site, detail::get_or(j, "J", 0.0, where), detail::get_or(j, "D", 0.0, where));
    if (j.contains("n_max") && !j.at("n_max").is_null()) c.n_max = detail::get_or(j, "n_max", 0, where);
    c.jc_only = detail::get_or(j, "jc_only", false, where);
    c.n_sites = detail::get_or(j, "n_sites", 2, where);
    if (c.n_sites != 1 && c.n_sites != 2) throw ConfigError("model.n_sites must be 1 or 2");
    if (c.n_max && *c.n_max < 0) throw ConfigError("model.n_max must be >= 0");
    c.params.validate();
    return c;
}

inline nlohmann::json to_json(const ModelConfig& c) {
    nlohmann::json j{{"omega0", c.params.left.omega0},
                     {"Omega", c.params.left.Omega},
                     {"g", c.params.left.g},
                     {"J", c.params.J},
                     {"D", c.params.D},
                     {"jc_only", c.jc_only},
                     {"n_sites", c.n_sites}};
    j["n_max"] = c.n_max ? nlohmann::json(*c.n_max) : nlohmann::json(nullptr);
    return j;
}

}  // namespace rabidimer
