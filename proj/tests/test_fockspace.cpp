// test_fockspace.cpp - basis, operators and product states

#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "rabidimer/fockspace.hpp"

using namespace rabidimer;

namespace {

Eigen::MatrixXcd dense(const OperatorMatrix& op) { return Eigen::MatrixXcd(op.matrix()); }

}  // namespace

TEST(FockSpace, Dimensions) {
    EXPECT_EQ(FockSpace(5, 1).dim(), 12);
    EXPECT_EQ(FockSpace(5, 2).dim(), 144);
    EXPECT_EQ(FockSpace(0, 2).dim(), 4);
    EXPECT_THROW(FockSpace(-1, 1), ConfigError);
    EXPECT_THROW(FockSpace(3, 3), ConfigError);
    EXPECT_THROW(FockSpace(1 << 30, 2), ConfigError);
}

TEST(FockSpace, IndexBijection) {
    for (int sites : {1, 2}) {
        const FockSpace s(7, sites);
        for (Index i = 0; i < s.dim(); ++i) EXPECT_EQ(s.index(s.label(i)), i);
    }
    const FockSpace s(3, 2);
    // every label maps to a distinct index
    std::vector<int> hit(static_cast<std::size_t>(s.dim()), 0);
    for (int nl = 0; nl <= 3; ++nl)
        for (int sl = 0; sl < 2; ++sl)
            for (int nr = 0; nr <= 3; ++nr)
                for (int sr = 0; sr < 2; ++sr)
                    ++hit[static_cast<std::size_t>(
                        s.index({{nl, static_cast<Spin>(sl)}, {nr, static_cast<Spin>(sr)}}))];
    for (int h : hit) EXPECT_EQ(h, 1);
    EXPECT_THROW(s.index({{4, Spin::down}, {0, Spin::down}}), ConfigError);
}

TEST(Operators, LadderMatrixElements) {
    const FockSpace s(6, 1);
    const Eigen::MatrixXcd a = dense(annihilator(s));
    for (int n = 1; n <= 6; ++n)
        for (int sp = 0; sp < 2; ++sp)
            EXPECT_NEAR(std::abs(a(2 * (n - 1) + sp, 2 * n + sp) - std::sqrt(double(n))), 0.0, 1e-15);
    EXPECT_NEAR((a.adjoint() - dense(creator(s))).norm(), 0.0, 1e-15);
    // [a, a^dag] = 1 except on the truncation edge
    const Eigen::MatrixXcd comm = a * a.adjoint() - a.adjoint() * a;
    for (Index i = 0; i < s.dim() - 2; ++i) EXPECT_NEAR(std::abs(comm(i, i) - 1.0), 0.0, 1e-13);
    EXPECT_NEAR((dense(number(s)) - a.adjoint() * a).norm(), 0.0, 1e-13);
}

TEST(Operators, SitesCommute) {
    const FockSpace s(4, 2);
    const Eigen::MatrixXcd aL = dense(annihilator(s, Site::left));
    const Eigen::MatrixXcd aR = dense(annihilator(s, Site::right));
    EXPECT_NEAR((aL * aR - aR * aL).norm(), 0.0, 1e-13);
    EXPECT_NEAR((aL * aR.adjoint() - aR.adjoint() * aL).norm(), 0.0, 1e-13);
    const Eigen::MatrixXcd sx = dense(pauli(s, Site::left, PauliAxis::x));
    EXPECT_NEAR((sx * aR - aR * sx).norm(), 0.0, 1e-13);
}

TEST(Operators, PauliAlgebra) {
    const FockSpace s(2, 1);
    const Eigen::MatrixXcd x = dense(pauli(s, Site::left, PauliAxis::x));
    const Eigen::MatrixXcd y = dense(pauli(s, Site::left, PauliAxis::y));
    const Eigen::MatrixXcd z = dense(pauli(s, Site::left, PauliAxis::z));
    const Eigen::MatrixXcd id = Eigen::MatrixXcd::Identity(s.dim(), s.dim());
    const cplx i(0.0, 1.0);
    EXPECT_NEAR((x * y - y * x - 2.0 * i * z).norm(), 0.0, 1e-14);
    EXPECT_NEAR((x * x - id).norm(), 0.0, 1e-14);
    EXPECT_NEAR((z * z - id).norm(), 0.0, 1e-14);
    const Eigen::MatrixXcd p = dense(pauli(s, Site::left, PauliAxis::plus));
    EXPECT_NEAR((p - 0.5 * (x + i * y)).norm(), 0.0, 1e-14);
    // spin-up has sigma_z = +1
    EXPECT_NEAR(z(1, 1).real(), 1.0, 0.0);
    EXPECT_NEAR(z(0, 0).real(), -1.0, 0.0);
}

TEST(Operators, HermitianFlagArithmetic) {
    const FockSpace s(3, 1);
    const OperatorMatrix n = number(s);
    EXPECT_TRUE(n.hermitian());
    EXPECT_TRUE(n.is_real());
    EXPECT_FALSE((cplx(0.0, 1.0) * n).hermitian());
    EXPECT_FALSE((cplx(0.0, 1.0) * n).is_real());
    EXPECT_THROW(number(s) + number(FockSpace(4, 1)), ConfigError);
}

TEST(States, ProductStateLayout) {
    const FockSpace s(5, 2);
    const StateVector psi = product_state(s, {{FockSpec{3}, Spin::up}, {FockSpec{1}, Spin::down}});
    EXPECT_NEAR(psi.norm(), 1.0, 1e-15);
    const Index i = s.index({{3, Spin::up}, {1, Spin::down}});
    EXPECT_NEAR(std::abs(psi.amplitudes()(i)), 1.0, 1e-15);
    EXPECT_NEAR(expectation(number(s, Site::left), psi).real(), 3.0, 1e-14);
    EXPECT_NEAR(expectation(number(s, Site::right), psi).real(), 1.0, 1e-14);
    EXPECT_THROW(product_state(s, {{FockSpec{6}, Spin::up}, {FockSpec{0}, Spin::down}}), ConfigError);
    EXPECT_THROW(product_state(s, {{FockSpec{0}, Spin::up}}), ConfigError);
}

TEST(States, CoherentMoments) {
    const FockSpace s(40, 1);
    const cplx alpha(1.5, -0.7);
    const StateVector psi = product_state(s, {{CoherentSpec{alpha}, Spin::down}});
    // a|alpha> = alpha|alpha>
    EXPECT_NEAR(std::abs(expectation(annihilator(s), psi) - alpha), 0.0, 1e-10);
    const double n = std::norm(alpha);
    EXPECT_NEAR(expectation(number(s), psi).real(), n, 1e-10);
    const OperatorMatrix N = number(s);
    EXPECT_NEAR(expectation(N * N, psi).real() - n * n, n, 1e-9);  // Poisson
    EXPECT_THROW(product_state(FockSpace(3, 1), {{CoherentSpec{alpha}, Spin::down}}), TruncationError);
}

TEST(States, CoherentTailMatchesDirectSum) {
    const cplx alpha(2.0, 0.0);
    const double x = std::norm(alpha);
    for (int n_max : {2, 5, 10}) {
        double head = 0.0, term = std::exp(-x);
        for (int k = 0; k <= n_max; ++k) {
            head += term;
            term *= x / (k + 1);
        }
        EXPECT_NEAR(coherent_tail(alpha, n_max), 1.0 - head, 1e-13);
    }
    EXPECT_EQ(coherent_tail(0.0, 3), 0.0);
}

// D(alpha)|n>: <N> = n + |alpha|^2 and Var N = |alpha|^2 (2n + 1).
TEST(States, DisplacedFockMoments) {
    const FockSpace s(60, 1);
    const StateVector psi = displaced_fock(s, 1, 1.0);
    const OperatorMatrix N = number(s);
    const double m = expectation(N, psi).real();
    EXPECT_NEAR(m, 2.0, 1e-9);
    EXPECT_NEAR(expectation(N * N, psi).real() - m * m, 3.0, 1e-9);
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(-2.0, 2.0);
    for (int rep = 0; rep < 5; ++rep) {
        const cplx a(u(rng), u(rng));
        const int n = static_cast<int>(rng() % 6);
        const StateVector p = displaced_fock(s, n, a);
        const double mean = expectation(N, p).real();
        EXPECT_NEAR(mean, n + std::norm(a), 1e-8);
        EXPECT_NEAR(expectation(N * N, p).real() - mean * mean, std::norm(a) * (2 * n + 1), 1e-7);
        EXPECT_NEAR(std::abs(expectation(annihilator(s), p) - a), 0.0, 1e-9);
    }
}

TEST(States, DisplacedVacuumIsCoherent) {
    const FockSpace s(40, 1);
    const cplx a(0.8, 0.3);
    const StateVector d = displaced_fock(s, 0, a);
    const StateVector c = product_state(s, {{CoherentSpec{a}, Spin::down}});
    EXPECT_NEAR(std::abs(d.amplitudes().dot(c.amplitudes())), 1.0, 1e-12);
}

TEST(Truncation, DefaultNmax) {
    EXPECT_EQ(default_n_max(20, 2.0), 96);
    EXPECT_EQ(default_n_max(0, 0.0), 6);
    EXPECT_GE(default_n_max(20, 0.01), 26);
    // monotone in both arguments
    for (int n = 0; n < 30; n += 5)
        for (double g = 0.0; g < 3.0; g += 0.25) {
            EXPECT_LE(default_n_max(n, g), default_n_max(n + 1, g));
            EXPECT_LE(default_n_max(n, g), default_n_max(n, g + 0.25));
        }
    EXPECT_THROW(default_n_max(-1, 1.0), ConfigError);
    EXPECT_THROW(default_n_max(1, -1.0), ConfigError);
}

TEST(Sector, RestrictEmbedRoundTrip) {
    const FockSpace s(3, 1);
    const Sector sec = Sector::from_indices(s, {0, 3, 5}, "sub");
    EXPECT_EQ(sec.dim(), 3);
    Eigen::VectorXcd v = Eigen::VectorXcd::Zero(s.dim());
    v(3) = cplx(0.5, -0.25);
    v(5) = cplx(0.0, 1.0);
    EXPECT_NEAR((sec.embed(sec.restrict(v)) - v).norm(), 0.0, 0.0);
    const Sector whole(s);
    EXPECT_TRUE(whole.whole());
    EXPECT_EQ(whole.dim(), s.dim());
}
