// test_propagate.cpp - time evolution engines

#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "rabidimer/observables.hpp"
#include "rabidimer/propagate.hpp"

using namespace rabidimer;

namespace {

StateVector fock_pair(const FockSpace& s, int nl, int nr, Spin sl = Spin::down, Spin sr = Spin::down) {
    return product_state(s, {{FockSpec{nl}, sl}, {FockSpec{nr}, sr}});
}

EvolutionPlan plan_for(Engine e, double T, double dt) {
    EvolutionPlan p;
    p.engine = e;
    p.t_final = T;
    p.dt_sample = dt;
    return p;
}

// exp(-iHt) psi by dense eigendecomposition.
Eigen::VectorXcd oracle_evolve(const OperatorMatrix& H, const Eigen::VectorXcd& psi, double t) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(Eigen::MatrixXcd(H.matrix()));
    const Eigen::VectorXcd c = es.eigenvectors().adjoint() * psi;
    Eigen::VectorXcd ph(c.size());
    for (Index k = 0; k < c.size(); ++k) ph(k) = std::exp(cplx(0.0, -t * es.eigenvalues()(k))) * c(k);
    return es.eigenvectors() * ph;
}

}  // namespace

class BeamSplitter : public ::testing::TestWithParam<Engine> {};

// g = 0: photons hop coherently, z(t) = n cos(2Jt).
TEST_P(BeamSplitter, ImbalanceIsCosine) {
    const FockSpace s(10, 2);
    const double J = 0.05;
    const OperatorMatrix H = build_dimer(s, DimerParams::identical({1.0, 1.0, 0.0}, J));
    const EvolutionResult r = evolve(H, fock_pair(s, 10, 0), plan_for(GetParam(), 100.0, 0.5), standard_observables(s));
    const TimeSeries z = imbalance(r.at("N_L"), r.at("N_R"));
    double worst = 0.0;
    for (std::size_t i = 0; i < z.size(); ++i)
        worst = std::max(worst, std::abs(z.values[i] - 10.0 * std::cos(2.0 * J * z.times[i])));
    EXPECT_LT(worst, 1e-7);
    EXPECT_EQ(r.diagnostics.engine, GetParam());
}

INSTANTIATE_TEST_SUITE_P(Engines, BeamSplitter, ::testing::Values(Engine::full_diag, Engine::krylov));

TEST(Evolve, EnginesAgreeWithDenseOracle) {
    const FockSpace s(6, 2);
    const OperatorMatrix H = build_dimer(s, DimerParams::identical({1.0, 0.8, 0.6}, 0.07));
    const StateVector psi0 = fock_pair(s, 3, 1, Spin::up, Spin::down);
    const std::vector<Observable> obs = standard_observables(s, &H);
    const EvolutionResult a = evolve(H, psi0, plan_for(Engine::full_diag, 30.0, 1.0), obs);
    const EvolutionResult b = evolve(H, psi0, plan_for(Engine::krylov, 30.0, 1.0), obs);
    const OperatorMatrix NL = number(s, Site::left);
    for (std::size_t k = 0; k < a.series[0].size(); ++k) {
        const double t = a.series[0].times[k];
        const Eigen::VectorXcd v = oracle_evolve(H, psi0.amplitudes(), t);
        const double ref = expectation(NL, v).real();
        EXPECT_NEAR(a.at("N_L").values[k], ref, 1e-8) << "t=" << t;
        EXPECT_NEAR(b.at("N_L").values[k], ref, 1e-7) << "t=" << t;
        for (std::size_t o = 0; o < obs.size(); ++o) EXPECT_NEAR(a.series[o].values[k], b.series[o].values[k], 1e-7);
    }
}

// psi0 without definite parity: Krylov runs on the whole space.
TEST(Evolve, MixedParityInitialState) {
    const FockSpace s(5, 2);
    const OperatorMatrix H = build_dimer(s, DimerParams::identical({1.0, 1.0, 0.5}, 0.1));
    Eigen::VectorXcd v = fock_pair(s, 2, 0).amplitudes() + fock_pair(s, 1, 0).amplitudes();
    const StateVector psi0 = StateVector(s, v).normalize();
    const EvolutionResult a = evolve(H, psi0, plan_for(Engine::krylov, 20.0, 1.0), standard_observables(s));
    const EvolutionResult b = evolve(H, psi0, plan_for(Engine::full_diag, 20.0, 1.0), standard_observables(s));
    EXPECT_EQ(a.diagnostics.sector, "all");
    for (std::size_t k = 0; k < a.series[0].size(); ++k) EXPECT_NEAR(a.series[0].values[k], b.series[0].values[k], 1e-7);

    const EvolutionResult c = evolve(H, fock_pair(s, 2, 0), plan_for(Engine::krylov, 5.0, 1.0), standard_observables(s));
    EXPECT_EQ(c.diagnostics.sector, "even");
}

TEST(Evolve, NormAndEnergyConserved) {
    const FockSpace s(24, 2);
    const OperatorMatrix H = build_dimer(s, DimerParams::identical({1.0, 1.0, 1.0}, 0.02));
    for (Engine e : {Engine::full_diag, Engine::krylov}) {
        const EvolutionResult r =
            evolve(H, fock_pair(s, 4, 0), plan_for(e, 200.0, 2.0), standard_observables(s, &H));
        const TimeSeries& E = r.at("H");
        for (double x : E.values) EXPECT_NEAR(x, E.values.front(), 1e-7);
        EXPECT_LT(r.diagnostics.max_norm_drift, 1e-9);
    }
}

TEST(Krylov, TimeReversal) {
    const FockSpace s(12, 2);
    const OperatorMatrix H = build_dimer(s, DimerParams::identical({1.0, 1.0, 0.9}, 0.05));
    std::mt19937_64 rng(3);
    std::normal_distribution<double> n;
    Eigen::VectorXcd v(s.dim());
    for (Index i = 0; i < v.size(); ++i) v(i) = cplx(n(rng), n(rng));
    v.normalize();
    const Eigen::VectorXcd v0 = v;
    KrylovPropagator prop(H.matrix(), true, {30, 1e-12});
    prop.advance(v, 7.5);
    EXPECT_NEAR(v.norm(), 1.0, 1e-12);
    EXPECT_NEAR((v - oracle_evolve(H, v0, 7.5)).norm(), 0.0, 1e-9);
    prop.advance(v, -7.5);
    EXPECT_NEAR((v - v0).norm(), 0.0, 1e-9);
}

TEST(Evolve, SampleGrid) {
    const EvolutionPlan p = plan_for(Engine::automatic, 10.0, 0.1);
    EXPECT_EQ(p.sample_count(), 101u);
    EXPECT_DOUBLE_EQ(p.sample_time(100), 10.0);
    EXPECT_EQ(p.resolve(100), Engine::full_diag);
    EXPECT_EQ(p.resolve(100000), Engine::krylov);
    EXPECT_THROW(plan_for(Engine::krylov, 1.0, 2.0).validate(), ConfigError);
    EvolutionPlan bad = p;
    bad.krylov_dim = 2;
    EXPECT_THROW(bad.validate(), ConfigError);
}

TEST(Evolve, RejectsMismatchedInputs) {
    const FockSpace s(3, 2);
    const OperatorMatrix a = annihilator(s);
    EXPECT_THROW(evolve(a, fock_pair(s, 1, 0), plan_for(Engine::krylov, 1.0, 1.0), {}), ConfigError);
    const OperatorMatrix H = build_dimer(s, DimerParams::identical({1.0, 1.0, 0.1}, 0.1));
    EXPECT_THROW(evolve(H, fock_pair(FockSpace(4, 2), 1, 0), plan_for(Engine::krylov, 1.0, 1.0), {}), ConfigError);
}

// Deep-strong coupling pushes photons far above n_i; a starved truncation
// must be flagged while a generous one converges.
TEST(Truncation, GenerousPassesStarvedFails) {
    const DimerParams p = DimerParams::identical({1.0, 1.0, 2.0}, 0.01);
    auto build_h = [&](const FockSpace& sp) { return build_dimer(sp, p); };
    auto build_psi = [](const FockSpace& sp) { return fock_pair(sp, 20, 0); };
    const EvolutionPlan plan = plan_for(Engine::krylov, 10.0, 0.5);
    const ConvergenceReport good = check_truncation(build_h, build_psi, plan, 2, 96, 8);
    EXPECT_TRUE(good.passed);
    EXPECT_LT(good.max_top_level_mass, 1e-6);
    EXPECT_LT(good.max_imbalance_deviation, 1e-3);
    const ConvergenceReport bad = check_truncation(build_h, build_psi, plan, 2, 25, 8);
    EXPECT_FALSE(bad.passed);
    EXPECT_GT(bad.max_top_level_mass, 1e-6);
}

TEST(Csv, RoundTripIsExact) {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(-1e3, 1e3);
    std::vector<TimeSeries> s(3);
    const char* labels[] = {"N_L", "N_R", "z"};
    for (int k = 0; k < 3; ++k) {
        s[k].label = labels[k];
        for (int i = 0; i < 50; ++i) {
            s[k].times.push_back(0.1 * i);
            s[k].values.push_back(u(rng) * std::pow(10.0, (i % 17) - 8));
        }
    }
    s[2].values[3] = 1.0 / 3.0;
    s[2].values[4] = -0.0;
    s[2].values[5] = 5e-310;
    std::stringstream ss;
    write_csv(ss, s);
    const std::vector<TimeSeries> back = read_csv(ss);
    ASSERT_EQ(back.size(), 3u);
    for (int k = 0; k < 3; ++k) {
        EXPECT_EQ(back[k].label, s[k].label);
        EXPECT_EQ(back[k].times, s[k].times);
        EXPECT_EQ(back[k].values, s[k].values);
    }
}
