// test_sweep.cpp - grid sweeps, checkpoints and phase labels

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "rabidimer/sweep.hpp"

using namespace rabidimer;
namespace fs = std::filesystem;

namespace {

GridSpec small_grid() {
    GridSpec s;
    s.g = {0.05, 0.6, 3, Spacing::log, {}};
    s.J = {0.02, 0.08, 2, Spacing::linear, {}};
    s.n_i = 3;
    return s;
}

SweepTemplate small_template() {
    SweepTemplate t;
    t.n_max = 20;
    return t;
}

EvolutionPlan short_plan() {
    EvolutionPlan p;
    p.t_final = 30.0;
    p.dt_sample = 1.0;
    return p;
}

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("rabidimer_test_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

void expect_same(const PhaseGrid& a, const PhaseGrid& b) {
    ASSERT_EQ(a.cells.size(), b.cells.size());
    for (std::size_t i = 0; i < a.cells.size(); ++i) {
        EXPECT_EQ(a.cells[i].z_avg, b.cells[i].z_avg) << i;
        EXPECT_EQ(a.cells[i].status, b.cells[i].status) << i;
    }
}

}  // namespace

TEST(Axis, Values) {
    const Axis lg{0.01, 1.0, 3, Spacing::log, {}};
    const auto v = lg.values();
    ASSERT_EQ(v.size(), 3u);
    EXPECT_NEAR(v[1], 0.1, 1e-15);
    EXPECT_DOUBLE_EQ(v[2], 1.0);
    const Axis lin{0.0, 1.0, 5, Spacing::linear, {}};
    EXPECT_DOUBLE_EQ(lin.values()[2], 0.5);
    const Axis ex{0, 0, 1, Spacing::log, {0.3, 0.1}};
    EXPECT_THROW(ex.validate("x"), ConfigError);  // not increasing
    EXPECT_THROW((Axis{0.0, 1.0, 3, Spacing::log, {}}.validate("x")), ConfigError);
    const GridSpec ci = GridSpec::ci();
    EXPECT_EQ(ci.g.values().size(), 8u);
    EXPECT_EQ(ci.J.values().size(), 5u);
}

TEST(Sweep, CellsMatchDirectEvolution) {
    const GridSpec spec = small_grid();
    const PhaseGrid grid = run_sweep(spec, small_template(), short_plan(), 1);
    for (const CellResult& c : grid.cells) {
        ASSERT_EQ(c.status, CellStatus::done) << c.error;
        const FockSpace s(20, 2);
        const OperatorMatrix H = build_dimer(s, DimerParams::identical({1.0, 1.0, c.g}, c.J));
        const StateVector psi = product_state(s, {{FockSpec{3}, Spin::down}, {FockSpec{0}, Spin::down}});
        const EvolutionResult r = evolve(H, psi, short_plan(), standard_observables(s));
        EXPECT_NEAR(c.z_avg, time_average(imbalance(r.at("N_L"), r.at("N_R"))), 1e-9);
        EXPECT_EQ(c.n_max, 20);
    }
}

TEST(Sweep, WorkerCountDoesNotChangeResults) {
    const PhaseGrid a = run_sweep(small_grid(), small_template(), short_plan(), 1);
    const PhaseGrid b = run_sweep(small_grid(), small_template(), short_plan(), 3);
    expect_same(a, b);
}

// Starting on the right mirrors the dynamics: z -> -z.
TEST(Sweep, SwapNegatesImbalance) {
    GridSpec right = small_grid();
    right.initial_site = Site::right;
    const PhaseGrid a = run_sweep(small_grid(), small_template(), short_plan(), 1);
    const PhaseGrid b = run_sweep(right, small_template(), short_plan(), 1);
    for (std::size_t i = 0; i < a.cells.size(); ++i) EXPECT_NEAR(a.cells[i].z_avg, -b.cells[i].z_avg, 1e-9);
}

TEST(Sweep, ResumesFromCheckpoint) {
    const fs::path dir = scratch("resume");
    const std::string ck = (dir / "checkpoint.jsonl").string();
    const PhaseGrid full = run_sweep(small_grid(), small_template(), short_plan(), 1, ck);

    // keep the header and two cells, then tear the next record mid-line
    std::vector<std::string> lines;
    {
        std::ifstream f(ck);
        for (std::string l; std::getline(f, l);) lines.push_back(l);
    }
    ASSERT_EQ(lines.size(), 1u + full.cells.size());
    auto write_log = [&](const std::string& tail) {
        std::ofstream f(ck, std::ios::trunc);
        f << lines[0] << '\n' << lines[1] << '\n' << lines[2] << '\n' << tail;
    };
    const std::string torn = lines[3].substr(0, lines[3].size() / 2);

    // a corrupt record followed by more data is an error
    write_log(torn + "\n" + lines[4] + "\n");
    EXPECT_THROW(run_sweep(small_grid(), small_template(), short_plan(), 1, ck), ConfigError);

    // a torn final record is dropped and recomputed
    write_log(torn);
    EXPECT_EQ(detail::read_log(ck).size(), 3u);
    SweepProgress prog;
    const PhaseGrid resumed = run_sweep(small_grid(), small_template(), short_plan(), 2, ck, &prog);
    EXPECT_EQ(prog.resumed, 2u);
    EXPECT_EQ(prog.computed, full.cells.size() - 2);
    expect_same(full, resumed);
    // the repaired log is complete and parses cleanly
    EXPECT_EQ(detail::read_log(ck).size(), 1u + full.cells.size());
    SweepProgress again;
    run_sweep(small_grid(), small_template(), short_plan(), 1, ck, &again);
    EXPECT_EQ(again.computed, 0u);

    // a different configuration must not reuse the log
    EvolutionPlan other = short_plan();
    other.t_final = 40.0;
    EXPECT_THROW(run_sweep(small_grid(), small_template(), other, 1, ck), ConfigError);
    fs::remove_all(dir);
}

TEST(Sweep, TruncationFailureIsRecorded) {
    GridSpec spec = small_grid();
    spec.n_i = 8;
    SweepTemplate t = small_template();
    t.n_max = 8;
    const PhaseGrid grid = run_sweep(spec, t, short_plan(), 1);
    std::size_t failed = 0;
    for (const auto& c : grid.cells) {
        if (c.status == CellStatus::failed) {
            ++failed;
            EXPECT_NE(c.error.find("truncation"), std::string::npos);
        }
    }
    EXPECT_GT(failed, 0u);
    const LabelMatrix labels = classify(grid, 0.5);
    for (std::size_t j = 0; j < grid.rows(); ++j)
        for (std::size_t g = 0; g < grid.cols(); ++g) {
            if (grid.cell(j, g).status == CellStatus::failed) {
                EXPECT_EQ(labels[j][g], PhaseLabel::unknown);
            }
        }
}

TEST(Classify, BoundaryOnSyntheticGrid) {
    PhaseGrid grid;
    grid.g_values = {0.01, 0.1, 1.0, 10.0};
    grid.J_values = {0.001, 0.01, 0.1};
    grid.n_i = 10;
    // localized only in the middle of the two lower rows
    const double z[3][4] = {{1, 9, 8, 1}, {0, 6, 2, 0}, {0, 1, 1, 0}};
    for (std::size_t j = 0; j < 3; ++j)
        for (std::size_t g = 0; g < 4; ++g) {
            CellResult c;
            c.gi = g;
            c.ji = j;
            c.g = grid.g_values[g];
            c.J = grid.J_values[j];
            c.z_avg = z[j][g];
            c.status = CellStatus::done;
            grid.cells.push_back(c);
        }
    const LabelMatrix labels = classify(grid, 0.5);
    EXPECT_EQ(labels[0][1], PhaseLabel::localized);
    EXPECT_EQ(labels[1][2], PhaseLabel::delocalized);
    const Boundary b = boundary_extract(grid, labels);
    ASSERT_TRUE(b.J_c.has_value());
    EXPECT_DOUBLE_EQ(*b.J_c, 0.01);
    const auto tr = transitions_along_g(grid, labels, 0);
    ASSERT_EQ(tr.size(), 2u);
    EXPECT_NEAR(tr[0].first, std::sqrt(0.001), 1e-15);
    EXPECT_EQ(tr[0].second, PhaseLabel::localized);
    EXPECT_NEAR(tr[1].first, std::sqrt(10.0), 1e-12);

    const fs::path dir = scratch("phase_out");
    write_phase_outputs(dir.string(), grid, labels, 0.5);
    EXPECT_TRUE(fs::exists(dir / "phase_grid.csv"));
    std::ifstream f(dir / "phase_grid.json");
    const nlohmann::json j = nlohmann::json::parse(f);
    EXPECT_EQ(j.at("threshold"), 0.5);
    fs::remove_all(dir);
}
