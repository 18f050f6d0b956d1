// test_cli.cpp - run configuration and the command-line tool

#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sys/wait.h>

#include "rabidimer/config.hpp"
#include "rabidimer/propagate.hpp"

using namespace rabidimer;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("rabidimer_cli_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

fs::path write_config(const fs::path& dir, const std::string& text) {
    const fs::path p = dir / "config.json";
    std::ofstream(p) << text;
    return p;
}

struct CliRun {
    int code = -1;
    std::string out;
};

CliRun run_cli(const std::string& args) {
    const std::string cmd = std::string(RABIDIMER_CLI) + " " + args + " 2>&1";
    CliRun r;
    FILE* p = ::popen(cmd.c_str(), "r");
    if (!p) return r;
    char buf[512];
    while (std::fgets(buf, sizeof buf, p)) r.out += buf;
    const int st = ::pclose(p);
    r.code = WIFEXITED(st) ? WEXITSTATUS(st) : -1;
    return r;
}

const char* kSmall = R"({
  "model": {"g": 0.3, "J": 0.05, "n_max": 14},
  "initial_state": {"sites": [{"fock": 3}, {"fock": 0, "spin": "up"}]},
  "evolution": {"t_final": 20, "dt_sample": 0.5, "transient_end": 10}
})";

}  // namespace

TEST(Config, Defaults) {
    const RunConfig c = run_config_from_json(json::object());
    EXPECT_EQ(c.model.n_sites, 2);
    ASSERT_EQ(c.initial_state.size(), 2u);
    EXPECT_EQ(std::get<FockSpec>(c.initial_state[0].field).n, 20);
    EXPECT_EQ(c.evolution.plan.t_final, 2.0e4);
    EXPECT_FALSE(c.damping.has_value());
    EXPECT_EQ(c.resolved_n_max(), default_n_max(20, 0.0));
}

TEST(Config, RejectsInvalidDocuments) {
    const std::vector<std::string> bad{
        R"({"modle": {}})",
        R"({"model": {"g": -0.1}})",
        R"({"evolution": {"t_final": 10, "dt_sample": 20}})",
        R"({"evolution": {"engine": "magic"}})",
        R"({"evolution": {"tfinal": 10}})",
        R"({"initial_state": {"sites": [{"fock": 1}]}})",
        R"({"initial_state": {"sites": [{"fock": 1, "coherent": 0.5}, {"fock": 0}]}})",
        R"({"initial_state": {"sites": [{"fock": 1, "spin": "sideways"}, {"fock": 0}]}})",
        R"({"damping": {"tau_gamma": 0.0}})",
        R"({"damping": {"n_traj": 0}})",
        R"({"sweep": {"threshold": 1.5}})",
        R"({"sweep": {"preset": "huge"}})",
        R"({"spectrum": {"k_levels": 1}})",
        R"({"output": {"formats": ["png"]}})",
    };
    for (const auto& doc : bad) EXPECT_THROW(run_config_from_json(json::parse(doc)), ConfigError) << doc;
}

TEST(Config, ParseErrorsCarryPosition) {
    const fs::path dir = scratch("parse");
    const fs::path p = write_config(dir, "{\n  \"model\": {\"g\": 1.0,,}\n}\n");
    try {
        load_run_config(p.string());
        FAIL() << "expected ConfigError";
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos) << e.what();
    }
    EXPECT_THROW(load_run_config((dir / "missing.json").string()), ConfigError);
    fs::remove_all(dir);
}

// The resolved document re-parses to the same configuration.
TEST(Config, ResolvedRoundTrip) {
    const json doc = json::parse(R"({
      "model": {"g": 0.2, "J": 0.01},
      "initial_state": {"sites": [{"coherent": [1.0, 0.5], "spin": "up"}, {"fock": 2}]},
      "damping": {"tau_gamma": null, "n_traj": 10},
      "sweep": {"preset": "ci"},
      "spectrum": {"k_levels": 50}})");
    const RunConfig c = run_config_from_json(doc);
    EXPECT_EQ(c.damping->kappa(), 0.0);
    const json r = resolved(c);
    EXPECT_EQ(r.at("model").at("n_max"), c.resolved_n_max());
    const RunConfig back = run_config_from_json(r);
    EXPECT_EQ(resolved(back), r);
    EXPECT_EQ(back.sweep->g.values(), GridSpec::ci().g.values());
}

TEST(Cli, MalformedConfigExitsTwo) {
    const fs::path dir = scratch("malformed");
    const fs::path p = write_config(dir, R"({"model": {"g": 1.0, "bogus": 2}})");
    const CliRun r = run_cli("evolve --config " + p.string() + " --out " + (dir / "out").string());
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.out.find("model: unknown key 'bogus'"), std::string::npos) << r.out;
    EXPECT_EQ(run_cli("evolve").code, 2);                       // missing --config
    EXPECT_EQ(run_cli("teleport --config x").code, 2);          // unknown subcommand
    EXPECT_EQ(run_cli("evolve --config " + p.string() + " --workers 0").code, 2);
    EXPECT_EQ(run_cli("sweep --config " + write_config(dir, kSmall).string() + " --out " + (dir / "o2").string()).code, 2);
    fs::remove_all(dir);
}

TEST(Cli, EvolveWritesArtifacts) {
    const fs::path dir = scratch("evolve");
    const fs::path p = write_config(dir, kSmall);
    const fs::path out = dir / "out";
    const CliRun r = run_cli("evolve --config " + p.string() + " --out " + out.string() + " --workers 1");
    ASSERT_EQ(r.code, 0) << r.out;
    for (const char* f : {"traces.csv", "traces.dat", "summary.json", "resolved_config.json", "run_info.json"})
        EXPECT_TRUE(fs::exists(out / f)) << f;
    const std::vector<TimeSeries> tr = read_csv((out / "traces.csv").string());
    std::vector<std::string> labels;
    for (const auto& s : tr) labels.push_back(s.label);
    EXPECT_EQ(labels, (std::vector<std::string>{"N_L", "N_R", "sz_L", "sz_R", "H", "z", "z_norm"}));
    EXPECT_EQ(tr[0].size(), 41u);
    EXPECT_EQ(tr[0].values[0], 3.0);

    // the resolved config reproduces the run exactly
    const fs::path out2 = dir / "rerun";
    ASSERT_EQ(run_cli("evolve --config " + (out / "resolved_config.json").string() + " --out " + out2.string()).code, 0);
    const std::vector<TimeSeries> tr2 = read_csv((out2 / "traces.csv").string());
    for (std::size_t k = 0; k < tr.size(); ++k) EXPECT_EQ(tr[k].values, tr2[k].values);

    std::ifstream info(out / "run_info.json");
    const json j = json::parse(info);
    EXPECT_EQ(j.at("command"), "evolve");
    EXPECT_TRUE(j.contains("version"));
    fs::remove_all(dir);
}

TEST(Cli, StarvedTruncationExitsThree) {
    const fs::path dir = scratch("starved");
    const fs::path p = write_config(dir, R"({
      "model": {"g": 2.0, "n_sites": 1, "n_max": 6},
      "initial_state": {"sites": [{"fock": 0}]},
      "evolution": {"t_final": 10, "dt_sample": 1}})");
    const CliRun r = run_cli("evolve --config " + p.string() + " --out " + (dir / "out").string());
    EXPECT_EQ(r.code, 3) << r.out;
    std::ifstream f(dir / "out" / "summary.json");
    EXPECT_EQ(json::parse(f).at("truncation_ok"), false);
    fs::remove_all(dir);
}

TEST(Cli, RenormIdentityAtZeroD) {
    const fs::path dir = scratch("renorm");
    const fs::path p = write_config(dir, R"({"model": {"g": 0.7, "J": 0.02}})");
    const CliRun r = run_cli("renorm --config " + p.string() + " --out " + (dir / "out").string());
    ASSERT_EQ(r.code, 0) << r.out;
    const json j = json::parse(r.out);
    EXPECT_EQ(j.at("omega0"), 1.0);
    EXPECT_EQ(j.at("g"), 0.7);
    EXPECT_EQ(j.at("J"), 0.02);
    EXPECT_EQ(j.at("r"), 0.0);
    EXPECT_TRUE(fs::exists(dir / "out" / "renorm.dat"));
    fs::remove_all(dir);
}

TEST(Cli, TrajectoriesSeedFlag) {
    const fs::path dir = scratch("traj");
    const fs::path p = write_config(dir, R"({
      "model": {"g": 0.3, "n_sites": 1, "n_max": 20},
      "initial_state": {"sites": [{"fock": 4}]},
      "evolution": {"t_final": 10, "dt_sample": 1},
      "damping": {"tau_gamma": 5, "n_traj": 6}})");
    auto mean = [&](const std::string& extra, const std::string& tag) {
        const fs::path out = dir / tag;
        const CliRun r = run_cli("trajectories --config " + p.string() + " --out " + out.string() + " " + extra);
        EXPECT_EQ(r.code, 0) << r.out;
        return read_csv((out / "mean.csv").string())[0].values;
    };
    const auto a = mean("--seed 5 --workers 1", "a");
    const auto b = mean("--seed 5 --workers 2", "b");
    const auto c = mean("--seed 6", "c");
    EXPECT_EQ(a, b);
    EXPECT_NE(a, c);
    std::ifstream f(dir / "a" / "resolved_config.json");
    EXPECT_EQ(json::parse(f).at("damping").at("master_seed"), 5);
    fs::remove_all(dir);
}

TEST(Cli, SampleConfigsParse) {
    for (const auto& e : fs::directory_iterator(fs::path(RABIDIMER_SOURCE_DIR) / "configs")) {
        if (e.path().extension() == ".json") {
            EXPECT_NO_THROW(load_run_config(e.path().string())) << e.path();
        }
    }
}
