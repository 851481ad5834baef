#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "pfb/cli.hpp"

using namespace pfb;

namespace {

std::string slurp(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

std::string tmp_path(const std::string& name) { return std::string(::testing::TempDir()) + name; }

int run_cli(const std::string& args) {
    const std::string cmd = std::string(PFB_CLI_PATH) + " " + args + " >/dev/null 2>&1";
    const int rc = std::system(cmd.c_str());
    return WEXITSTATUS(rc);
}

}  // namespace

TEST(RunConfig, StrictKeysRejected) {
    RunConfig cfg;
    nlohmann::json good = {{"scenario", "flat_torus_u1"}, {"dt", 1e-3}, {"n_paths", 100}};
    parse_config_json(good, cfg);
    EXPECT_EQ(cfg.scenario, "flat_torus_u1");

    nlohmann::json bad = {{"scenario", "flat_torus_u1"}, {"dtt", 1e-3}};
    EXPECT_THROW(parse_config_json(bad, RunConfig{}.points.empty() ? cfg : cfg), Error);

    nlohmann::json badfmt = {{"scenario", "flat_torus_u1"}, {"format", "xml"}};
    RunConfig c2;
    EXPECT_THROW(parse_config_json(badfmt, c2), Error);

    nlohmann::json baddt = {{"scenario", "flat_torus_u1"}, {"dt", -1.0}};
    RunConfig c3;
    EXPECT_THROW(parse_config_json(baddt, c3), Error);
}

TEST(CmdReport, FlatTorusAllZero) {
    RunConfig cfg;
    cfg.scenario = "flat_torus_u1";
    cfg.out = tmp_path("report_flat.json");
    EXPECT_EQ(cmd_report(cfg), exit_pass);
    nlohmann::json doc = nlohmann::json::parse(slurp(cfg.out));
    ASSERT_GT(doc["rows"].size(), 0u);
    for (const auto& row : doc["rows"]) {
        EXPECT_TRUE(row["pass"].get<bool>()) << row.dump();
        if (row["quantity"] == "Jtilde_coords") {
            EXPECT_NEAR(row["value"].get<double>(), 0.0, 1e-8);
        }
    }
}

TEST(CmdReport, PolarJacobianColumn) {
    RunConfig cfg;
    cfg.scenario = "polar_plane_u1";
    Vec p1(2), p2(2), p3(2);
    p1 << 0.5, 0.0;
    p2 << 1.0, 0.0;
    p3 << 2.0, 0.0;
    cfg.points = {p1, p2, p3};
    cfg.out = tmp_path("report_polar.json");
    EXPECT_EQ(cmd_report(cfg), exit_pass);
    nlohmann::json doc = nlohmann::json::parse(slurp(cfg.out));
    std::vector<double> jt;
    for (const auto& row : doc["rows"])
        if (row["quantity"] == "Jtilde_coords") jt.push_back(row["value"].get<double>());
    ASSERT_EQ(jt.size(), 3u);
    EXPECT_NEAR(jt[0], -4.0, 4e-6);
    EXPECT_NEAR(jt[1], -1.0, 1e-6);
    EXPECT_NEAR(jt[2], -0.25, 1e-6);
}

TEST(CmdReport, ImpossibleToleranceFails) {
    RunConfig cfg;
    cfg.scenario = "polar_plane_u1";
    cfg.tolerance = 1e-20;
    cfg.out = tmp_path("report_tight.json");
    EXPECT_EQ(cmd_report(cfg), exit_numeric_failure);
}

TEST(CmdVerify, FlatAndHopfPass) {
    for (const char* name : {"flat_torus_u1", "hopf_s3"}) {
        RunConfig cfg;
        cfg.scenario = name;
        cfg.out = tmp_path(std::string("verify_") + name + ".json");
        EXPECT_EQ(cmd_verify(cfg), exit_pass) << name;
        nlohmann::json doc = nlohmann::json::parse(slurp(cfg.out));
        bool saw_decomposition = false;
        for (const auto& row : doc["rows"]) {
            EXPECT_TRUE(row["pass"].get<bool>()) << name << ": " << row.dump();
            if (row["quantity"] == "decomposition_residual") saw_decomposition = true;
        }
        EXPECT_TRUE(saw_decomposition);
    }
}

TEST(CmdVerify, UnknownScenarioUsageError) {
    RunConfig cfg;
    cfg.scenario = "bogus";
    EXPECT_EQ(cmd_verify(cfg), exit_usage);
    EXPECT_EQ(cmd_report(cfg), exit_usage);
}

TEST(CmdSimulate, SmallRunPassesAndIsByteDeterministic) {
    RunConfig cfg;
    cfg.scenario = "flat_torus_u1";
    cfg.n_paths = 2000;
    cfg.dt = 2e-3;
    cfg.t_final = 0.1;
    cfg.seed = 99;
    cfg.out = tmp_path("sim_a.json");
    EXPECT_EQ(cmd_simulate(cfg), exit_pass);
    RunConfig cfg2 = cfg;
    cfg2.out = tmp_path("sim_b.json");
    EXPECT_EQ(cmd_simulate(cfg2), exit_pass);
    std::string a = slurp(cfg.out), b = slurp(cfg2.out);
    EXPECT_FALSE(a.empty());
    EXPECT_EQ(a, b);  // byte-identical replay under a fixed seed
}

TEST(CmdSimulate, CsvFormatHeader) {
    RunConfig cfg;
    cfg.scenario = "flat_torus_u1";
    cfg.n_paths = 200;
    cfg.dt = 5e-3;
    cfg.t_final = 0.05;
    cfg.format = "csv";
    cfg.out = tmp_path("sim.csv");
    EXPECT_EQ(cmd_simulate(cfg), exit_pass);
    const std::string text = slurp(cfg.out);
    EXPECT_EQ(text.rfind("command,quantity,point,value,oracle,residual,tolerance,pass,provenance\n", 0), 0u);
}

// end-to-end through the executable: argv handling and the exit-code contract
TEST(CliBinary, ExitCodes) {
    EXPECT_EQ(run_cli("list"), exit_pass);
    EXPECT_EQ(run_cli("report --scenario flat_torus_u1"), exit_pass);
    EXPECT_EQ(run_cli("report --scenario no_such_scenario"), exit_usage);
    EXPECT_EQ(run_cli("report"), exit_usage);  // missing scenario
    EXPECT_EQ(run_cli("simulate --scenario flat_torus_u1 --paths 0"), exit_usage);
    EXPECT_EQ(run_cli("report --scenario polar_plane_u1 --tol 1e-20"), exit_numeric_failure);
}

TEST(CliBinary, ConfigFileRoundTrip) {
    const std::string cfg_path = tmp_path("run_cfg.json");
    {
        std::ofstream f(cfg_path);
        f << R"({"scenario": "polar_plane_u1", "points": [[2.0, 0.0]], "format": "csv"})";
    }
    EXPECT_EQ(run_cli("report --config " + cfg_path), exit_pass);

    const std::string bad_path = tmp_path("bad_cfg.json");
    {
        std::ofstream f(bad_path);
        f << R"({"scenario": "polar_plane_u1", "unknown_knob": 3})";
    }
    EXPECT_EQ(run_cli("report --config " + bad_path), exit_usage);

    const std::string corrupt_path = tmp_path("corrupt_cfg.json");
    {
        std::ofstream f(corrupt_path);
        f << "{ not json";
    }
    EXPECT_EQ(run_cli("verify --config " + corrupt_path), exit_usage);
}
