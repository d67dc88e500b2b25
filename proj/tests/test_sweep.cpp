#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>
#include <string>

#include <gtest/gtest.h>

#include "lzdiss/sweep.hpp"

using namespace lzdiss;
using namespace lzdiss::sweep;

namespace {

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

int run_cli(const std::string& args) {
    const std::string cmd = std::string(LZDISS_CLI) + " " + args + " 2>/dev/null";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::filesystem::path scratch(const std::string& name) {
    return std::filesystem::temp_directory_path() / ("lzdiss_test_" + name);
}

std::string error_of(const KeyValues& kv) {
    try {
        build_config(kv);
    } catch (const ConfigError& e) {
        return e.what();
    }
    return "";
}

}  // namespace

TEST(Grid, RangesListsAndAngles) {
    const auto lin = parse_grid("theta", "0:1:5", false);
    ASSERT_EQ(lin.size(), 5u);
    EXPECT_DOUBLE_EQ(lin[2], 0.5);
    const auto log = parse_grid("v", "0.01:1:3", true);
    ASSERT_EQ(log.size(), 3u);
    EXPECT_NEAR(log[1], 0.1, 1e-15);
    EXPECT_EQ(log.back(), 1.0);
    const auto forced = parse_grid("v", "0:1:3:lin", true);
    EXPECT_DOUBLE_EQ(forced[1], 0.5);
}

TEST(Grid, AngleSuffix) {
    const auto g = parse_grid("theta", "-0.022pi,0,0.022pi,0.5pi", false);
    ASSERT_EQ(g.size(), 4u);
    EXPECT_DOUBLE_EQ(g[0], -0.022 * std::numbers::pi);
    EXPECT_DOUBLE_EQ(g[3], 0.5 * std::numbers::pi);
}

TEST(Grid, Errors) {
    EXPECT_THROW(parse_grid("v", "", true), ConfigError);
    EXPECT_THROW(parse_grid("v", "1,0.5", true), ConfigError);
    EXPECT_THROW(parse_grid("v", "0:1:3", true), ConfigError);
    EXPECT_THROW(parse_grid("v", "1:2", true), ConfigError);
    EXPECT_THROW(parse_grid("v", "1:2:0", true), ConfigError);
    EXPECT_THROW(parse_grid("v", "1:2:3:cubic", true), ConfigError);
    EXPECT_THROW(parse_grid("v", "abc", true), ConfigError);
}

TEST(Config, DiagnosticsNameTheKey) {
    EXPECT_NE(error_of({{"k_max", "13"}, {"engine", "quapi"}, {"dt", "0.1"}}).find("k_max"), std::string::npos);
    EXPECT_NE(error_of({{"colour", "blue"}}).find("colour"), std::string::npos);
    EXPECT_NE(error_of({{"engine", "exact"}}).find("engine"), std::string::npos);
    EXPECT_NE(error_of({{"theta", "0.6pi"}}).find("theta"), std::string::npos);
    EXPECT_NE(error_of({{"v", "-1"}}).find("v"), std::string::npos);
    EXPECT_NE(error_of({{"tol", "1e-4"}}).find("tol"), std::string::npos);
    EXPECT_NE(error_of({{"engine", "quapi"}, {"dt", "0.1"}}).find("k_max"), std::string::npos);
    EXPECT_NE(error_of({{"engine", "quapi"}, {"dt", "0.1"}, {"k_max", "3"}, {"t_max", "10.05"}}).find("t_max"),
              std::string::npos);
    EXPECT_EQ(error_of({{"engine", "both"}, {"v", "0.1:1:4"}, {"theta", "-0.022pi,0.022pi"}}), "");
}

TEST(Config, KeyValueText) {
    const KeyValues kv = parse_key_values("# Fig. 1 style scan\nengine = neqb\nv = 0.01:1:9  # log\n\ninitial=both\n");
    EXPECT_EQ(kv.at("engine"), "neqb");
    EXPECT_EQ(kv.at("v"), "0.01:1:9");
    EXPECT_EQ(kv.at("initial"), "both");
    EXPECT_THROW(parse_key_values("engine neqb\n"), ConfigError);
}

TEST(Sweep, UncoupledColumnMatchesClosedForm) {
    RunConfig c = build_config({{"gamma", "0"}, {"v", "0.1,0.5,1,5,10"}, {"no_timing", "1"}});
    const Table t = run_sweep(c);
    ASSERT_EQ(t.size(), 5u);
    for (const Row& r : t) {
        EXPECT_EQ(r.status, "converged");
        EXPECT_NEAR(r.probability, coherent_probability({1.0, r.v, 0.0}), 1e-3);
    }
}

TEST(Sweep, OneRowPerGridPointInLexicographicOrder) {
    RunConfig c = build_config({{"v", "0.5,1,2"}, {"temperature", "6.4,25.6"}, {"initial", "both"}, {"no_timing", "1"},
                                {"workers", "2"}});
    const Table t = run_sweep(c);
    ASSERT_EQ(t.size(), 3u * 2u * 2u);
    // Ground before excited within each (v, T).
    auto rank = [](const Row& r) { return r.initial == "ground" ? 0 : 1; };
    for (std::size_t i = 1; i < t.size(); ++i) {
        const Row& a = t[i - 1];
        const Row& b = t[i];
        EXPECT_TRUE(a.v < b.v || (a.v == b.v && (a.temperature < b.temperature ||
                                                 (a.temperature == b.temperature && rank(a) < rank(b)))));
    }
    for (const Row& r : t) {
        EXPECT_GE(r.probability, -1e-6);
        EXPECT_LE(r.probability, 1.0 + 1e-6);
        EXPECT_EQ(r.wall_ms, 0.0);
    }
}

TEST(Sweep, DeterministicAndIndependentOfWorkers) {
    KeyValues kv{{"v", "0.5:2:3"}, {"theta", "-0.1,0.1"}, {"initial", "both"}, {"no_timing", "1"}};
    kv["workers"] = "1";
    const std::string one = to_csv(run_sweep(build_config(kv)));
    kv["workers"] = "4";
    const std::string four = to_csv(run_sweep(build_config(kv)));
    const std::string again = to_csv(run_sweep(build_config(kv)));
    EXPECT_EQ(one, four);
    EXPECT_EQ(four, again);
}

TEST(Sweep, QuapiOverrideRowsCarryParameters) {
    RunConfig c = build_config({{"engine", "both"}, {"v", "1"}, {"dt", "0.2"}, {"k_max", "2"}, {"t_max", "100"},
                                {"no_timing", "1"}});
    const Table t = run_sweep(c);
    ASSERT_EQ(t.size(), 2u);
    EXPECT_EQ(t[0].engine, "neqb");
    EXPECT_EQ(t[0].dt, 0.0);
    EXPECT_EQ(t[0].k_max, 0);
    EXPECT_EQ(t[1].engine, "quapi");
    EXPECT_EQ(t[1].dt, 0.2);
    EXPECT_EQ(t[1].k_max, 2);
    EXPECT_EQ(t[1].t_max, 100.0);
    EXPECT_NEAR(t[0].probability, t[1].probability, 0.03);
}

TEST(Sweep, FailedRowsAreFlaggedNotFilled) {
    RunConfig c = build_config({{"engine", "quapi"}, {"v", "1"}, {"gamma", "5e-3"}, {"temperature", "25.6"},
                                {"tol", "1e-3"}, {"k_max_cap", "1"}, {"dt_halvings", "0"}, {"no_timing", "1"}});
    const Table t = run_sweep(c);
    ASSERT_EQ(t.size(), 1u);
    EXPECT_EQ(t[0].status, "budget-exceeded");
    EXPECT_TRUE(std::isnan(t[0].probability));
    EXPECT_FALSE(all_converged(t));
}

TEST(Emit, RoundTripsExactly) {
    Table t;
    Row r;
    r.v = quantize(0.123456789123);
    r.temperature = 6.4;
    r.theta = quantize(-0.022 * std::numbers::pi);
    r.omega_c = 5.0;
    r.gamma = 5e-4;
    r.s = 3.0;
    r.engine = "quapi";
    r.initial = "excited";
    r.probability = quantize(0.91207712345);
    r.dt = 0.1;
    r.k_max = 7;
    r.t_max = 1600.0;
    r.status = "converged";
    r.wall_ms = quantize(1234.5678912);
    t.push_back(r);
    r.engine = "neqb";
    r.status = "budget-exceeded";
    r.probability = std::nan("");
    t.push_back(r);
    EXPECT_EQ(parse_csv(to_csv(t)), t);
    EXPECT_EQ(parse_json(to_json(t)), t);
    EXPECT_EQ(to_csv(parse_csv(to_csv(t))), to_csv(t));
}

TEST(Emit, HeaderIdenticalAcrossEngines) {
    Row a;
    a.engine = "neqb";
    Row b;
    b.engine = "quapi";
    const std::string x = to_csv({a});
    const std::string y = to_csv({b});
    EXPECT_EQ(x.substr(0, x.find('\n')), y.substr(0, y.find('\n')));
    EXPECT_EQ(x.substr(0, x.find('\n')), "v,T,theta,omega_c,gamma,s,engine,initial,probability,dt,k_max,t_max,status,wall_ms");
}

TEST(Emit, FileOutput) {
    const auto path = scratch("emit.json");
    Row r;
    r.engine = "neqb";
    r.status = "converged";
    emit({r}, Format::json, path.string());
    EXPECT_EQ(parse_json(slurp(path)), Table{r});
    std::filesystem::remove(path);
    EXPECT_THROW(emit({r}, Format::csv, "/nonexistent-dir/x.csv"), Error);
}

TEST(Cli, SweepWritesParsableDeterministicCsv) {
    const auto a = scratch("a.csv");
    const auto b = scratch("b.csv");
    const std::string args = "sweep --engine neqb --gamma 5e-4 --s 3 --omega-c 5 --t-grid 6.4,25.6 --v-grid 0.5:3:3 "
                             "--initial both --no-timing --out ";
    ASSERT_EQ(run_cli(args + a.string() + " --workers 1"), 0);
    ASSERT_EQ(run_cli(args + b.string() + " --workers 3"), 0);
    const std::string text = slurp(a);
    EXPECT_EQ(text, slurp(b));
    const Table t = parse_csv(text);
    EXPECT_EQ(t.size(), 3u * 2u * 2u);
    EXPECT_EQ(to_csv(t), text);
    std::filesystem::remove(a);
    std::filesystem::remove(b);
}

TEST(Cli, ConfigFileWithOverrides) {
    const auto cfg = scratch("run.cfg");
    const auto out = scratch("run.json");
    std::ofstream(cfg) << "engine = neqb\ngamma = 0\nv = 0.5,1\nformat = json\n";
    ASSERT_EQ(run_cli("sweep --config " + cfg.string() + " --v-grid 1,5 --out " + out.string()), 0);
    const Table t = parse_json(slurp(out));
    ASSERT_EQ(t.size(), 2u);
    EXPECT_EQ(t[0].v, 1.0);
    EXPECT_EQ(t[1].v, 5.0);
    std::filesystem::remove(cfg);
    std::filesystem::remove(out);
}

TEST(Cli, ExitCodes) {
    EXPECT_EQ(run_cli("sweep --engine quapi --dt 0.1 --k-max 13 --out /dev/null"), 1);
    EXPECT_EQ(run_cli("sweep --bogus"), 1);
    EXPECT_EQ(run_cli("sweep --v-grid 1,0.5 --out /dev/null"), 1);
    EXPECT_EQ(run_cli("sweep --engine quapi --v-grid 1 --gamma 5e-3 --t-grid 25.6 --tol 1e-3 --k-max-cap 1 "
                      "--dt-halvings 0 --out /dev/null"),
              2);
    EXPECT_EQ(run_cli("window --s 3 --theta 0 --temperature 0 --out /dev/null"), 0);
    EXPECT_EQ(run_cli("trace --engine neqb --v 1 --t-max 50 --out /dev/null"), 0);
    EXPECT_EQ(run_cli("converge --v 1 --gamma 0 --tol 1e-2 --out /dev/null"), 0);
}
