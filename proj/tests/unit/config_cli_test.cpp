// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "mtdao/cli.hpp"
#include "mtdao/config.hpp"

using namespace mtdao;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("mtdao_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

fs::path write_file(const fs::path& path, const std::string& text) {
  std::ofstream(path, std::ios::binary) << text;
  return path;
}

std::string read_file(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

std::string parse_error(const std::string& text) {
  try {
    parse_experiment(Json::parse(text));
  } catch (const Error& e) {
    return e.what();
  }
  return "";
}

// Splits on structural characters; numbers compare with a relative tolerance so
// goldens survive last-bit differences in libm.
std::vector<std::string> tokens(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : text) {
    if (std::string(",:[]{}\" \n\t").find(c) != std::string::npos) {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

void expect_matches_golden(const fs::path& actual, const fs::path& golden) {
  const auto a = tokens(read_file(actual)), g = tokens(read_file(golden));
  ASSERT_EQ(a.size(), g.size()) << golden;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] == g[i]) continue;
    char* end_a = nullptr;
    char* end_g = nullptr;
    const double va = std::strtod(a[i].c_str(), &end_a), vg = std::strtod(g[i].c_str(), &end_g);
    ASSERT_TRUE(*end_a == '\0' && *end_g == '\0') << golden << ": '" << a[i] << "' vs '" << g[i] << "'";
    EXPECT_NEAR(va, vg, 1e-9 * std::max(1.0, std::abs(vg))) << golden << " token " << i;
  }
}

const fs::path kGolden = MTDAO_GOLDEN_DIR;

const char* kSmallRun = R"({
  "seeds": [0, 1, 2],
  "workers": 2,
  "steps": 20,
  "problem": {"kind": "rosenbrock"},
  "noise_sigma": 0.5,
  "optimizer": {"family": "adam", "lr": 0.01},
  "schedule": {"x": 5}
})";

}  // namespace

TEST(ParseExperiment, DefaultsAreFilledIn) {
  const auto e = parse_experiment(Json::parse("{}"));
  EXPECT_EQ(e.seeds, std::vector<std::uint64_t>{0});
  EXPECT_EQ(e.cluster.workers, 1u);
  EXPECT_EQ(e.cluster.steps, 100);
  EXPECT_EQ(e.cluster.x0, e.cluster.problem.default_start());
  const Json echo = to_json(e);
  EXPECT_EQ(echo["optimizer"]["family"], "adam");
  EXPECT_EQ(echo["metrics"]["cadence"], 1);
  EXPECT_EQ(echo["placement"], "end_of_step");
  // Echo parses back to the same document.
  EXPECT_EQ(to_json(parse_experiment(echo)), echo);
}

TEST(ParseExperiment, ErrorsNameTheKey) {
  EXPECT_EQ(parse_error(R"({"wokers": 2})"), "wokers: unknown key");
  EXPECT_EQ(parse_error(R"({"optimizer": {"beta": 0.9}})"), "optimizer.beta: unknown key");
  EXPECT_NE(parse_error(R"({"schedule": {"x": -4}})").find("schedule.x"), std::string::npos);
  EXPECT_NE(parse_error(R"({"steps": "many"})").find("steps"), std::string::npos);
  EXPECT_NE(parse_error(R"({"seeds": [1, 1]})").find("seeds"), std::string::npos);
  EXPECT_NE(parse_error(R"({"problem": {"kind": "sphere"}})").find("problem.kind"), std::string::npos);
  EXPECT_NE(parse_error(R"({"x0": [1, 2, 3]})").find("x0"), std::string::npos);
}

TEST(ParseExperiment, SeedMapsToStreams) {
  auto e = parse_experiment(Json::parse(kSmallRun));
  const auto a = e.for_seed(1), b = e.for_seed(2);
  EXPECT_NE(a.heterogeneity_seed, b.heterogeneity_seed);
  EXPECT_NE(a.metrics.mi_seed, b.metrics.mi_seed);
  EXPECT_EQ(*a.problem.optimum(), *b.problem.optimum());
}

TEST(ParseTheory, KOrProbability) {
  const auto p = parse_theory(Json::parse(R"({"betas": [0.9], "K_x": 4, "K_j": [8]})"));
  EXPECT_DOUBLE_EQ(p.p_x, 0.25);
  EXPECT_DOUBLE_EQ(p.p_j[0], 0.125);
  EXPECT_DOUBLE_EQ(p.omegas[0], 1.0);
  EXPECT_THROW(parse_theory(Json::parse(R"({"betas": [0.9], "K_x": 4, "p_x": 0.25})")), Error);
}

TEST(ParseCost, SweepAndPresets) {
  const auto c = parse_cost(Json::parse(R"({"bandwidths_gbps": {"min": 1, "max": 400, "points": 3}})"));
  ASSERT_EQ(c.bandwidths_gbps.size(), 3u);
  EXPECT_DOUBLE_EQ(c.bandwidths_gbps.front(), 1.0);
  EXPECT_NEAR(c.bandwidths_gbps[1], 20.0, 1e-12);
  EXPECT_DOUBLE_EQ(c.bandwidths_gbps.back(), 400.0);
  EXPECT_EQ(c.strategies.size(), 4u);
  try {
    parse_cost(Json::parse(R"({"bandwidths_gbps": [10, 0]})"));
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("bandwidth must be positive"), std::string::npos);
  }
}

TEST(ThreadCap, ParsesPositiveIntegers) {
  EXPECT_EQ(thread_cap(nullptr), 0u);
  EXPECT_EQ(thread_cap(""), 0u);
  EXPECT_EQ(thread_cap("3"), 3u);
  EXPECT_THROW(thread_cap("0"), Error);
  EXPECT_THROW(thread_cap("-2"), Error);
  EXPECT_THROW(thread_cap("4x"), Error);
}

TEST(CmdRun, WritesPerSeedFilesWithConfigEcho) {
  const auto dir = scratch("run");
  const auto cfg = write_file(dir / "c.json", kSmallRun);
  std::ostringstream out, err;
  ASSERT_EQ(cmd_run(cfg.string(), (dir / "out").string(), out, err), kExitOk) << err.str();
  for (int seed : {0, 1, 2}) {
    const std::string csv = read_file(dir / "out" / ("run-" + std::to_string(seed) + ".csv"));
    ASSERT_EQ(csv.rfind("# config: ", 0), 0u);
    const Json echo = Json::parse(csv.substr(10, csv.find('\n') - 10));
    EXPECT_EQ(echo["seed"], seed);
    EXPECT_EQ(echo["optimizer"]["beta2"], 0.999);
    std::size_t lines = 0;
    for (char c : csv) lines += c == '\n';
    EXPECT_EQ(lines, 2u + 4u);  // comment, header, one row per sync of x
    const Json summary = Json::parse(read_file(dir / "out" / ("run-" + std::to_string(seed) + ".json")))["summary"];
    EXPECT_EQ(summary["completed_steps"], 20);
    EXPECT_FALSE(summary["diverged"].get<bool>());
    EXPECT_TRUE(fs::exists(dir / "out" / ("comm-" + std::to_string(seed) + ".csv")));
  }
  // Same seed, same bytes.
  std::ostringstream out2, err2;
  ASSERT_EQ(cmd_run(cfg.string(), (dir / "again").string(), out2, err2), kExitOk);
  EXPECT_EQ(read_file(dir / "out" / "run-1.csv"), read_file(dir / "again" / "run-1.csv"));
  EXPECT_NE(read_file(dir / "out" / "run-1.csv"), read_file(dir / "out" / "run-2.csv"));
}

TEST(CmdRun, ThreadCapDoesNotChangeResults) {
  const auto dir = scratch("threads");
  const auto cfg = write_file(dir / "c.json", kSmallRun);
  std::ostringstream out, err;
  ::setenv("MTDAO_THREADS", "1", 1);
  ASSERT_EQ(cmd_run(cfg.string(), (dir / "one").string(), out, err), kExitOk);
  ::setenv("MTDAO_THREADS", "3", 1);
  ASSERT_EQ(cmd_run(cfg.string(), (dir / "three").string(), out, err), kExitOk);
  ::setenv("MTDAO_THREADS", "zero", 1);
  std::ostringstream bad_err;
  EXPECT_EQ(cmd_run(cfg.string(), (dir / "bad").string(), out, bad_err), kExitConfigError);
  EXPECT_NE(bad_err.str().find("MTDAO_THREADS"), std::string::npos);
  ::unsetenv("MTDAO_THREADS");
  for (int seed : {0, 1, 2}) {
    const std::string name = "run-" + std::to_string(seed) + ".csv";
    EXPECT_EQ(read_file(dir / "one" / name), read_file(dir / "three" / name));
  }
}

TEST(CmdRun, ExitCodes) {
  const auto dir = scratch("exit");
  std::ostringstream out, err;
  const auto negative = write_file(dir / "neg.json", R"({"schedule": {"x": -4}})");
  EXPECT_EQ(cmd_run(negative.string(), (dir / "o").string(), out, err), kExitConfigError);
  EXPECT_NE(err.str().find("schedule.x"), std::string::npos);

  EXPECT_EQ(cmd_run((dir / "missing.json").string(), (dir / "o").string(), out, err), kExitConfigError);
  const auto syntax = write_file(dir / "syntax.json", "{\"workers\": ");
  EXPECT_EQ(cmd_run(syntax.string(), (dir / "o").string(), out, err), kExitConfigError);

  const auto diverging = write_file(dir / "div.json", R"({
    "steps": 1000,
    "problem": {"kind": "quadratic_1d", "lambda": 10},
    "x0": [1],
    "optimizer": {"family": "sgdm", "betas1": [0.9], "omegas": [0.0], "lr": 1.0},
    "schedule": {"x": 4}
  })");
  std::ostringstream derr;
  EXPECT_EQ(cmd_run(diverging.string(), (dir / "d").string(), out, derr), kExitDiverged);
  EXPECT_NE(derr.str().find("diverged at step 12"), std::string::npos);
  const Json summary = Json::parse(read_file(dir / "d" / "run-0.json"))["summary"];
  EXPECT_EQ(summary["completed_steps"], 12);
  EXPECT_EQ(summary["diverged_at"], 12);
}

TEST(CmdTheory, TableAndErrors) {
  const auto dir = scratch("theory");
  std::ostringstream out, err;
  const auto ok = write_file(dir / "t.json", R"({"betas": [0.999], "K_x": 32, "K_j": [32]})");
  ASSERT_EQ(cmd_theory(ok.string(), (dir / "t.csv").string(), out, err), kExitOk);
  EXPECT_NE(out.str().find("psi         119.309"), std::string::npos);
  EXPECT_NE(read_file(dir / "t.csv").find("half_life,1,692.80"), std::string::npos);
  const auto never = write_file(dir / "n.json", R"({"betas": [0.9], "p_x": 0})");
  EXPECT_EQ(cmd_theory(never.string(), std::nullopt, out, err), kExitConfigError);
}

TEST(CmdCost, StdoutAndErrors) {
  const auto dir = scratch("cost");
  std::ostringstream out, err;
  const auto ok = write_file(dir / "c.json", R"({"bandwidths_gbps": [100]})");
  ASSERT_EQ(cmd_cost(ok.string(), std::nullopt, out, err), kExitOk);
  EXPECT_NE(out.str().find("bandwidth_gbps,method,total_seconds,comm_seconds\n100,Local Adam,"), std::string::npos);
  const auto zero = write_file(dir / "z.json", R"({"bandwidths_gbps": [0]})");
  std::ostringstream zerr;
  EXPECT_EQ(cmd_cost(zero.string(), std::nullopt, out, zerr), kExitConfigError);
  EXPECT_NE(zerr.str().find("bandwidth must be positive"), std::string::npos);
}

TEST(CmdCompare, IdenticalDdpAndBoundary) {
  const auto dir = scratch("compare");
  const std::string base = R"({
    "seeds": [5],
    "workers": 4,
    "steps": 200,
    "problem": {"kind": "random_quadratic", "dim": 16, "condition_number": 20, "seed": 1},
    "noise_sigma": 1.0,
    "optimizer": %OPT%,
    "schedule": %SCHED%
  })";
  const auto make = [&](const std::string& name, const std::string& opt, const std::string& sched) {
    std::string text = base;
    text.replace(text.find("%OPT%"), 5, opt);
    text.replace(text.find("%SCHED%"), 7, sched);
    return write_file(dir / name, text).string();
  };
  const std::string adam = R"({"family": "adam", "betas1": [0.9, 0.99], "omegas": [0.5, 0.5], "lr": 0.01})";
  const auto k8 = make("k8.json", adam, R"({"x": 8})");
  const auto k1 = make("k1.json", adam, R"({"x": 1})");

  const auto deviation = [](const std::string& json) {
    return Json::parse(json)["max_trajectory_deviation"].get<double>();
  };
  std::ostringstream out, err;
  ASSERT_EQ(cmd_compare(k8, k8, (dir / "d.csv").string(), false, out, err), kExitOk) << err.str();
  EXPECT_EQ(deviation(out.str()), 0.0);
  EXPECT_EQ(Json::parse(out.str())["steps_compared"], 200);
  const std::string diff = read_file(dir / "d.csv");
  EXPECT_NE(diff.find("seed,round,step,d_f_mean"), std::string::npos);
  EXPECT_NE(diff.find("\n5,0,8,0,0,"), std::string::npos);

  std::ostringstream ddp;
  ASSERT_EQ(cmd_compare(k1, k1, std::nullopt, true, ddp, err), kExitOk) << err.str();
  EXPECT_LT(deviation(ddp.str()), 1e-10);
  EXPECT_EQ(cmd_compare(k1, k8, std::nullopt, true, ddp, err), kExitConfigError);

  const std::string sgdm = R"({"family": "sgdm", "betas1": [0.9, 0.5], "omegas": [0.7, 0.3], "lr": 0.05})";
  const auto params_only = make("px.json", sgdm, R"({"mode": "probabilistic", "x": 1, "momenta": [0, 0]})");
  const auto momenta_only = make("pj.json", sgdm, R"({"mode": "probabilistic", "x": 0, "momenta": [1, 1]})");
  std::ostringstream boundary;
  ASSERT_EQ(cmd_compare(params_only, momenta_only, std::nullopt, false, boundary, err), kExitOk) << err.str();
  EXPECT_LT(deviation(boundary.str()), 1e-10);

  const auto other = write_file(dir / "other.json", R"({"seeds": [5], "problem": {"kind": "rosenbrock"}})");
  std::ostringstream merr;
  EXPECT_EQ(cmd_compare(k8, other.string(), std::nullopt, false, out, merr), kExitConfigError);
  EXPECT_NE(merr.str().find("problem"), std::string::npos);
}

TEST(RunCli, DispatchAndUsageErrors) {
  std::ostringstream out, err;
  std::vector<std::string> args{"mtdao", "--help"};
  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  EXPECT_EQ(run_cli(static_cast<int>(argv.size()), argv.data(), out, err), 0);
  EXPECT_NE(out.str().find("compare"), std::string::npos);

  std::vector<std::string> bad{"mtdao", "launch"};
  argv.clear();
  for (auto& a : bad) argv.push_back(a.data());
  EXPECT_EQ(run_cli(static_cast<int>(argv.size()), argv.data(), out, err), kExitConfigError);
}

TEST(Golden, Run) {
  const auto dir = scratch("golden_run");
  std::ostringstream out, err;
  ASSERT_EQ(cmd_run((kGolden / "run" / "config.json").string(), dir.string(), out, err), kExitOk);
  write_file(dir / "stdout.txt", out.str());
  for (const char* name : {"run-7.csv", "comm-7.csv", "run-7.json", "stdout.txt"})
    expect_matches_golden(dir / name, kGolden / "run" / name);
}

TEST(Golden, Theory) {
  const auto dir = scratch("golden_theory");
  std::ostringstream out, err;
  ASSERT_EQ(cmd_theory((kGolden / "theory" / "config.json").string(), (dir / "theory.csv").string(), out, err),
            kExitOk);
  write_file(dir / "stdout.txt", out.str());
  expect_matches_golden(dir / "theory.csv", kGolden / "theory" / "theory.csv");
  expect_matches_golden(dir / "stdout.txt", kGolden / "theory" / "stdout.txt");
}

TEST(Golden, Cost) {
  const auto dir = scratch("golden_cost");
  std::ostringstream out, err;
  ASSERT_EQ(cmd_cost((kGolden / "cost" / "config.json").string(), (dir / "cost.csv").string(), out, err), kExitOk);
  expect_matches_golden(dir / "cost.csv", kGolden / "cost" / "cost.csv");
}

TEST(Golden, Compare) {
  const auto dir = scratch("golden_compare");
  std::ostringstream out, err;
  ASSERT_EQ(cmd_compare((kGolden / "compare" / "config_a.json").string(),
                        (kGolden / "compare" / "config_b.json").string(), (dir / "diff.csv").string(), false, out,
                        err),
            kExitOk);
  write_file(dir / "stdout.txt", out.str());
  expect_matches_golden(dir / "diff.csv", kGolden / "compare" / "diff.csv");
  expect_matches_golden(dir / "stdout.txt", kGolden / "compare" / "stdout.txt");
}
