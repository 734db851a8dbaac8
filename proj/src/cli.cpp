// SPDX-License-Identifier: Apache-2.0
#include "mtdao/cli.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <thread>

#include <CLI11.hpp>

#include "mtdao/config.hpp"
#include "mtdao/csv.hpp"

namespace mtdao {

namespace {

namespace fs = std::filesystem;

std::ofstream open_output(const fs::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error(path.string() + ": cannot open for writing");
  return os;
}

void write_config_comment(std::ostream& os, const Json& config) { os << "# config: " << config.dump() << '\n'; }

Json run_summary(const RunRecord& rec, const ClusterConfig& cfg) {
  Json s;
  s["completed_steps"] = rec.completed_steps;
  s["diverged"] = rec.diverged;
  s["diverged_at"] = rec.diverged ? Json(rec.diverged_at) : Json(nullptr);
  s["message"] = rec.message;
  s["rounds"] = rec.rows.size();
  const bool finite = rec.final_x.allFinite();
  s["final_f"] = finite ? Json(cfg.problem.value(rec.final_x)) : Json(nullptr);
  s["final_dist_to_optimum"] =
      finite && cfg.problem.optimum() ? Json((rec.final_x - *cfg.problem.optimum()).norm()) : Json(nullptr);
  s["comm_floats_total"] = rec.ledger.total();
  Json by_class = Json::object();
  for (const auto& [cls, n] : rec.ledger.totals()) by_class[cls] = n;
  s["comm_floats_by_class"] = by_class;
  s["final_x"] = std::vector<double>(rec.final_x.data(), rec.final_x.data() + rec.final_x.size());
  return s;
}

std::vector<std::optional<double>> row_values(const MetricRow& r) {
  std::vector<std::optional<double>> v{r.f_mean,
                                       r.dist_to_optimum,
                                       r.rel_change_x,
                                       r.rel_change_u,
                                       r.cross_worker_var_x,
                                       r.cross_worker_var_u,
                                       r.mi_estimate};
  for (const auto& c : r.cosines) v.push_back(c);
  v.push_back(static_cast<double>(r.comm_floats));
  v.push_back(static_cast<double>(r.comm_floats) * 4.0);
  return v;
}

// Runs jobs [0, n) on at most `threads` threads; results land in caller-owned slots.
template <typename F>
void parallel_for(std::size_t n, std::size_t threads, F&& job) {
  threads = std::clamp<std::size_t>(threads, 1, std::max<std::size_t>(1, n));
  if (threads == 1) {
    for (std::size_t i = 0; i < n; ++i) job(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (std::size_t k = 0; k < threads; ++k)
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) job(i);
    });
  for (auto& t : pool) t.join();
}

std::size_t configured_threads() {
  const std::size_t hw = std::max(1u, std::thread::hardware_concurrency());
  const std::size_t cap = thread_cap(std::getenv("MTDAO_THREADS"));
  return cap == 0 ? hw : cap;
}

}  // namespace

std::size_t thread_cap(const char* env_value) {
  if (env_value == nullptr || *env_value == '\0') return 0;
  const std::string text(env_value);
  std::size_t value = 0;
  const auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || end != text.data() + text.size() || value == 0)
    throw Error("MTDAO_THREADS: expected a positive integer, got '" + text + "'");
  return value;
}

int cmd_run(const std::string& config_path, const std::string& out_dir, std::ostream& out, std::ostream& err) {
  ExperimentConfig config;
  std::size_t threads = 1;
  try {
    config = parse_experiment(load_json(config_path));
    threads = configured_threads();
    fs::create_directories(out_dir);
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kExitConfigError;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return kExitConfigError;
  }

  const Json echo = to_json(config);
  std::vector<int> codes(config.seeds.size(), kExitOk);
  std::vector<std::string> messages(config.seeds.size());
  parallel_for(config.seeds.size(), threads, [&](std::size_t i) {
    const std::uint64_t seed = config.seeds[i];
    try {
      const ClusterConfig cluster = config.for_seed(seed);
      const RunRecord rec = run_training(cluster);
      Json seed_echo = echo;
      seed_echo["seed"] = seed;
      const std::string tag = std::to_string(seed);
      {
        auto os = open_output(fs::path(out_dir) / ("run-" + tag + ".csv"));
        write_config_comment(os, seed_echo);
        write_run_csv(os, rec);
      }
      {
        auto os = open_output(fs::path(out_dir) / ("comm-" + tag + ".csv"));
        write_config_comment(os, seed_echo);
        rec.ledger.write_csv(os);
      }
      {
        auto os = open_output(fs::path(out_dir) / ("run-" + tag + ".json"));
        os << Json{{"config", seed_echo}, {"summary", run_summary(rec, cluster)}}.dump(2) << '\n';
      }
      if (rec.diverged) {
        codes[i] = kExitDiverged;
        messages[i] = "seed " + tag + ": " + rec.message;
      } else {
        messages[i] = "seed " + tag + ": " + std::to_string(rec.completed_steps) + " steps, " +
                      std::to_string(rec.rows.size()) + " rounds, f = " +
                      format_number(cluster.problem.value(rec.final_x));
      }
    } catch (const std::exception& e) {
      codes[i] = kExitConfigError;
      messages[i] = "seed " + std::to_string(seed) + ": " + e.what();
    }
  });

  int code = kExitOk;
  for (std::size_t i = 0; i < codes.size(); ++i) {
    (codes[i] == kExitOk ? out : err) << messages[i] << '\n';
    if (codes[i] == kExitConfigError || (codes[i] == kExitDiverged && code == kExitOk)) code = codes[i];
  }
  return code;
}

int cmd_theory(const std::string& config_path, const std::optional<std::string>& csv_path, std::ostream& out,
               std::ostream& err) {
  try {
    const TheoryParams params = parse_theory(load_json(config_path));
    const TheoryReport r = evaluate_theory(params);
    out << "beta_omega  " << format_number(r.beta_omega) << '\n'
        << "psi         " << format_number(r.psi) << '\n'
        << "eta0        " << format_number(r.eta0) << '\n'
        << "step_size   " << format_number(r.step_size) << '\n'
        << "momentum  beta  omega  p_j  half_life\n";
    for (std::size_t j = 0; j < params.betas.size(); ++j)
      out << j + 1 << "  " << format_number(params.betas[j]) << "  " << format_number(params.omegas[j]) << "  "
          << format_number(params.p_j[j]) << "  " << format_number(r.half_lives[j]) << '\n';
    for (const auto& w : r.warnings) err << "warning: " << w << '\n';
    if (csv_path) {
      auto os = open_output(*csv_path);
      write_config_comment(os, to_json(params));
      os << "quantity,index,value\n"
         << "beta_omega,," << format_number(r.beta_omega) << '\n'
         << "psi,," << format_number(r.psi) << '\n'
         << "eta0,," << format_number(r.eta0) << '\n'
         << "step_size,," << format_number(r.step_size) << '\n';
      for (std::size_t j = 0; j < r.half_lives.size(); ++j)
        os << "half_life," << j + 1 << ',' << format_number(r.half_lives[j]) << '\n';
    }
    return kExitOk;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kExitConfigError;
  }
}

int cmd_cost(const std::string& config_path, const std::optional<std::string>& csv_path, std::ostream& out,
             std::ostream& err) {
  try {
    const CostConfig config = parse_cost(load_json(config_path));
    const auto rows = bandwidth_sweep(config.params, config.strategies, config.bandwidths_gbps);
    if (csv_path) {
      auto os = open_output(*csv_path);
      write_config_comment(os, to_json(config));
      write_cost_csv(os, rows);
    } else {
      write_config_comment(out, to_json(config));
      write_cost_csv(out, rows);
    }
    return kExitOk;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kExitConfigError;
  }
}

int cmd_compare(const std::string& config_a, const std::string& config_b, const std::optional<std::string>& csv_path,
                bool b_is_ddp, std::ostream& out, std::ostream& err) {
  ExperimentConfig a, b;
  try {
    a = parse_experiment(load_json(config_a));
    b = parse_experiment(load_json(config_b));
    const Json ja = to_json(a), jb = to_json(b);
    if (ja["problem"] != jb["problem"]) throw Error("problem: the two configs use different problems");
    if (ja["x0"] != jb["x0"]) throw Error("x0: the two configs start from different points");
    if (a.seeds != b.seeds) throw Error("seeds: the two configs use different seeds");
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kExitConfigError;
  }
  a.cluster.metrics.trace = true;
  b.cluster.metrics.trace = true;

  struct Pair {
    RunRecord a, b;
  };
  std::vector<Pair> runs(a.seeds.size());
  std::string failure;
  std::mutex failure_mutex;
  std::size_t threads = 1;
  try {
    threads = configured_threads();
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kExitConfigError;
  }
  parallel_for(a.seeds.size(), threads, [&](std::size_t i) {
    try {
      runs[i].a = run_training(a.for_seed(a.seeds[i]));
      runs[i].b = b_is_ddp ? ddp_reference_run(b.for_seed(b.seeds[i])) : run_training(b.for_seed(b.seeds[i]));
    } catch (const std::exception& e) {
      std::lock_guard<std::mutex> lock(failure_mutex);
      failure = e.what();
    }
  });
  if (!failure.empty()) {
    err << "error: " << failure << '\n';
    return kExitConfigError;
  }

  double max_dev = 0.0;
  std::size_t steps = 0, rounds = 0;
  bool diverged = false;
  for (const auto& p : runs) {
    diverged = diverged || p.a.diverged || p.b.diverged;
    const std::size_t n = std::min(p.a.trajectory.size(), p.b.trajectory.size());
    for (std::size_t t = 0; t < n; ++t)
      max_dev = std::max(max_dev, (p.a.trajectory[t] - p.b.trajectory[t]).cwiseAbs().maxCoeff());
    steps = std::max(steps, n == 0 ? 0 : n - 1);
    rounds = std::max(rounds, std::min(p.a.rows.size(), p.b.rows.size()));
  }

  try {
    if (csv_path) {
      auto os = open_output(*csv_path);
      os << "# config_a: " << to_json(a).dump() << '\n' << "# config_b: " << to_json(b).dump() << '\n';
      os << "seed,round,step";
      const auto& cols = run_csv_columns();
      for (std::size_t c = 2; c < cols.size(); ++c) os << ",d_" << cols[c];
      os << '\n';
      for (std::size_t i = 0; i < runs.size(); ++i) {
        const auto& ra = runs[i].a.rows;
        const auto& rb = runs[i].b.rows;
        for (std::size_t r = 0; r < std::min(ra.size(), rb.size()); ++r) {
          os << a.seeds[i] << ',' << ra[r].round << ',' << ra[r].step;
          const auto va = row_values(ra[r]), vb = row_values(rb[r]);
          for (std::size_t c = 0; c < va.size(); ++c) {
            std::optional<double> d;
            if (va[c] && vb[c]) d = *va[c] - *vb[c];
            os << ',' << format_number(d);
          }
          os << '\n';
        }
      }
    }
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kExitConfigError;
  }

  out << Json{{"max_trajectory_deviation", max_dev}, {"steps_compared", steps}, {"rounds_compared", rounds}}.dump()
      << '\n';
  return diverged ? kExitDiverged : kExitOk;
}

int run_cli(int argc, char** argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Multi-timescale distributed optimizer simulator"};
  app.require_subcommand(1);

  std::string run_config, run_out = "out";
  auto* run = app.add_subcommand("run", "Simulate a cluster run for every seed in the config");
  run->add_option("config", run_config, "Experiment config (JSON)")->required();
  run->add_option("-o,--out-dir", run_out, "Output directory")->capture_default_str();

  std::string theory_config;
  std::optional<std::string> theory_csv;
  auto* theory = app.add_subcommand("theory", "Print convergence constants and half-lives");
  theory->add_option("config", theory_config, "Theory config (JSON)")->required();
  theory->add_option("--csv", theory_csv, "Also write the table as CSV");

  std::string cost_config;
  std::optional<std::string> cost_csv;
  auto* cost = app.add_subcommand("cost", "Bandwidth sweep of the wall-clock model");
  cost->add_option("config", cost_config, "Cost config (JSON)")->required();
  cost->add_option("-o,--out", cost_csv, "CSV path (default: stdout)");

  std::string cmp_a, cmp_b;
  std::optional<std::string> cmp_csv;
  bool cmp_ddp = false;
  auto* compare = app.add_subcommand("compare", "Run two configs and report trajectory and metric differences");
  compare->add_option("config_a", cmp_a, "First experiment config")->required();
  compare->add_option("config_b", cmp_b, "Second experiment config")->required();
  compare->add_option("-o,--out", cmp_csv, "Per-round metric differences (CSV)");
  compare->add_flag("--ddp", cmp_ddp, "Run config_b through the every-step all-reduce reference");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e, out, err);
    err << "error: " << e.what() << '\n';
    return kExitConfigError;
  }

  if (run->parsed()) return cmd_run(run_config, run_out, out, err);
  if (theory->parsed()) return cmd_theory(theory_config, theory_csv, out, err);
  if (cost->parsed()) return cmd_cost(cost_config, cost_csv, out, err);
  return cmd_compare(cmp_a, cmp_b, cmp_csv, cmp_ddp, out, err);
}

}  // namespace mtdao
