// SPDX-License-Identifier: Apache-2.0
#include "mtdao/simulation.hpp"

#include <cmath>
#include <ostream>
#include <random>

#include "mtdao/csv.hpp"
#include "mtdao/random.hpp"

namespace mtdao {

void ClusterConfig::validate() const {
  if (workers < 1) throw Error("workers: must be >= 1");
  if (steps < 1) throw Error("steps: must be >= 1");
  optimizer.validate();
  schedule.validate(optimizer.num_momenta(), optimizer.has_second_momentum());
  if (schedule.mode == SyncMode::Probabilistic && optimizer.family == Family::SGDM &&
      std::abs(optimizer.omega_sum() - 1.0) > 1e-12)
    throw Error("optimizer.omegas: the probabilistic SGDM variant needs weights summing to exactly 1");
  if (static_cast<std::size_t>(x0.size()) != problem.dim())
    throw Error("x0: expected " + std::to_string(problem.dim()) + " entries, got " + std::to_string(x0.size()));
  if (!x0.allFinite()) throw Error("x0: entries must be finite");
  if (!(heterogeneity >= 0.0)) throw Error("heterogeneity: must be non-negative");
  if (metrics.momentum_index >= optimizer.num_momenta()) throw Error("metrics.momentum_index: out of range");
  if (metrics.cadence < 0) throw Error("metrics.cadence: must be >= 0");
  if (!(divergence_threshold > 0.0)) throw Error("divergence_threshold: must be positive");
  if (optimizer.lr.kind() == LRSchedule::Kind::WSD && optimizer.lr.total() < steps)
    throw Error("optimizer.lr.total: shorter than the run");
}

Step ClusterConfig::resolved_cadence() const {
  if (metrics.cadence > 0) return metrics.cadence;
  if (schedule.mode == SyncMode::Periodic) return schedule.x.period;
  if (schedule.x.probability > 0.0) return std::max<Step>(1, std::llround(1.0 / schedule.x.probability));
  return steps;
}

namespace {

std::vector<ParamVector> worker_offsets(const ClusterConfig& cfg) {
  if (cfg.heterogeneity == 0.0) return {};
  const auto d = static_cast<Eigen::Index>(cfg.problem.dim());
  std::vector<ParamVector> offsets;
  for (std::size_t m = 0; m < cfg.workers; ++m) {
    SplitMix64 rng(hash_combine(cfg.heterogeneity_seed ^ 0xB1A5ULL, m));
    std::normal_distribution<double> normal(0.0, cfg.heterogeneity);
    ParamVector b(d);
    for (Eigen::Index i = 0; i < d; ++i) b(i) = normal(rng);
    offsets.push_back(std::move(b));
  }
  const ParamVector mean = average_state<double>(offsets);
  for (auto& b : offsets) b -= mean;
  return offsets;
}

class GradientSource {
 public:
  explicit GradientSource(const ClusterConfig& cfg) : cfg_(cfg), offsets_(worker_offsets(cfg)) {}

  void operator()(const ParamVector& x, std::size_t worker, Step t, ParamVector& g) const {
    cfg_.problem.gradient_into(x, g);
    if (!offsets_.empty()) g += offsets_[worker];
    cfg_.noise.perturb(g, worker, t);
  }

 private:
  const ClusterConfig& cfg_;
  std::vector<ParamVector> offsets_;
};

bool out_of_bounds(const ParamVector& x, double threshold) { return !x.allFinite() || x.norm() > threshold; }

std::optional<double> mean_relative_change(const std::vector<ParamVector>& start, const std::vector<ParamVector>& end) {
  double acc = 0.0;
  for (std::size_t m = 0; m < start.size(); ++m) {
    if (!(start[m].norm() > 0.0)) return std::nullopt;
    acc += relative_change(start[m], end[m]);
  }
  return acc / static_cast<double>(start.size());
}

MetricRow make_row(const ClusterConfig& cfg, std::int64_t round, Step step, const RoundSnapshot& snap,
                   const ParamVector& x_mean, std::int64_t comm_total) {
  MetricRow row;
  row.round = round;
  row.step = step;
  row.f_mean = cfg.problem.value(x_mean);
  if (cfg.problem.optimum()) row.dist_to_optimum = (x_mean - *cfg.problem.optimum()).norm();
  row.rel_change_x = mean_relative_change(snap.x_start, snap.x_end);
  row.rel_change_u = mean_relative_change(snap.u_start, snap.u_end);
  row.cross_worker_var_x = cross_worker_variance<double>(snap.x_end);
  row.cross_worker_var_u = cross_worker_variance<double>(snap.u_end);
  if (snap.u_start.size() >= 3)
    row.mi_estimate = mi_estimate(snap.u_start, snap.u_end, cfg.metrics.mi_coords,
                                  hash_combine(cfg.metrics.mi_seed, static_cast<std::uint64_t>(round)));
  row.cosines = cosine_panels(snap, cfg.metrics.aggregation);
  row.comm_floats = comm_total;
  return row;
}

ParamVector worker_mean_x(const std::vector<WorkerState<double>>& workers) {
  return mean_over<double>(workers.size(), [&](std::size_t m) -> const ParamVector& { return workers[m].x; });
}

void mark_diverged(RunRecord& rec, Step t) {
  rec.diverged = true;
  rec.diverged_at = t;
  rec.message = "diverged at step " + std::to_string(t);
}

class ClusterRun {
 public:
  explicit ClusterRun(const ClusterConfig& cfg)
      : cfg_(cfg), grads_(cfg), outer_(cfg.outer), anchor_(cfg.x0), cadence_(cfg.resolved_cadence()) {
    workers_.assign(cfg.workers, WorkerState<double>::initial(cfg.x0, cfg.optimizer));
    capture_round_start();
  }

  RunRecord run() {
    const bool at_start = cfg_.placement == SyncPlacement::StartOfStep;
    ParamVector g, delta;
    for (Step t = 0; t < cfg_.steps; ++t) {
      if (at_start) barrier(t, true);
      if (cfg_.metrics.trace) record_trace();
      const double eta = cfg_.optimizer.lr.at(t);
      bool bad = false;
      for (std::size_t m = 0; m < workers_.size() && !bad; ++m) {
        grads_(workers_[m].x, m, t, g);
        if (!g.allFinite()) {
          bad = true;
          break;
        }
        apply_local_step(workers_[m], g, cfg_.optimizer, eta, delta);
        bad = out_of_bounds(workers_[m].x, cfg_.divergence_threshold);
      }
      if (bad) {
        mark_diverged(rec_, t);
        break;
      }
      rec_.completed_steps = t + 1;
      if (!at_start) barrier(t + 1, true);
    }
    if (at_start && !rec_.diverged) barrier(cfg_.steps, false);
    rec_.final_x = worker_mean_x(workers_);
    if (cfg_.metrics.trace && !rec_.diverged) rec_.trajectory.push_back(rec_.final_x);
    return std::move(rec_);
  }

 private:
  void record_trace() {
    const ParamVector x_mean = worker_mean_x(workers_);
    rec_.grad_norm_sq.push_back(cfg_.problem.gradient(x_mean).squaredNorm());
    rec_.trajectory.push_back(x_mean);
  }

  void capture_round_start() {
    const std::size_t j = cfg_.metrics.momentum_index;
    x_start_.clear();
    u_start_.clear();
    for (const auto& w : workers_) {
      x_start_.push_back(w.x);
      u_start_.push_back(w.bank.first[j]);
    }
  }

  // s: completed steps for EndOfStep, current step index for StartOfStep.
  void barrier(Step s, bool sync) {
    const bool row_due = s > 0 && s % cadence_ == 0;
    RoundSnapshot snap;
    if (row_due) {
      const std::size_t j = cfg_.metrics.momentum_index;
      snap.round = round_;
      snap.x_start = std::move(x_start_);
      snap.u_start = std::move(u_start_);
      for (const auto& w : workers_) {
        snap.x_end.push_back(w.x);
        snap.u_end.push_back(w.bank.first[j]);
      }
    }
    if (sync) {
      auto outcome = sync_round(workers_, cfg_.schedule, outer_, anchor_, s, cfg_.coin_override);
      rec_.ledger.append(outcome.ledger);
    }
    if (row_due) {
      if (outer_.kind() == OuterOptimizer::Kind::Nesterov) snap.outer_momentum = outer_.buffer();
      rec_.rows.push_back(make_row(cfg_, round_, s, snap, worker_mean_x(workers_), rec_.ledger.total()));
      ++round_;
      capture_round_start();
    }
  }

  const ClusterConfig& cfg_;
  GradientSource grads_;
  OuterOptimizer outer_;
  ParamVector anchor_;
  Step cadence_;
  std::vector<WorkerState<double>> workers_;
  std::vector<ParamVector> x_start_, u_start_;
  std::int64_t round_ = 0;
  RunRecord rec_;
};

bool always_syncs(const SyncSchedule& s) {
  auto always = [&](const SyncRule& r) {
    return s.mode == SyncMode::Periodic ? r.period == 1 : r.probability >= 1.0;
  };
  if (!always(s.x)) return false;
  for (const auto& r : s.momenta)
    if (!always(r)) return false;
  return !s.v || always(*s.v);
}

}  // namespace

RunRecord run_training(const ClusterConfig& config) {
  config.validate();
  return ClusterRun(config).run();
}

RunRecord ddp_reference_run(const ClusterConfig& config) {
  config.validate();
  if (!always_syncs(config.schedule)) throw Error("ddp_reference_run: every sync period must be 1");

  const auto& spec = config.optimizer;
  const std::size_t n = spec.num_momenta();
  const std::size_t j_metric = config.metrics.momentum_index;
  const auto d = static_cast<std::int64_t>(config.x0.size());
  const Step cadence = config.resolved_cadence();
  GradientSource grads(config);
  OuterOptimizer outer = config.outer;

  RunRecord rec;
  WorkerState<double> shared = WorkerState<double>::initial(config.x0, spec);
  std::vector<WorkerState<double>> local(config.workers);
  std::vector<ParamVector> deltas(config.workers);
  ParamVector round_x = shared.x;
  ParamVector round_u = shared.bank.first[j_metric];
  std::int64_t round = 0;
  ParamVector g;

  for (Step t = 0; t < config.steps; ++t) {
    if (config.metrics.trace) {
      rec.trajectory.push_back(shared.x);
      rec.grad_norm_sq.push_back(config.problem.gradient(shared.x).squaredNorm());
    }
    const double eta = spec.lr.at(t);
    bool bad = false;
    for (std::size_t m = 0; m < config.workers; ++m) {
      grads(shared.x, m, t, g);
      if (!g.allFinite()) {
        bad = true;
        break;
      }
      local[m] = shared;
      apply_local_step(local[m], g, spec, eta, deltas[m]);
    }
    if (bad) {
      mark_diverged(rec, t);
      break;
    }

    const ParamVector x_avg = shared.x - eta * average_state<double>(deltas);
    for (std::size_t j = 0; j < n; ++j) {
      shared.bank.first[j] =
          mean_over<double>(local.size(), [&](std::size_t m) -> const ParamVector& { return local[m].bank.first[j]; });
      rec.ledger.record(t + 1, StateClass::momentum(j).label(), d);
    }
    if (shared.bank.second) {
      *shared.bank.second =
          mean_over<double>(local.size(), [&](std::size_t m) -> const ParamVector& { return *local[m].bank.second; });
      rec.ledger.record(t + 1, StateClass::second().label(), d);
    }
    shared.bank.step = local.front().bank.step;
    const ParamVector anchor = shared.x;
    shared.x = outer.step(anchor, x_avg);
    rec.ledger.record(t + 1, StateClass::params().label(), d);

    if (out_of_bounds(shared.x, config.divergence_threshold)) {
      mark_diverged(rec, t);
      break;
    }
    rec.completed_steps = t + 1;

    if ((t + 1) % cadence == 0) {
      RoundSnapshot snap;
      snap.round = round;
      for (std::size_t m = 0; m < config.workers; ++m) {
        snap.x_start.push_back(round_x);
        snap.u_start.push_back(round_u);
        snap.x_end.push_back(local[m].x);
        snap.u_end.push_back(local[m].bank.first[j_metric]);
      }
      if (outer.kind() == OuterOptimizer::Kind::Nesterov) snap.outer_momentum = outer.buffer();
      rec.rows.push_back(make_row(config, round, t + 1, snap, shared.x, rec.ledger.total()));
      ++round;
      round_x = shared.x;
      round_u = shared.bank.first[j_metric];
    }
  }
  rec.final_x = shared.x;
  if (config.metrics.trace && !rec.diverged) rec.trajectory.push_back(shared.x);
  return rec;
}

const std::vector<std::string>& run_csv_columns() {
  static const std::vector<std::string> columns = {
      "round",          "step",          "f_mean",
      "dist_to_optimum", "rel_change_x",  "rel_change_u",
      "cross_worker_var_x", "cross_worker_var_u", "mi_estimate_nats",
      "cos_localpg_globalmom", "cos_localpg_localmom", "cos_localpg_globalpg",
      "cos_localmom_globalmom", "comm_floats", "comm_bytes"};
  return columns;
}

void write_run_csv(std::ostream& os, const RunRecord& record) {
  const auto& cols = run_csv_columns();
  for (std::size_t i = 0; i < cols.size(); ++i) os << (i ? "," : "") << cols[i];
  os << '\n';
  for (const auto& r : record.rows) {
    os << r.round << ',' << r.step << ',' << format_number(r.f_mean) << ',' << format_number(r.dist_to_optimum) << ','
       << format_number(r.rel_change_x) << ',' << format_number(r.rel_change_u) << ','
       << format_number(r.cross_worker_var_x) << ',' << format_number(r.cross_worker_var_u) << ','
       << format_number(r.mi_estimate);
    for (const auto& c : r.cosines) os << ',' << format_number(c);
    os << ',' << r.comm_floats << ',' << r.comm_floats * 4 << '\n';
  }
}

}  // namespace mtdao
