// SPDX-License-Identifier: Apache-2.0
//
// Deterministic simulated cluster. M workers draw seeded stochastic gradients,
// take worker-local optimizer steps, and meet at a barrier where the sync engine
// averages whichever state classes are due.
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mtdao/metrics.hpp"
#include "mtdao/optim.hpp"
#include "mtdao/problems.hpp"
#include "mtdao/sync.hpp"

namespace mtdao {

/// EndOfStep: barrier after the local step, with t = number of completed steps.
/// StartOfStep: barrier before the gradient of step t (0-based), including t = 0.
enum class SyncPlacement { EndOfStep, StartOfStep };

struct MetricOptions {
  std::size_t momentum_index = 0;
  std::size_t mi_coords = 256;
  std::uint64_t mi_seed = 0;
  PanelAggregation aggregation = PanelAggregation::Mean;
  /// Steps per metric row. 0 picks K_x (periodic) or round(1/p_x) (probabilistic).
  Step cadence = 0;
  /// Keep the per-step averaged iterate and its true squared gradient norm.
  bool trace = false;
};

struct ClusterConfig {
  std::size_t workers = 1;
  Step steps = 1;
  OptimizerSpec optimizer;
  SyncSchedule schedule;
  OuterOptimizer outer;
  Problem problem = Problem::rosenbrock();
  NoiseModel noise;
  ParamVector x0;
  /// Scale of a fixed per-worker gradient offset (zero mean across workers).
  double heterogeneity = 0.0;
  std::uint64_t heterogeneity_seed = 0;
  SyncPlacement placement = SyncPlacement::EndOfStep;
  MetricOptions metrics;
  double divergence_threshold = 1e12;
  /// Replaces the schedule's shared coin stream (probabilistic mode only).
  CoinSource coin_override;

  void validate() const;
  Step resolved_cadence() const;
};

struct MetricRow {
  std::int64_t round = 0;
  Step step = 0;
  double f_mean = 0.0;                    // f at the worker-mean iterate after the barrier
  std::optional<double> dist_to_optimum;
  std::optional<double> rel_change_x;
  std::optional<double> rel_change_u;
  double cross_worker_var_x = 0.0;
  double cross_worker_var_u = 0.0;
  std::optional<double> mi_estimate;
  Panels cosines;
  std::int64_t comm_floats = 0;           // cumulative
};

struct RunRecord {
  std::vector<MetricRow> rows;
  ParamVector final_x;
  CommLedger ledger;
  Step completed_steps = 0;
  bool diverged = false;
  Step diverged_at = -1;
  std::string message;
  /// trace only: averaged iterate x_0..x_T and ||grad f(x_t)||^2 for t < T.
  std::vector<ParamVector> trajectory;
  std::vector<double> grad_norm_sq;
};

RunRecord run_training(const ClusterConfig& config);

/// Oracle for the all-periods-one regime: one shared model and optimizer state,
/// each step moved by the mean of the M per-worker updates. Throws unless every
/// sync period is 1.
RunRecord ddp_reference_run(const ClusterConfig& config);

/// Column order: round,step,f_mean,dist_to_optimum,rel_change_x,rel_change_u,
/// cross_worker_var_x,cross_worker_var_u,mi_estimate_nats,cos_localpg_globalmom,
/// cos_localpg_localmom,cos_localpg_globalpg,cos_localmom_globalmom,comm_floats,comm_bytes
void write_run_csv(std::ostream& os, const RunRecord& record);
const std::vector<std::string>& run_csv_columns();

}  // namespace mtdao
