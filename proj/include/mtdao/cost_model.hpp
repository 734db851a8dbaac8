// SPDX-License-Identifier: Apache-2.0
//
// Analytic all-reduce wall-clock model. One all-reduce of P floats costs
// 2 P b / B (1 - 1/M) + l seconds; compute and communication do not overlap.
#pragma once

#include <string>
#include <vector>

#include "mtdao/sync.hpp"

namespace mtdao {

struct CostParams {
  double d = 1e9;                // model floats
  std::size_t M = 4;             // workers
  double bandwidth = 12.5e9;     // bytes / second
  double latency = 1e-3;         // seconds per all-reduce
  double T = 1e4;                // steps
  double t_compute = 0.0;        // seconds
  int bytes_per_float = 4;

  void validate() const;

  /// 1B parameters on 4 GPUs with 2M-token batches: 1e4 steps, compute time from
  /// 6 N tokens FLOPs at 1.6e15 FLOP/s sustained.
  static CostParams one_billion_preset();
};

double gbps_to_bytes_per_second(double gbit_per_second);

double allreduce_event_time(double payload_floats, const CostParams& params);

/// All states (3d floats) synchronized together every K steps.
double comm_time_unified(double k, const CostParams& params);
double wall_clock_unified(double k, const CostParams& params);

/// Parameters, first and second momenta (d floats each) on their own periods.
double comm_time_halflife(double k_x, double k_u, double k_v, const CostParams& params);
double wall_clock_halflife(double k_x, double k_u, double k_v, const CostParams& params);

struct Strategy {
  enum class Kind { Unified, HalfLife };
  std::string name;
  Kind kind = Kind::Unified;
  double k_x = 32;
  double k_u = 32;
  double k_v = 32;

  static Strategy unified(std::string name, double k);
  static Strategy halflife(std::string name, double k_x, double k_u, double k_v);

  double comm_seconds(const CostParams& params) const;
  double total_seconds(const CostParams& params) const;
};

/// Rows of the published sync-frequency table, K_x = 32 throughout.
std::vector<Strategy> adam_strategy_presets();
std::vector<Strategy> adopt_strategy_presets();

struct CostRow {
  double bandwidth_gbps = 0.0;
  std::string method;
  double total_seconds = 0.0;
  double comm_seconds = 0.0;
};

std::vector<CostRow> bandwidth_sweep(const CostParams& params, const std::vector<Strategy>& strategies,
                                     const std::vector<double>& bandwidths_gbps);

/// Columns: bandwidth_gbps,method,total_seconds,comm_seconds
void write_cost_csv(std::ostream& os, const std::vector<CostRow>& rows);

/// Communication seconds implied by a simulation ledger: one all-reduce per event.
double ledger_comm_seconds(const CommLedger& ledger, const CostParams& params);

}  // namespace mtdao
