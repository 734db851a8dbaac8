// SPDX-License-Identifier: Apache-2.0
#include "mtdao/cost_model.hpp"

#include <cmath>
#include <ostream>

#include "mtdao/csv.hpp"

namespace mtdao {

void CostParams::validate() const {
  if (!(d > 0.0)) throw Error("cost.d: must be positive");
  if (M < 1) throw Error("cost.M: must be >= 1");
  if (!(bandwidth > 0.0)) throw Error("cost.bandwidth: must be positive");
  if (!(latency >= 0.0)) throw Error("cost.latency: must be non-negative");
  if (!(T > 0.0)) throw Error("cost.T: must be positive");
  if (!(t_compute >= 0.0)) throw Error("cost.t_compute: must be non-negative");
  if (bytes_per_float != 2 && bytes_per_float != 4 && bytes_per_float != 8)
    throw Error("cost.bytes_per_float: must be 2, 4 or 8");
}

CostParams CostParams::one_billion_preset() {
  CostParams p;
  p.d = 1e9;
  p.M = 4;
  p.T = 1e4;
  p.latency = 1e-3;
  p.bandwidth = gbps_to_bytes_per_second(100.0);
  p.t_compute = p.T * 6.0 * p.d * 2e6 / 1.6e15;
  return p;
}

double gbps_to_bytes_per_second(double gbit_per_second) { return gbit_per_second * 1e9 / 8.0; }

double allreduce_event_time(double payload_floats, const CostParams& params) {
  if (!(payload_floats > 0.0)) throw Error("allreduce_event_time: payload must be positive");
  const double bytes = payload_floats * params.bytes_per_float;
  const double share = 1.0 - 1.0 / static_cast<double>(params.M);
  return 2.0 * bytes / params.bandwidth * share + params.latency;
}

double comm_time_unified(double k, const CostParams& params) {
  if (!(k >= 1.0)) throw Error("wall_clock_unified: K must be >= 1");
  return params.T / k * allreduce_event_time(3.0 * params.d, params);
}

double wall_clock_unified(double k, const CostParams& params) {
  return params.t_compute + comm_time_unified(k, params);
}

double comm_time_halflife(double k_x, double k_u, double k_v, const CostParams& params) {
  if (!(k_x >= 1.0 && k_u >= 1.0 && k_v >= 1.0)) throw Error("wall_clock_halflife: every K must be >= 1");
  const double events = params.T / k_x + params.T / k_u + params.T / k_v;
  return events * allreduce_event_time(params.d, params);
}

double wall_clock_halflife(double k_x, double k_u, double k_v, const CostParams& params) {
  return params.t_compute + comm_time_halflife(k_x, k_u, k_v, params);
}

Strategy Strategy::unified(std::string name, double k) { return {std::move(name), Kind::Unified, k, k, k}; }

Strategy Strategy::halflife(std::string name, double k_x, double k_u, double k_v) {
  return {std::move(name), Kind::HalfLife, k_x, k_u, k_v};
}

double Strategy::comm_seconds(const CostParams& params) const {
  return kind == Kind::Unified ? comm_time_unified(k_x, params) : comm_time_halflife(k_x, k_u, k_v, params);
}

double Strategy::total_seconds(const CostParams& params) const { return params.t_compute + comm_seconds(params); }

std::vector<Strategy> adam_strategy_presets() {
  return {
      Strategy::unified("Local Adam", 32),
      Strategy::unified("MT-DAO-Adam (Unified)", 32),
      Strategy::halflife("DES-LOC-Adam", 32, 32, 69),
      Strategy::halflife("MT-DAO-Adam (Half-Life)", 32, 693, 693),
  };
}

std::vector<Strategy> adopt_strategy_presets() {
  return {
      Strategy::unified("Local ADOPT", 32),
      Strategy::unified("MT-DAO-ADOPT (Unified)", 32),
      Strategy::halflife("DES-LOC-ADOPT", 32, 32, 6931),
      Strategy::halflife("MT-DAO-ADOPT (Half-Life)", 32, 693, 6931),
  };
}

std::vector<CostRow> bandwidth_sweep(const CostParams& params, const std::vector<Strategy>& strategies,
                                     const std::vector<double>& bandwidths_gbps) {
  std::vector<CostRow> rows;
  for (double gbps : bandwidths_gbps) {
    if (!(gbps > 0.0)) throw Error("bandwidth must be positive");
    CostParams p = params;
    p.bandwidth = gbps_to_bytes_per_second(gbps);
    p.validate();
    for (const auto& s : strategies) rows.push_back({gbps, s.name, s.total_seconds(p), s.comm_seconds(p)});
  }
  return rows;
}

void write_cost_csv(std::ostream& os, const std::vector<CostRow>& rows) {
  os << "bandwidth_gbps,method,total_seconds,comm_seconds\n";
  for (const auto& r : rows)
    os << format_number(r.bandwidth_gbps) << ',' << csv_field(r.method) << ',' << format_number(r.total_seconds) << ','
       << format_number(r.comm_seconds) << '\n';
}

double ledger_comm_seconds(const CommLedger& ledger, const CostParams& params) {
  double total = 0.0;
  for (const auto& e : ledger.events()) total += allreduce_event_time(static_cast<double>(e.floats), params);
  return total;
}

}  // namespace mtdao
