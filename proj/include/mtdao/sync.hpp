// SPDX-License-Identifier: Apache-2.0
//
// Cross-worker synchronization: when each state class is averaged, the
// averaging itself, the outer optimizer applied to averaged parameters, and the
// ledger of floats moved.
#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mtdao/optim.hpp"
#include "mtdao/types.hpp"

namespace mtdao {

struct StateClass {
  enum class Kind { Params, Momentum, Second };
  Kind kind = Kind::Params;
  std::size_t index = 0;  // momentum index, Momentum only

  static StateClass params() { return {Kind::Params, 0}; }
  static StateClass momentum(std::size_t j) { return {Kind::Momentum, j}; }
  static StateClass second() { return {Kind::Second, 0}; }

  /// "x", "u1".."uN", "v".
  std::string label() const;
  /// Stable small integer used to separate coin streams.
  std::uint64_t stream_id() const;

  friend bool operator==(const StateClass&, const StateClass&) = default;
};

enum class SyncMode { Periodic, Probabilistic };

/// One class's rule. Periodic mode reads `period`, Probabilistic mode reads `probability`.
struct SyncRule {
  Step period = 1;
  double probability = 1.0;
};

struct SyncSchedule {
  SyncMode mode = SyncMode::Periodic;
  SyncRule x;
  std::vector<SyncRule> momenta;
  std::optional<SyncRule> v;
  std::uint64_t rng_seed = 0;

  static SyncSchedule periodic(Step k_x, std::vector<Step> k_momenta, std::optional<Step> k_v = std::nullopt);
  static SyncSchedule probabilistic(double p_x, std::vector<double> p_momenta, std::optional<double> p_v,
                                    std::uint64_t seed);
  /// Every class synchronized after every step.
  static SyncSchedule every_step(std::size_t num_momenta, bool has_second);

  const SyncRule& rule_for(StateClass cls) const;
  void validate(std::size_t num_momenta, bool has_second) const;
};

/// Coin shared by all workers for (class, step). Uniform in [0, 1), a pure function
/// of (seed, class, step) so every worker draws the same value.
double shared_coin(std::uint64_t seed, StateClass cls, Step t);

/// Periodic: t mod K == 0. Probabilistic: coin < p.
bool should_sync(const SyncSchedule& schedule, StateClass cls, Step t, double coin);

using CoinSource = std::function<double(StateClass, Step)>;

/// Coordinatewise mean. Accumulates deviations from the first entry with pairwise
/// summation in worker order, so identical inputs come back bit-exact and the result
/// does not depend on thread scheduling.
namespace detail {

template <typename Scalar, typename Get>
Vector<Scalar> pairwise_deviation_sum(const Vector<Scalar>& base, std::size_t lo, std::size_t hi, Get& get) {
  if (hi - lo == 1) {
    const Vector<Scalar>& v = get(lo);
    require_same_size(v, base, "average_state");
    return v - base;
  }
  const std::size_t mid = lo + (hi - lo) / 2;
  return pairwise_deviation_sum(base, lo, mid, get) + pairwise_deviation_sum(base, mid, hi, get);
}

}  // namespace detail

template <typename Scalar, typename Get>
Vector<Scalar> mean_over(std::size_t count, Get&& get) {
  if (count == 0) throw Error("average_state: no workers");
  const Vector<Scalar>& base = get(std::size_t{0});
  if (count == 1) return base;
  return base + detail::pairwise_deviation_sum(base, 0, count, get) / Scalar(static_cast<double>(count));
}

template <typename Scalar>
Vector<Scalar> average_state(std::span<const Vector<Scalar>> workers) {
  return mean_over<Scalar>(workers.size(), [&](std::size_t i) -> const Vector<Scalar>& { return workers[i]; });
}

class OuterOptimizer {
 public:
  enum class Kind { Average, Nesterov };

  static OuterOptimizer average() { return OuterOptimizer{}; }
  static OuterOptimizer nesterov(double lr = 0.7, double beta = 0.9);

  Kind kind() const { return kind_; }
  double lr() const { return lr_; }
  double beta() const { return beta_; }
  const std::optional<ParamVector>& buffer() const { return buffer_; }

  /// New global parameters from the previous agreed parameters and the worker mean.
  /// Nesterov: d = anchor - x_avg; buf = beta*buf + d; return anchor - lr*(d + beta*buf).
  ParamVector step(const ParamVector& anchor, const ParamVector& x_avg);

 private:
  Kind kind_ = Kind::Average;
  double lr_ = 1.0;
  double beta_ = 0.0;
  std::optional<ParamVector> buffer_;
};

inline ParamVector outer_step(OuterOptimizer& opt, const ParamVector& anchor, const ParamVector& x_avg) {
  return opt.step(anchor, x_avg);
}

struct CommEvent {
  Step step = 0;
  std::string state_class;
  std::int64_t floats = 0;
};

class CommLedger {
 public:
  void record(Step step, const std::string& state_class, std::int64_t floats);
  void append(const CommLedger& other);

  const std::vector<CommEvent>& events() const { return events_; }
  const std::map<std::string, std::int64_t>& totals() const { return totals_; }
  std::int64_t total(const std::string& state_class) const;
  std::int64_t total() const;

  /// Columns: step,state_class,floats_transferred
  void write_csv(std::ostream& os) const;

 private:
  std::vector<CommEvent> events_;
  std::map<std::string, std::int64_t> totals_;
};

struct SyncOutcome {
  CommLedger ledger;
  bool params_synced = false;
};

/// Barrier-time synchronization after `t` completed steps. Every class due at t is
/// replaced on every worker by the worker mean (parameters additionally go through
/// the outer optimizer, and `anchor` is advanced to the new global parameters).
SyncOutcome sync_round(std::span<WorkerState<double>> workers, const SyncSchedule& schedule,
                       OuterOptimizer& outer, ParamVector& anchor, Step t, const CoinSource& coins = {});

/// (1/K_x + sum_j 1/K_j + 1/K_v)^-1, the v term dropped when the schedule has none.
double comm_reduction_factor(const SyncSchedule& schedule);

}  // namespace mtdao
