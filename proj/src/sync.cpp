// SPDX-License-Identifier: Apache-2.0
#include "mtdao/sync.hpp"

#include <cmath>
#include <ostream>

#include "mtdao/random.hpp"

namespace mtdao {

std::string StateClass::label() const {
  switch (kind) {
    case Kind::Params: return "x";
    case Kind::Momentum: return "u" + std::to_string(index + 1);
    case Kind::Second: return "v";
  }
  return "?";
}

std::uint64_t StateClass::stream_id() const {
  switch (kind) {
    case Kind::Params: return 0;
    case Kind::Second: return 1;
    case Kind::Momentum: return 2 + index;
  }
  return 0;
}

SyncSchedule SyncSchedule::periodic(Step k_x, std::vector<Step> k_momenta, std::optional<Step> k_v) {
  SyncSchedule s;
  s.mode = SyncMode::Periodic;
  s.x.period = k_x;
  for (Step k : k_momenta) s.momenta.push_back({k, 1.0});
  if (k_v) s.v = SyncRule{*k_v, 1.0};
  return s;
}

SyncSchedule SyncSchedule::probabilistic(double p_x, std::vector<double> p_momenta, std::optional<double> p_v,
                                         std::uint64_t seed) {
  SyncSchedule s;
  s.mode = SyncMode::Probabilistic;
  s.x.probability = p_x;
  for (double p : p_momenta) s.momenta.push_back({1, p});
  if (p_v) s.v = SyncRule{1, *p_v};
  s.rng_seed = seed;
  return s;
}

SyncSchedule SyncSchedule::every_step(std::size_t num_momenta, bool has_second) {
  std::optional<Step> kv;
  if (has_second) kv = 1;
  return periodic(1, std::vector<Step>(num_momenta, 1), kv);
}

const SyncRule& SyncSchedule::rule_for(StateClass cls) const {
  switch (cls.kind) {
    case StateClass::Kind::Params: return x;
    case StateClass::Kind::Momentum:
      if (cls.index >= momenta.size()) throw Error("sync schedule has no rule for " + cls.label());
      return momenta[cls.index];
    case StateClass::Kind::Second:
      if (!v) throw Error("sync schedule has no rule for v");
      return *v;
  }
  throw Error("unknown state class");
}

void SyncSchedule::validate(std::size_t num_momenta, bool has_second) const {
  if (momenta.size() != num_momenta)
    throw Error("schedule.momenta: expected " + std::to_string(num_momenta) + " rules, got " +
                std::to_string(momenta.size()));
  if (has_second && !v) throw Error("schedule.v: required for adaptive optimizers");
  if (!has_second && v) throw Error("schedule.v: optimizer has no second momentum");
  auto check = [&](const SyncRule& r, const std::string& key) {
    if (mode == SyncMode::Periodic) {
      if (r.period < 1) throw Error(key + ": period must be >= 1");
    } else if (!(r.probability >= 0.0 && r.probability <= 1.0)) {
      throw Error(key + ": probability must lie in [0, 1]");
    }
  };
  check(x, "schedule.x");
  for (std::size_t j = 0; j < momenta.size(); ++j) check(momenta[j], "schedule.momenta[" + std::to_string(j) + "]");
  if (v) check(*v, "schedule.v");
}

double shared_coin(std::uint64_t seed, StateClass cls, Step t) {
  const std::uint64_t h = hash_combine(hash_combine(seed ^ 0xC0FFEEULL, cls.stream_id()), static_cast<std::uint64_t>(t));
  return to_unit_interval(mix64(h));
}

bool should_sync(const SyncSchedule& schedule, StateClass cls, Step t, double coin) {
  const SyncRule& rule = schedule.rule_for(cls);
  if (schedule.mode == SyncMode::Periodic) return t % rule.period == 0;
  return coin < rule.probability;
}

OuterOptimizer OuterOptimizer::nesterov(double lr, double beta) {
  if (!(lr > 0.0)) throw Error("outer.lr: must be positive");
  if (!(beta >= 0.0 && beta < 1.0)) throw Error("outer.beta: must lie in [0, 1)");
  OuterOptimizer o;
  o.kind_ = Kind::Nesterov;
  o.lr_ = lr;
  o.beta_ = beta;
  return o;
}

ParamVector OuterOptimizer::step(const ParamVector& anchor, const ParamVector& x_avg) {
  if (kind_ == Kind::Average) return x_avg;
  if (anchor.size() == 0) throw Error("nesterov outer step needs the previous sync snapshot");
  require_same_size(anchor, x_avg, "outer_step");
  const ParamVector pseudo_grad = anchor - x_avg;
  if (!buffer_) buffer_ = ParamVector::Zero(anchor.size());
  *buffer_ = beta_ * *buffer_ + pseudo_grad;
  return anchor - lr_ * (pseudo_grad + beta_ * *buffer_);
}

void CommLedger::record(Step step, const std::string& state_class, std::int64_t floats) {
  events_.push_back({step, state_class, floats});
  totals_[state_class] += floats;
}

void CommLedger::append(const CommLedger& other) {
  for (const auto& e : other.events_) record(e.step, e.state_class, e.floats);
}

std::int64_t CommLedger::total(const std::string& state_class) const {
  auto it = totals_.find(state_class);
  return it == totals_.end() ? 0 : it->second;
}

std::int64_t CommLedger::total() const {
  std::int64_t sum = 0;
  for (const auto& [_, n] : totals_) sum += n;
  return sum;
}

void CommLedger::write_csv(std::ostream& os) const {
  os << "step,state_class,floats_transferred\n";
  for (const auto& e : events_) os << e.step << ',' << e.state_class << ',' << e.floats << '\n';
}

namespace {

template <typename Get, typename Set>
void replace_with_mean(std::span<WorkerState<double>> workers, Get get, Set set) {
  const ParamVector mean =
      mean_over<double>(workers.size(), [&](std::size_t m) -> const ParamVector& { return get(workers[m]); });
  for (auto& w : workers) set(w, mean);
}

}  // namespace

SyncOutcome sync_round(std::span<WorkerState<double>> workers, const SyncSchedule& schedule, OuterOptimizer& outer,
                       ParamVector& anchor, Step t, const CoinSource& coins) {
  SyncOutcome out;
  if (workers.empty()) return out;
  const auto d = static_cast<std::int64_t>(workers.front().x.size());

  auto due = [&](StateClass cls) {
    const double coin = schedule.mode == SyncMode::Probabilistic
                            ? (coins ? coins(cls, t) : shared_coin(schedule.rng_seed, cls, t))
                            : 0.0;
    return should_sync(schedule, cls, t, coin);
  };

  for (std::size_t j = 0; j < schedule.momenta.size(); ++j) {
    const auto cls = StateClass::momentum(j);
    if (!due(cls)) continue;
    replace_with_mean(
        workers, [j](const WorkerState<double>& w) -> const ParamVector& { return w.bank.first[j]; },
        [j](WorkerState<double>& w, const ParamVector& m) { w.bank.first[j] = m; });
    out.ledger.record(t, cls.label(), d);
  }

  if (schedule.v && due(StateClass::second())) {
    replace_with_mean(
        workers, [](const WorkerState<double>& w) -> const ParamVector& { return *w.bank.second; },
        [](WorkerState<double>& w, const ParamVector& m) { *w.bank.second = m; });
    out.ledger.record(t, StateClass::second().label(), d);
  }

  if (due(StateClass::params())) {
    const ParamVector x_avg =
        mean_over<double>(workers.size(), [&](std::size_t m) -> const ParamVector& { return workers[m].x; });
    ParamVector x_new = outer.step(anchor, x_avg);
    for (auto& w : workers) w.x = x_new;
    anchor = std::move(x_new);
    out.params_synced = true;
    out.ledger.record(t, StateClass::params().label(), d);
  }
  return out;
}

double comm_reduction_factor(const SyncSchedule& schedule) {
  if (schedule.mode != SyncMode::Periodic) throw Error("comm_reduction_factor: periodic schedule required");
  double rate = 1.0 / static_cast<double>(schedule.x.period);
  for (const auto& r : schedule.momenta) rate += 1.0 / static_cast<double>(r.period);
  if (schedule.v) rate += 1.0 / static_cast<double>(schedule.v->period);
  return 1.0 / rate;
}

}  // namespace mtdao
