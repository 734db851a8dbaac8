// SPDX-License-Identifier: Apache-2.0
#include "mtdao/config.hpp"

#include <cmath>
#include <fstream>
#include <set>

namespace mtdao {

namespace {

std::string join_key(const std::string& path, const std::string& key) {
  return path.empty() ? key : path + "." + key;
}

template <typename T>
T convert(const Json& j, const std::string& key) {
  try {
    if constexpr (std::is_same_v<T, bool>) {
      if (!j.is_boolean()) throw Error(key + ": expected a boolean");
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!j.is_string()) throw Error(key + ": expected a string");
    } else if constexpr (std::is_integral_v<T>) {
      if (!j.is_number_integer()) throw Error(key + ": expected an integer");
      if constexpr (std::is_unsigned_v<T>) {
        if (j.is_number_integer() && !j.is_number_unsigned() && j.get<std::int64_t>() < 0)
          throw Error(key + ": must be non-negative");
      }
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!j.is_number()) throw Error(key + ": expected a number");
    }
    return j.get<T>();
  } catch (const nlohmann::json::exception&) {
    throw Error(key + ": has the wrong type");
  }
}

template <typename T>
std::vector<T> convert_list(const Json& j, const std::string& key) {
  if (!j.is_array()) throw Error(key + ": expected an array");
  std::vector<T> out;
  for (std::size_t i = 0; i < j.size(); ++i) out.push_back(convert<T>(j[i], key + "[" + std::to_string(i) + "]"));
  return out;
}

// Object view that remembers which keys were read so leftovers can be reported.
class Object {
 public:
  Object(const Json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j.is_object()) throw Error((path_.empty() ? std::string("config") : path_) + ": expected an object");
  }

  bool has(const std::string& key) {
    seen_.insert(key);
    return j_.contains(key) && !j_.at(key).is_null();
  }
  const Json& raw(const std::string& key) {
    seen_.insert(key);
    return j_.at(key);
  }
  std::string key(const std::string& k) const { return join_key(path_, k); }

  template <typename T>
  T get(const std::string& k, T fallback) {
    return has(k) ? convert<T>(raw(k), key(k)) : fallback;
  }
  template <typename T>
  std::vector<T> list(const std::string& k, std::vector<T> fallback) {
    return has(k) ? convert_list<T>(raw(k), key(k)) : fallback;
  }

  void finish() const {
    for (const auto& item : j_.items())
      if (!seen_.count(item.key())) throw Error(key(item.key()) + ": unknown key");
  }

 private:
  const Json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

Problem parse_problem(const Json& j) {
  Object o(j, "problem");
  const auto kind = o.get<std::string>("kind", "rosenbrock");
  Problem p = Problem::rosenbrock();
  if (kind == "rosenbrock") {
  } else if (kind == "quadratic_1d") {
    p = Problem::quadratic_1d(o.get<double>("lambda", 1.0));
  } else if (kind == "random_quadratic") {
    p = Problem::random_quadratic(o.get<std::size_t>("dim", 64), o.get<double>("condition_number", 100.0),
                                  o.get<std::uint64_t>("seed", 0));
  } else if (kind == "logistic_regression") {
    p = Problem::logistic_regression(o.get<std::size_t>("dim", 20), o.get<std::size_t>("samples", 256),
                                     o.get<std::uint64_t>("seed", 0), o.get<double>("l2", 1e-2));
  } else {
    throw Error("problem.kind: unknown problem '" + kind + "'");
  }
  o.finish();
  return p;
}

Json problem_json(const Problem& p) {
  Json j;
  j["kind"] = p.name();
  switch (p.kind()) {
    case Problem::Kind::Rosenbrock:
      break;
    case Problem::Kind::Quadratic1D:
      j["lambda"] = p.lambda();
      break;
    case Problem::Kind::RandomQuadratic:
      j["dim"] = p.dim();
      j["condition_number"] = p.condition_number();
      j["seed"] = p.seed();
      break;
    case Problem::Kind::LogisticRegression:
      j["dim"] = p.dim();
      j["samples"] = p.samples();
      j["seed"] = p.seed();
      j["l2"] = p.l2();
      break;
  }
  return j;
}

LRSchedule parse_lr(const Json& j) {
  if (j.is_number()) return LRSchedule::constant(j.get<double>());
  Object o(j, "optimizer.lr");
  const auto kind = o.get<std::string>("kind", "constant");
  LRSchedule s;
  if (kind == "constant") {
    s = LRSchedule::constant(o.get<double>("eta", 1e-3));
  } else if (kind == "wsd") {
    s = LRSchedule::wsd(o.get<double>("peak", 1e-3), o.get<Step>("warmup", 0), o.get<Step>("total", 0),
                        o.get<Step>("cooldown", 0));
  } else {
    throw Error("optimizer.lr.kind: unknown schedule '" + kind + "'");
  }
  o.finish();
  return s;
}

Json lr_json(const LRSchedule& s) {
  if (s.kind() == LRSchedule::Kind::Constant) return Json{{"kind", "constant"}, {"eta", s.peak()}};
  return Json{{"kind", "wsd"}, {"peak", s.peak()}, {"warmup", s.warmup()}, {"total", s.total()}, {"cooldown", s.cooldown()}};
}

ClipRule parse_clip(const Json& j, ClipRule rule) {
  Object o(j, "optimizer.clip");
  const auto kind = o.get<std::string>("kind", "none");
  if (kind == "none") {
    rule = ClipRule::none();
  } else if (kind == "global_norm") {
    rule = ClipRule::global_norm(o.get<double>("radius", 1.0));
  } else if (kind == "per_coordinate") {
    rule = ClipRule::per_coordinate(o.get<double>("scale", 0.25), o.get<double>("exponent", 0.25));
  } else {
    throw Error("optimizer.clip.kind: unknown clip rule '" + kind + "'");
  }
  o.finish();
  return rule;
}

Json clip_json(const ClipRule& c) {
  switch (c.kind) {
    case ClipRule::Kind::None:
      return Json{{"kind", "none"}};
    case ClipRule::Kind::GlobalNorm:
      return Json{{"kind", "global_norm"}, {"radius", c.radius}};
    case ClipRule::Kind::PerCoordinate:
      break;
  }
  return Json{{"kind", "per_coordinate"}, {"scale", c.scale}, {"exponent", c.exponent}};
}

OptimizerSpec parse_optimizer(const Json& j) {
  Object o(j, "optimizer");
  const auto family_name = o.get<std::string>("family", "adam");
  Family family;
  try {
    family = family_from_string(family_name);
  } catch (const Error&) {
    throw Error("optimizer.family: unknown family '" + family_name + "'");
  }
  OptimizerSpec s;
  switch (family) {
    case Family::SGDM:
      s = OptimizerSpec::sgdm({0.9}, {1.0}, 1e-3);
      break;
    case Family::Adam:
      s = OptimizerSpec::adam({0.9}, 0.999, {1.0}, 1e-3);
      break;
    case Family::ADOPT:
      s = OptimizerSpec::adopt({0.9}, 0.9999, {1.0}, 1e-3);
      break;
  }
  s.betas1 = o.list<double>("betas1", s.betas1);
  s.omegas = o.list<double>("omegas", s.omegas);
  s.beta2 = o.get<double>("beta2", s.beta2);
  s.epsilon = o.get<double>("epsilon", s.epsilon);
  if (o.has("lr")) s.lr = parse_lr(o.raw("lr"));
  if (o.has("clip")) s.clip = parse_clip(o.raw("clip"), s.clip);
  s.bias_correction = o.get<bool>("bias_correction", s.bias_correction);
  s.adopt_prev_v = o.get<bool>("adopt_prev_v", s.adopt_prev_v);
  const auto form = o.get<std::string>("momentum_form", "ema");
  if (form == "ema") {
    s.momentum_form = MomentumForm::Ema;
  } else if (form == "standard") {
    s.momentum_form = MomentumForm::Standard;
  } else {
    throw Error("optimizer.momentum_form: expected 'ema' or 'standard'");
  }
  o.finish();
  return s;
}

Json optimizer_json(const OptimizerSpec& s) {
  Json j;
  j["family"] = to_string(s.family);
  j["betas1"] = s.betas1;
  j["omegas"] = s.omegas;
  if (s.has_second_momentum()) j["beta2"] = s.beta2;
  j["epsilon"] = s.epsilon;
  j["lr"] = lr_json(s.lr);
  j["clip"] = clip_json(s.clip);
  j["bias_correction"] = s.bias_correction;
  j["adopt_prev_v"] = s.adopt_prev_v;
  j["momentum_form"] = s.momentum_form == MomentumForm::Ema ? "ema" : "standard";
  return j;
}

SyncSchedule parse_schedule(const Json& j, const OptimizerSpec& opt) {
  Object o(j, "schedule");
  const auto mode = o.get<std::string>("mode", "periodic");
  SyncSchedule s;
  if (mode == "periodic") {
    const Step k_x = o.get<Step>("x", 1);
    const auto k_j = o.list<Step>("momenta", std::vector<Step>(opt.num_momenta(), k_x));
    std::optional<Step> k_v;
    if (opt.has_second_momentum()) k_v = k_x;
    if (o.has("v")) k_v = convert<Step>(o.raw("v"), "schedule.v");
    s = SyncSchedule::periodic(k_x, k_j, k_v);
  } else if (mode == "probabilistic") {
    const double p_x = o.get<double>("x", 1.0);
    const auto p_j = o.list<double>("momenta", std::vector<double>(opt.num_momenta(), p_x));
    std::optional<double> p_v;
    if (opt.has_second_momentum()) p_v = p_x;
    if (o.has("v")) p_v = convert<double>(o.raw("v"), "schedule.v");
    s = SyncSchedule::probabilistic(p_x, p_j, p_v, 0);
  } else {
    throw Error("schedule.mode: expected 'periodic' or 'probabilistic'");
  }
  o.finish();
  return s;
}

Json schedule_json(const SyncSchedule& s) {
  Json j;
  const bool periodic = s.mode == SyncMode::Periodic;
  j["mode"] = periodic ? "periodic" : "probabilistic";
  auto value = [&](const SyncRule& r) { return periodic ? Json(r.period) : Json(r.probability); };
  j["x"] = value(s.x);
  Json momenta = Json::array();
  for (const auto& r : s.momenta) momenta.push_back(value(r));
  j["momenta"] = momenta;
  if (s.v) j["v"] = value(*s.v);
  return j;
}

OuterOptimizer parse_outer(const Json& j) {
  Object o(j, "outer");
  const auto kind = o.get<std::string>("kind", "average");
  OuterOptimizer outer;
  if (kind == "average") {
    outer = OuterOptimizer::average();
  } else if (kind == "nesterov") {
    outer = OuterOptimizer::nesterov(o.get<double>("lr", 0.7), o.get<double>("beta", 0.9));
  } else {
    throw Error("outer.kind: expected 'average' or 'nesterov'");
  }
  o.finish();
  return outer;
}

Json outer_json(const OuterOptimizer& outer) {
  if (outer.kind() == OuterOptimizer::Kind::Average) return Json{{"kind", "average"}};
  return Json{{"kind", "nesterov"}, {"lr", outer.lr()}, {"beta", outer.beta()}};
}

MetricOptions parse_metrics(const Json& j) {
  Object o(j, "metrics");
  MetricOptions m;
  m.momentum_index = o.get<std::size_t>("momentum_index", m.momentum_index);
  m.mi_coords = o.get<std::size_t>("mi_coords", m.mi_coords);
  const auto agg = o.get<std::string>("aggregation", "mean");
  if (agg == "mean") {
    m.aggregation = PanelAggregation::Mean;
  } else if (agg == "median") {
    m.aggregation = PanelAggregation::Median;
  } else {
    throw Error("metrics.aggregation: expected 'mean' or 'median'");
  }
  m.cadence = o.get<Step>("cadence", m.cadence);
  m.trace = o.get<bool>("trace", m.trace);
  o.finish();
  return m;
}

Json metrics_json(const MetricOptions& m, Step resolved_cadence) {
  return Json{{"momentum_index", m.momentum_index},
              {"mi_coords", m.mi_coords},
              {"aggregation", m.aggregation == PanelAggregation::Mean ? "mean" : "median"},
              {"cadence", resolved_cadence},
              {"trace", m.trace}};
}

}  // namespace

ClusterConfig ExperimentConfig::for_seed(std::uint64_t seed) const {
  ClusterConfig c = cluster;
  c.noise = NoiseModel::gaussian(noise_sigma, seed);
  c.schedule.rng_seed = seed;
  c.heterogeneity_seed = seed;
  c.metrics.mi_seed = seed;
  return c;
}

ExperimentConfig parse_experiment(const Json& doc) {
  Object o(doc, "");
  ExperimentConfig e;
  ClusterConfig& c = e.cluster;
  e.seeds = o.list<std::uint64_t>("seeds", e.seeds);
  if (e.seeds.empty()) throw Error("seeds: at least one seed is required");
  if (std::set<std::uint64_t>(e.seeds.begin(), e.seeds.end()).size() != e.seeds.size())
    throw Error("seeds: duplicate seed");
  c.workers = o.get<std::size_t>("workers", 1);
  c.steps = o.get<Step>("steps", 100);
  c.problem = o.has("problem") ? parse_problem(o.raw("problem")) : Problem::rosenbrock();
  c.x0 = c.problem.default_start();
  if (o.has("x0")) {
    const auto x0 = convert_list<double>(o.raw("x0"), "x0");
    c.x0 = Eigen::Map<const ParamVector>(x0.data(), static_cast<Eigen::Index>(x0.size()));
  }
  e.noise_sigma = o.get<double>("noise_sigma", 0.0);
  if (!(e.noise_sigma >= 0.0)) throw Error("noise_sigma: must be non-negative");
  c.heterogeneity = o.get<double>("heterogeneity", 0.0);
  c.optimizer = parse_optimizer(o.has("optimizer") ? o.raw("optimizer") : Json::object());
  c.schedule = parse_schedule(o.has("schedule") ? o.raw("schedule") : Json::object(), c.optimizer);
  c.outer = o.has("outer") ? parse_outer(o.raw("outer")) : OuterOptimizer::average();
  const auto placement = o.get<std::string>("placement", "end_of_step");
  if (placement == "end_of_step") {
    c.placement = SyncPlacement::EndOfStep;
  } else if (placement == "start_of_step") {
    c.placement = SyncPlacement::StartOfStep;
  } else {
    throw Error("placement: expected 'end_of_step' or 'start_of_step'");
  }
  if (o.has("metrics")) c.metrics = parse_metrics(o.raw("metrics"));
  c.divergence_threshold = o.get<double>("divergence_threshold", c.divergence_threshold);
  o.finish();
  e.for_seed(e.seeds.front()).validate();
  return e;
}

Json to_json(const ExperimentConfig& e) {
  const ClusterConfig& c = e.cluster;
  Json j;
  j["seeds"] = e.seeds;
  j["workers"] = c.workers;
  j["steps"] = c.steps;
  j["problem"] = problem_json(c.problem);
  j["x0"] = std::vector<double>(c.x0.data(), c.x0.data() + c.x0.size());
  j["noise_sigma"] = e.noise_sigma;
  j["heterogeneity"] = c.heterogeneity;
  j["optimizer"] = optimizer_json(c.optimizer);
  j["schedule"] = schedule_json(c.schedule);
  j["outer"] = outer_json(c.outer);
  j["placement"] = c.placement == SyncPlacement::EndOfStep ? "end_of_step" : "start_of_step";
  j["metrics"] = metrics_json(c.metrics, c.resolved_cadence());
  j["divergence_threshold"] = c.divergence_threshold;
  return j;
}

TheoryParams parse_theory(const Json& doc) {
  Object o(doc, "theory");
  TheoryParams p;
  p.betas = o.list<double>("betas", {});
  p.omegas = o.list<double>("omegas", std::vector<double>(p.betas.size(), 1.0 / std::max<std::size_t>(1, p.betas.size())));
  const bool has_px = o.has("p_x"), has_kx = o.has("K_x");
  if (has_px && has_kx) throw Error("theory.K_x: give either p_x or K_x, not both");
  if (has_kx) {
    const auto k = convert<Step>(o.raw("K_x"), "theory.K_x");
    if (k < 1) throw Error("theory.K_x: must be >= 1");
    p.p_x = 1.0 / static_cast<double>(k);
  } else {
    p.p_x = o.get<double>("p_x", 1.0);
  }
  const bool has_pj = o.has("p_j"), has_kj = o.has("K_j");
  if (has_pj && has_kj) throw Error("theory.K_j: give either p_j or K_j, not both");
  if (has_kj) {
    for (Step k : convert_list<Step>(o.raw("K_j"), "theory.K_j")) {
      if (k < 1) throw Error("theory.K_j: each period must be >= 1");
      p.p_j.push_back(1.0 / static_cast<double>(k));
    }
  } else {
    p.p_j = o.list<double>("p_j", std::vector<double>(p.betas.size(), p.p_x));
  }
  p.L = o.get<double>("L", p.L);
  p.B2 = o.get<double>("B2", p.B2);
  p.G2 = o.get<double>("G2", p.G2);
  p.sigma2 = o.get<double>("sigma2", p.sigma2);
  p.M = o.get<std::size_t>("M", p.M);
  p.T = o.get<Step>("T", p.T);
  o.finish();
  p.validate();
  return p;
}

Json to_json(const TheoryParams& p) {
  return Json{{"betas", p.betas}, {"omegas", p.omegas}, {"p_x", p.p_x}, {"p_j", p.p_j},
              {"L", p.L},         {"B2", p.B2},         {"G2", p.G2},   {"sigma2", p.sigma2},
              {"M", p.M},         {"T", p.T}};
}

CostConfig parse_cost(const Json& doc) {
  Object o(doc, "cost");
  CostConfig c;
  const auto preset = o.get<std::string>("preset", "1b");
  if (preset != "1b") throw Error("cost.preset: only '1b' is available");
  c.params = CostParams::one_billion_preset();
  c.params.d = o.get<double>("d", c.params.d);
  c.params.M = o.get<std::size_t>("M", c.params.M);
  c.params.latency = o.get<double>("latency", c.params.latency);
  c.params.T = o.get<double>("T", c.params.T);
  c.params.t_compute = o.get<double>("t_compute", c.params.t_compute);
  c.params.bytes_per_float = o.get<int>("bytes_per_float", c.params.bytes_per_float);

  if (!o.has("bandwidths_gbps")) {
    c.bandwidths_gbps = {1, 2, 5, 10, 25, 50, 100, 200, 400};
  } else if (o.raw("bandwidths_gbps").is_array()) {
    c.bandwidths_gbps = convert_list<double>(o.raw("bandwidths_gbps"), "cost.bandwidths_gbps");
  } else {
    Object r(o.raw("bandwidths_gbps"), "cost.bandwidths_gbps");
    const double lo = r.get<double>("min", 1.0), hi = r.get<double>("max", 400.0);
    const auto n = r.get<std::size_t>("points", 40);
    r.finish();
    if (!(lo > 0.0) || !(hi >= lo)) throw Error("cost.bandwidths_gbps: bandwidth must be positive with min <= max");
    if (n < 1) throw Error("cost.bandwidths_gbps.points: must be >= 1");
    for (std::size_t i = 0; i < n; ++i)
      c.bandwidths_gbps.push_back(n == 1 ? lo : lo * std::pow(hi / lo, static_cast<double>(i) / static_cast<double>(n - 1)));
  }
  if (c.bandwidths_gbps.empty()) throw Error("cost.bandwidths_gbps: at least one bandwidth is required");
  for (double b : c.bandwidths_gbps)
    if (!(b > 0.0)) throw Error("cost.bandwidths_gbps: bandwidth must be positive");

  if (!o.has("strategies") || o.raw("strategies").is_string()) {
    const auto name = o.has("strategies") ? o.raw("strategies").get<std::string>() : std::string("adam");
    if (name == "adam") {
      c.strategies = adam_strategy_presets();
    } else if (name == "adopt") {
      c.strategies = adopt_strategy_presets();
    } else {
      throw Error("cost.strategies: expected 'adam', 'adopt' or a list");
    }
  } else {
    const Json& list = o.raw("strategies");
    if (!list.is_array()) throw Error("cost.strategies: expected 'adam', 'adopt' or a list");
    for (std::size_t i = 0; i < list.size(); ++i) {
      Object s(list[i], "cost.strategies[" + std::to_string(i) + "]");
      const auto name = s.get<std::string>("name", "strategy " + std::to_string(i));
      const auto kind = s.get<std::string>("kind", "unified");
      if (kind == "unified") {
        c.strategies.push_back(Strategy::unified(name, s.get<double>("k", 32)));
      } else if (kind == "halflife") {
        c.strategies.push_back(Strategy::halflife(name, s.get<double>("k_x", 32), s.get<double>("k_u", 32),
                                                  s.get<double>("k_v", 32)));
      } else {
        throw Error(s.key("kind") + ": expected 'unified' or 'halflife'");
      }
      s.finish();
    }
  }
  for (const auto& s : c.strategies)
    if (!(s.k_x >= 1.0 && s.k_u >= 1.0 && s.k_v >= 1.0))
      throw Error("cost.strategies: periods must be >= 1 (" + s.name + ")");
  o.finish();
  CostParams probe = c.params;
  probe.bandwidth = gbps_to_bytes_per_second(c.bandwidths_gbps.front());
  probe.validate();
  return c;
}

Json to_json(const CostConfig& c) {
  Json strategies = Json::array();
  for (const auto& s : c.strategies) {
    if (s.kind == Strategy::Kind::Unified)
      strategies.push_back(Json{{"name", s.name}, {"kind", "unified"}, {"k", s.k_x}});
    else
      strategies.push_back(Json{{"name", s.name}, {"kind", "halflife"}, {"k_x", s.k_x}, {"k_u", s.k_u}, {"k_v", s.k_v}});
  }
  return Json{{"preset", "1b"},
              {"d", c.params.d},
              {"M", c.params.M},
              {"latency", c.params.latency},
              {"T", c.params.T},
              {"t_compute", c.params.t_compute},
              {"bytes_per_float", c.params.bytes_per_float},
              {"bandwidths_gbps", c.bandwidths_gbps},
              {"strategies", strategies}};
}

Json load_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(path + ": cannot open config file");
  try {
    return Json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(path + ": invalid JSON (" + std::string(e.what()) + ")");
  }
}

}  // namespace mtdao
