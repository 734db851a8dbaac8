// SPDX-License-Identifier: Apache-2.0
//
// Worker-local update rules for the multi-timescale optimizer family.
//
// Every rule works on a flat vector and knows nothing about the cluster. A rule
// keeps N first momenta u^1..u^N (each an EMA of the step direction with its own
// decay) and, for Adam/ADOPT, one second momentum v. The parameter update is the
// convex combination
//
//     (1 - sum_j w_j) * g + sum_j w_j * u^j
//
// of the current (processed) gradient and the momenta. N = 1 with w = 1 is the
// classic single-momentum optimizer; N = 1 with w < 1 is quasi-hyperbolic momentum.
#pragma once

#include <cmath>
#include <cstddef>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mtdao/lr_schedule.hpp"
#include "mtdao/types.hpp"

namespace mtdao {

enum class Family { SGDM, Adam, ADOPT };

/// How SGDM accumulates its momenta. Ema is u = b*u + (1-b)*g. Standard is the
/// undampened heavy-ball buffer u = b*u + g found in most deep learning frameworks.
enum class MomentumForm { Ema, Standard };

std::string to_string(Family family);
Family family_from_string(const std::string& name);

struct ClipRule {
  enum class Kind { None, GlobalNorm, PerCoordinate };

  Kind kind = Kind::None;
  double radius = 1.0;     // GlobalNorm
  double scale = 0.25;     // PerCoordinate: c_t = scale * t^exponent
  double exponent = 0.25;

  static ClipRule none() { return {}; }
  static ClipRule global_norm(double rho) { return {Kind::GlobalNorm, rho, 0.25, 0.25}; }
  static ClipRule per_coordinate(double scale = 0.25, double exponent = 0.25) {
    return {Kind::PerCoordinate, 1.0, scale, exponent};
  }

  /// Per-coordinate bound at 1-based step t.
  double bound_at(Step t) const { return scale * std::pow(static_cast<double>(t), exponent); }
};

struct OptimizerSpec {
  Family family = Family::Adam;
  std::vector<double> betas1{0.9};
  double beta2 = 0.999;
  std::vector<double> omegas{1.0};
  double epsilon = 1e-8;
  ClipRule clip;
  LRSchedule lr = LRSchedule::constant(1e-3);
  bool bias_correction = true;
  // ADOPT: normalize by the previous second momentum instead of the current one.
  bool adopt_prev_v = false;
  MomentumForm momentum_form = MomentumForm::Ema;

  std::size_t num_momenta() const { return betas1.size(); }
  double omega_sum() const { return std::accumulate(omegas.begin(), omegas.end(), 0.0); }
  bool has_second_momentum() const { return family != Family::SGDM; }

  /// Throws Error naming the offending field.
  void validate() const;

  static OptimizerSpec sgdm(std::vector<double> betas, std::vector<double> omegas, double eta);
  static OptimizerSpec adam(std::vector<double> betas, double beta2, std::vector<double> omegas,
                            double eta);
  static OptimizerSpec adopt(std::vector<double> betas, double beta2, std::vector<double> omegas,
                             double eta);
};

template <typename Scalar>
struct MomentumBank {
  std::vector<Vector<Scalar>> first;
  std::optional<Vector<Scalar>> second;
  Step step = 0;
};

template <typename Scalar>
struct WorkerState {
  Vector<Scalar> x;
  MomentumBank<Scalar> bank;

  /// Parameters x0 with all momenta zero.
  static WorkerState initial(const Vector<Scalar>& x0, const OptimizerSpec& spec) {
    WorkerState s;
    s.x = x0;
    s.bank.first.assign(spec.num_momenta(), Vector<Scalar>::Zero(x0.size()));
    if (spec.has_second_momentum()) s.bank.second = Vector<Scalar>::Zero(x0.size());
    return s;
  }
};

template <typename Scalar>
struct LocalStep {
  WorkerState<Scalar> state;
  Vector<Scalar> delta;
};

// ---------------------------------------------------------------------------
// Building blocks

template <typename Derived>
typename Derived::PlainObject clip_global_norm(const Eigen::MatrixBase<Derived>& g,
                                               typename Derived::Scalar rho) {
  using Scalar = typename Derived::Scalar;
  if (!(rho > Scalar(0))) throw Error("clip_global_norm: radius must be positive");
  if (!g.allFinite()) throw Error("non-finite gradient");
  const Scalar norm = g.norm();
  if (norm <= rho) return g;
  return g * (rho / norm);
}

template <typename DerivedU, typename DerivedG>
typename DerivedU::PlainObject ema_update(const Eigen::MatrixBase<DerivedU>& u_prev,
                                          const Eigen::MatrixBase<DerivedG>& g,
                                          typename DerivedU::Scalar beta) {
  require_same_size(u_prev, g, "ema_update");
  return beta * u_prev + (typename DerivedU::Scalar(1) - beta) * g;
}

template <typename Scalar>
Vector<Scalar> combined_direction(const Vector<Scalar>& g, std::span<const Vector<Scalar>> momenta,
                                  std::span<const double> omegas) {
  if (momenta.size() != omegas.size()) throw Error("combined_direction: momenta/omegas length mismatch");
  const double total = std::accumulate(omegas.begin(), omegas.end(), 0.0);
  if (total > 1.0 + 1e-12) throw Error("not a convex combination");
  Vector<Scalar> out = Scalar(1.0 - total) * g;
  for (std::size_t j = 0; j < momenta.size(); ++j) {
    require_same_size(momenta[j], g, "combined_direction");
    out += Scalar(omegas[j]) * momenta[j];
  }
  return out;
}

namespace detail {

template <typename Scalar>
void check_state(const WorkerState<Scalar>& s, const Vector<Scalar>& g, const OptimizerSpec& spec) {
  require_same_size(s.x, g, "local step");
  if (s.bank.first.size() != spec.num_momenta())
    throw Error("local step: momentum bank holds " + std::to_string(s.bank.first.size()) +
                " momenta, spec expects " + std::to_string(spec.num_momenta()));
  if (spec.omegas.size() != spec.num_momenta()) throw Error("local step: omegas/betas1 length mismatch");
  for (const auto& u : s.bank.first) require_same_size(u, g, "local step momentum");
  if (spec.has_second_momentum()) {
    if (!s.bank.second) throw Error("local step: second momentum missing");
    require_same_size(*s.bank.second, g, "local step second momentum");
  }
  if (spec.omega_sum() > 1.0 + 1e-12) throw Error("not a convex combination");
}

template <typename Scalar>
Vector<Scalar> clip_for(const ClipRule& rule, const Vector<Scalar>& g) {
  if (rule.kind == ClipRule::Kind::GlobalNorm) return clip_global_norm(g, Scalar(rule.radius));
  return g;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// In-place updates. These are what the cluster simulation calls; the pure
// *_local_step functions below wrap them.

template <typename Scalar>
void apply_sgdm_step(WorkerState<Scalar>& s, const Vector<Scalar>& g, const OptimizerSpec& spec,
                     Scalar eta, Vector<Scalar>& delta) {
  if (spec.family != Family::SGDM) throw Error("sgdm_local_step: spec family is " + to_string(spec.family));
  detail::check_state(s, g, spec);
  ++s.bank.step;
  const Vector<Scalar> ghat = detail::clip_for(spec.clip, g);
  const double w = spec.omega_sum();
  delta = Scalar(1.0 - w) * ghat;
  for (std::size_t j = 0; j < spec.num_momenta(); ++j) {
    const Scalar beta(spec.betas1[j]);
    auto& u = s.bank.first[j];
    if (spec.momentum_form == MomentumForm::Standard) {
      u = beta * u + ghat;
    } else {
      u = beta * u + (Scalar(1) - beta) * ghat;
    }
    delta += Scalar(spec.omegas[j]) * u;
  }
  s.x -= eta * delta;
}

template <typename Scalar>
void apply_adam_step(WorkerState<Scalar>& s, const Vector<Scalar>& g, const OptimizerSpec& spec, Scalar eta,
                     Vector<Scalar>& delta) {
  using std::pow;
  if (spec.family != Family::Adam) throw Error("adam_local_step: spec family is " + to_string(spec.family));
  detail::check_state(s, g, spec);
  const Step t = ++s.bank.step;
  const Vector<Scalar> ghat = detail::clip_for(spec.clip, g);
  const Scalar beta2(spec.beta2);
  auto& v = *s.bank.second;
  v = beta2 * v + (Scalar(1) - beta2) * g.cwiseAbs2();

  Vector<Scalar> numerator = Scalar(1.0 - spec.omega_sum()) * ghat;
  for (std::size_t j = 0; j < spec.num_momenta(); ++j) {
    const Scalar beta(spec.betas1[j]);
    auto& u = s.bank.first[j];
    u = beta * u + (Scalar(1) - beta) * ghat;
    Scalar weight(spec.omegas[j]);
    if (spec.bias_correction) weight /= Scalar(1) - pow(beta, Scalar(t));
    numerator += weight * u;
  }
  const Scalar v_correction =
      spec.bias_correction ? Scalar(1) - pow(beta2, Scalar(t)) : Scalar(1);
  const auto denom = ((v / v_correction).cwiseSqrt().array() + Scalar(spec.epsilon)).eval();
  if ((denom == Scalar(0)).any()) throw Error("division by zero");
  delta = (numerator.array() / denom).matrix();
  s.x -= eta * delta;
}

template <typename Scalar>
void apply_adopt_step(WorkerState<Scalar>& s, const Vector<Scalar>& g, const OptimizerSpec& spec,
                      Scalar eta, Vector<Scalar>& delta) {
  if (spec.family != Family::ADOPT) throw Error("adopt_local_step: spec family is " + to_string(spec.family));
  detail::check_state(s, g, spec);
  const Step t = ++s.bank.step;
  const Scalar beta2(spec.beta2);
  const Scalar eps(spec.epsilon);
  auto& v = *s.bank.second;

  Vector<Scalar> ghat;
  if (spec.adopt_prev_v) {
    if (t == 1) {
      // First step only seeds v; nothing to normalize by yet.
      v = g.cwiseAbs2();
      delta = Vector<Scalar>::Zero(g.size());
      return;
    }
    const auto denom = (v.cwiseSqrt().array() + eps).eval();
    if ((denom == Scalar(0)).any()) throw Error("division by zero");
    ghat = (g.array() / denom).matrix();
    v = beta2 * v + (Scalar(1) - beta2) * g.cwiseAbs2();
  } else {
    v = beta2 * v + (Scalar(1) - beta2) * g.cwiseAbs2();
    const auto denom = (v.cwiseSqrt().array() + eps).eval();
    if ((denom == Scalar(0)).any()) throw Error("division by zero");
    ghat = (g.array() / denom).matrix();
  }

  if (spec.clip.kind == ClipRule::Kind::PerCoordinate) {
    const Scalar c(spec.clip.bound_at(t));
    ghat = ghat.cwiseMax(-c).cwiseMin(c);
  } else if (spec.clip.kind == ClipRule::Kind::GlobalNorm) {
    ghat = clip_global_norm(ghat, Scalar(spec.clip.radius));
  }

  delta = Scalar(1.0 - spec.omega_sum()) * ghat;
  for (std::size_t j = 0; j < spec.num_momenta(); ++j) {
    const Scalar beta(spec.betas1[j]);
    auto& u = s.bank.first[j];
    u = beta * u + (Scalar(1) - beta) * ghat;
    delta += Scalar(spec.omegas[j]) * u;
  }
  s.x -= eta * delta;
}

/// Dispatch on spec.family.
template <typename Scalar>
void apply_local_step(WorkerState<Scalar>& s, const Vector<Scalar>& g, const OptimizerSpec& spec,
                      Scalar eta, Vector<Scalar>& delta) {
  switch (spec.family) {
    case Family::SGDM: return apply_sgdm_step(s, g, spec, eta, delta);
    case Family::Adam: return apply_adam_step(s, g, spec, eta, delta);
    case Family::ADOPT: return apply_adopt_step(s, g, spec, eta, delta);
  }
  throw Error("unknown optimizer family");
}

// ---------------------------------------------------------------------------
// Pure forms

template <typename Scalar>
LocalStep<Scalar> sgdm_local_step(const WorkerState<Scalar>& state, const Vector<Scalar>& g,
                                  const OptimizerSpec& spec, Scalar eta) {
  LocalStep<Scalar> out{state, {}};
  apply_sgdm_step(out.state, g, spec, eta, out.delta);
  return out;
}

template <typename Scalar>
LocalStep<Scalar> adam_local_step(const WorkerState<Scalar>& state, const Vector<Scalar>& g,
                                  const OptimizerSpec& spec, Scalar eta) {
  LocalStep<Scalar> out{state, {}};
  apply_adam_step(out.state, g, spec, eta, out.delta);
  return out;
}

template <typename Scalar>
LocalStep<Scalar> adopt_local_step(const WorkerState<Scalar>& state, const Vector<Scalar>& g,
                                   const OptimizerSpec& spec, Scalar eta) {
  LocalStep<Scalar> out{state, {}};
  apply_adopt_step(out.state, g, spec, eta, out.delta);
  return out;
}

template <typename Scalar>
LocalStep<Scalar> local_step(const WorkerState<Scalar>& state, const Vector<Scalar>& g,
                             const OptimizerSpec& spec, Scalar eta) {
  LocalStep<Scalar> out{state, {}};
  apply_local_step(out.state, g, spec, eta, out.delta);
  return out;
}

}  // namespace mtdao
