// SPDX-License-Identifier: Apache-2.0
#include "mtdao/optim.hpp"

#include <cmath>

namespace mtdao {

std::string to_string(Family family) {
  switch (family) {
    case Family::SGDM: return "sgdm";
    case Family::Adam: return "adam";
    case Family::ADOPT: return "adopt";
  }
  return "unknown";
}

Family family_from_string(const std::string& name) {
  if (name == "sgdm") return Family::SGDM;
  if (name == "adam") return Family::Adam;
  if (name == "adopt") return Family::ADOPT;
  throw Error("unknown optimizer family '" + name + "'");
}

void OptimizerSpec::validate() const {
  if (betas1.empty()) throw Error("optimizer.betas1: at least one momentum is required");
  if (omegas.size() != betas1.size())
    throw Error("optimizer.omegas: expected " + std::to_string(betas1.size()) + " entries, got " +
                std::to_string(omegas.size()));
  for (double b : betas1)
    if (!(b >= 0.0 && b < 1.0)) throw Error("optimizer.betas1: each beta must lie in [0, 1)");
  for (double w : omegas)
    if (!(w >= 0.0 && w <= 1.0)) throw Error("optimizer.omegas: each omega must lie in [0, 1]");
  if (omega_sum() > 1.0 + 1e-12) throw Error("optimizer.omegas: not a convex combination (sum > 1)");
  if (has_second_momentum() && !(beta2 >= 0.0 && beta2 < 1.0))
    throw Error("optimizer.beta2: must lie in [0, 1)");
  if (!(epsilon > 0.0)) throw Error("optimizer.epsilon: must be positive");
  if (clip.kind == ClipRule::Kind::GlobalNorm && !(clip.radius > 0.0))
    throw Error("optimizer.clip.radius: must be positive");
  if (clip.kind == ClipRule::Kind::PerCoordinate && !(clip.scale > 0.0))
    throw Error("optimizer.clip.scale: must be positive");
  if (momentum_form == MomentumForm::Standard && family != Family::SGDM)
    throw Error("optimizer.momentum_form: 'standard' is only defined for sgdm");
}

OptimizerSpec OptimizerSpec::sgdm(std::vector<double> betas, std::vector<double> omegas, double eta) {
  OptimizerSpec s;
  s.family = Family::SGDM;
  s.betas1 = std::move(betas);
  s.omegas = std::move(omegas);
  s.lr = LRSchedule::constant(eta);
  s.bias_correction = false;
  return s;
}

OptimizerSpec OptimizerSpec::adam(std::vector<double> betas, double beta2, std::vector<double> omegas,
                                  double eta) {
  OptimizerSpec s;
  s.family = Family::Adam;
  s.betas1 = std::move(betas);
  s.beta2 = beta2;
  s.omegas = std::move(omegas);
  s.lr = LRSchedule::constant(eta);
  return s;
}

OptimizerSpec OptimizerSpec::adopt(std::vector<double> betas, double beta2, std::vector<double> omegas,
                                   double eta) {
  OptimizerSpec s;
  s.family = Family::ADOPT;
  s.betas1 = std::move(betas);
  s.beta2 = beta2;
  s.omegas = std::move(omegas);
  s.epsilon = 1e-6;
  s.clip = ClipRule::per_coordinate();
  s.lr = LRSchedule::constant(eta);
  s.bias_correction = false;
  return s;
}

}  // namespace mtdao
