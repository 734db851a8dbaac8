// SPDX-License-Identifier: Apache-2.0
#include "mtdao/theory.hpp"

#include <algorithm>

namespace mtdao {

void TheoryParams::validate() const {
  if (betas.empty()) throw Error("theory.betas: at least one momentum is required");
  if (omegas.size() != betas.size()) throw Error("theory.omegas: length must match betas");
  if (p_j.size() != betas.size()) throw Error("theory.p_j: length must match betas");
  for (double b : betas)
    if (!(b >= 0.0 && b < 1.0)) throw Error("theory.betas: each beta must lie in [0, 1)");
  for (double p : p_j)
    if (!(p >= 0.0 && p <= 1.0)) throw Error("theory.p_j: each probability must lie in [0, 1]");
  if (!(p_x >= 0.0 && p_x <= 1.0)) throw Error("theory.p_x: must lie in [0, 1]");
  if (!(L > 0.0)) throw Error("theory.L: must be positive");
  if (!(sigma2 >= 0.0)) throw Error("theory.sigma2: must be non-negative");
  if (!(G2 >= 0.0)) throw Error("theory.G2: must be non-negative");
  if (M < 1) throw Error("theory.M: must be >= 1");
  if (T < 1) throw Error("theory.T: must be >= 1");
}

double beta_omega(const TheoryParams& params) {
  if (params.omegas.size() != params.betas.size()) throw Error("beta_omega: omegas/betas length mismatch");
  double sum = 0.0;
  for (std::size_t j = 0; j < params.betas.size(); ++j) {
    const double b = params.betas[j];
    if (!(b >= 0.0 && b < 1.0)) throw Error("beta_omega: beta must lie in [0, 1)");
    sum += params.omegas[j] * b / (1.0 - b);
  }
  return sum;
}

double psi_term(double beta, double p_j) {
  const double q = 1.0 - p_j;
  return q * (1.0 - beta) / (1.0 - q * beta);
}

double psi(const TheoryParams& params) {
  if (!(params.p_x > 0.0)) throw Error("model never syncs: ψ undefined");
  if (params.p_x > 1.0) throw Error("psi: p_x must lie in (0, 1]");
  if (params.p_j.size() != params.betas.size() || params.omegas.size() != params.betas.size())
    throw Error("psi: betas/omegas/p_j length mismatch");
  double sum = 0.0;
  for (std::size_t j = 0; j < params.betas.size(); ++j) {
    if (!(params.p_j[j] >= 0.0 && params.p_j[j] <= 1.0)) throw Error("psi: p_j must lie in [0, 1]");
    sum += params.omegas[j] * psi_term(params.betas[j], params.p_j[j]);
  }
  return 4.0 * (1.0 - params.p_x) / (params.p_x * params.p_x) * sum;
}

double eta0_bound(const TheoryParams& params) {
  if (!(params.L > 0.0)) throw Error("eta0_bound: L must be positive");
  const double bw = beta_omega(params);
  const double ps = psi(params);
  const double limiter = std::max(bw, 6.0 * std::sqrt(ps * std::max(1.0, params.B2 - 1.0)));
  if (limiter == 0.0) return std::numeric_limits<double>::infinity();
  return 1.0 / (4.0 * params.L * limiter);
}

TheoryReport evaluate_theory(const TheoryParams& params) {
  params.validate();
  TheoryReport r;
  r.beta_omega = beta_omega(params);
  r.psi = psi(params);
  r.eta0 = eta0_bound(params);
  r.step_size = std::min(r.eta0, 1.0 / std::sqrt(static_cast<double>(params.T)));
  for (double b : params.betas)
    r.half_lives.push_back(b > 0.0 ? half_life(b) : std::numeric_limits<double>::quiet_NaN());
  if (std::isinf(r.eta0)) r.warnings.push_back("beta_omega = psi = 0: step-size bound is unconstrained");
  if (params.B2 < 1.0) r.warnings.push_back("B2 < 1 violates the heterogeneity assumption; clamped via max(1, B2 - 1)");
  return r;
}

}  // namespace mtdao
