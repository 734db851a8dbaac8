// SPDX-License-Identifier: Apache-2.0
//
// Closed-form quantities: EMA half-life, variance of a locally evolved momentum,
// Gaussian mutual information between round-start and round-end momenta, and the
// constants (beta_omega, psi, eta_0) governing the convergence rate of the
// probabilistic multi-timescale SGDM variant.
#pragma once

#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Cholesky>

#include "mtdao/types.hpp"

namespace mtdao {

/// ln(0.5) / ln(beta): steps for an EMA's memory to halve.
template <typename Scalar>
Scalar half_life(Scalar beta) {
  using std::log;
  if (!(beta > Scalar(0) && beta < Scalar(1))) throw Error("half_life: beta must lie in (0, 1)");
  return log(Scalar(0.5)) / log(beta);
}

/// Var(u_{t+K}) = (1-b)/(1+b) (1 - b^{2K}) sigma^2 for an EMA restarted from a
/// synchronized (deterministic) state and fed K IID gradients of variance sigma^2.
template <typename Scalar>
Scalar momentum_variance(Scalar beta, Step k, Scalar sigma2) {
  using std::pow;
  if (!(beta >= Scalar(0) && beta < Scalar(1))) throw Error("momentum_variance: beta must lie in [0, 1)");
  if (k < 1) throw Error("momentum_variance: K must be >= 1");
  if (!(sigma2 >= Scalar(0))) throw Error("momentum_variance: sigma^2 must be non-negative");
  return (Scalar(1) - beta) / (Scalar(1) + beta) * (Scalar(1) - pow(beta, Scalar(2 * k))) * sigma2;
}

/// 0.5 log det(I + b^{2K} Sigma_U Sigma_L^{-1}) in nats, computed as
/// 0.5 [log det(Sigma_L + b^{2K} Sigma_U) - log det(Sigma_L)] with Cholesky factors.
template <typename DerivedU, typename DerivedL>
typename DerivedU::Scalar mutual_information_gaussian(typename DerivedU::Scalar beta, Step k,
                                                      const Eigen::MatrixBase<DerivedU>& sigma_u,
                                                      const Eigen::MatrixBase<DerivedL>& sigma_l) {
  using Scalar = typename DerivedU::Scalar;
  using Mat = Matrix<Scalar>;
  using std::pow;
  if (sigma_u.rows() != sigma_u.cols() || sigma_l.rows() != sigma_l.cols() || sigma_u.rows() != sigma_l.rows())
    throw Error("mutual_information_gaussian: covariance dimensions differ");
  if (k < 0) throw Error("mutual_information_gaussian: K must be non-negative");

  auto log_det_pd = [](const Mat& m) -> std::optional<Scalar> {
    Eigen::LLT<Mat> llt(m);
    if (llt.info() != Eigen::Success) return std::nullopt;
    const Vector<Scalar> diag = llt.matrixLLT().diagonal();
    if ((diag.array() <= Scalar(0)).any()) return std::nullopt;
    return Scalar(2) * diag.array().log().sum();
  };

  const Mat noise = sigma_l;
  const auto noise_ld = log_det_pd(noise);
  if (!noise_ld) throw Error("noise covariance must be nonsingular");
  const Scalar decay = pow(beta, Scalar(2 * k));
  const Mat joint = noise + decay * Mat(sigma_u);
  const auto joint_ld = log_det_pd(joint);
  if (!joint_ld) throw Error("mutual_information_gaussian: signal covariance must be positive semidefinite");
  const Scalar mi = Scalar(0.5) * (*joint_ld - *noise_ld);
  return mi < Scalar(0) ? Scalar(0) : mi;
}

/// Inputs to the convergence constants. Probabilities are per-step sync
/// probabilities; a periodic period K maps to p = 1/K.
struct TheoryParams {
  std::vector<double> betas;
  std::vector<double> omegas;
  double p_x = 1.0;
  std::vector<double> p_j;
  double L = 1.0;
  double B2 = 1.0;
  double G2 = 0.0;
  double sigma2 = 0.0;
  std::size_t M = 1;
  Step T = 1;

  void validate() const;
};

/// sum_j w_j b_j / (1 - b_j)
double beta_omega(const TheoryParams& params);

/// (1 - p)(1 - b) / (1 - (1 - p) b): one momentum's share of psi before weighting.
double psi_term(double beta, double p_j);

/// 4 (1 - p_x) / p_x^2 * sum_j w_j (1 - b_j)(1 - p_j) / (1 - (1 - p_j) b_j)
double psi(const TheoryParams& params);

/// 1 / (4 L max(beta_omega, 6 sqrt(psi max(1, B^2 - 1)))). +infinity when the max is 0.
double eta0_bound(const TheoryParams& params);

struct TheoryReport {
  double beta_omega = 0.0;
  double psi = 0.0;
  double eta0 = 0.0;
  /// min(eta0, 1/sqrt(T))
  double step_size = 0.0;
  std::vector<double> half_lives;  // NaN for beta = 0
  std::vector<std::string> warnings;
};

TheoryReport evaluate_theory(const TheoryParams& params);

}  // namespace mtdao
