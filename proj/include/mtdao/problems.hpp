// SPDX-License-Identifier: Apache-2.0
//
// Analytic objectives and seeded stochastic gradient oracles for the simulated cluster.
#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>

#include "mtdao/types.hpp"

namespace mtdao {

class Problem {
 public:
  enum class Kind { Rosenbrock, Quadratic1D, RandomQuadratic, LogisticRegression };

  /// f(x1, x2) = (1 - x1)^2 + 100 (x2 - x1^2)^2
  static Problem rosenbrock();
  /// f(x) = lambda x^2 / 2
  static Problem quadratic_1d(double lambda);
  /// f(x) = (x - x*)^T A (x - x*) / 2 with A = Q diag(s) Q^T, Q a random rotation and
  /// s log-spaced from 1 down to 1/condition_number. x* ~ N(0, I).
  static Problem random_quadratic(std::size_t dim, double condition_number, std::uint64_t seed);
  /// Mean logistic loss over synthetic labelled Gaussian features, plus an l2 term
  /// (strength `l2`) so a unique minimizer exists.
  static Problem logistic_regression(std::size_t dim, std::size_t samples, std::uint64_t seed, double l2 = 1e-2);

  Kind kind() const { return kind_; }
  std::string name() const;
  std::size_t dim() const { return dim_; }

  double value(const ParamVector& x) const;
  ParamVector gradient(const ParamVector& x) const;
  void gradient_into(const ParamVector& x, ParamVector& out) const;

  const std::optional<ParamVector>& optimum() const { return optimum_; }
  std::optional<double> f_star() const { return f_star_; }
  std::optional<double> smoothness() const { return smoothness_; }

  // Construction parameters, kept for config echo.
  double lambda() const { return lambda_; }
  double condition_number() const { return condition_number_; }
  std::size_t samples() const { return samples_; }
  std::uint64_t seed() const { return seed_; }
  double l2() const { return l2_; }

  /// Default starting point: (-1.5, 2) for Rosenbrock, 1 for the 1-D quadratic, zero otherwise.
  ParamVector default_start() const;

 private:
  struct Data {
    Matrix<double> hessian;   // RandomQuadratic
    Matrix<double> features;  // LogisticRegression, samples x dim
    Vector<double> labels;    // +-1
  };

  Kind kind_ = Kind::Rosenbrock;
  std::size_t dim_ = 2;
  double lambda_ = 0.0;
  double condition_number_ = 1.0;
  std::size_t samples_ = 0;
  std::uint64_t seed_ = 0;
  double l2_ = 0.0;
  std::optional<ParamVector> optimum_;
  std::optional<double> f_star_;
  std::optional<double> smoothness_;
  std::shared_ptr<const Data> data_;
};

class NoiseModel {
 public:
  enum class Kind { None, IIDGaussian };

  static NoiseModel none() { return NoiseModel{}; }
  static NoiseModel gaussian(double sigma, std::uint64_t seed);

  Kind kind() const { return kind_; }
  double sigma() const { return sigma_; }
  std::uint64_t seed() const { return seed_; }

  /// Adds sigma * z to g, z ~ N(0, I) drawn from the (seed, worker, step) substream.
  void perturb(ParamVector& g, std::size_t worker, Step t) const;
  ParamVector draw(std::size_t dim, std::size_t worker, Step t) const;

 private:
  Kind kind_ = Kind::None;
  double sigma_ = 0.0;
  std::uint64_t seed_ = 0;
};

/// Exact gradient plus the seeded noise draw for (worker, t).
ParamVector gradient_oracle(const Problem& problem, const ParamVector& x, const NoiseModel& noise,
                            std::size_t worker, Step t);

}  // namespace mtdao
