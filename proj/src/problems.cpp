// SPDX-License-Identifier: Apache-2.0
#include "mtdao/problems.hpp"

#include <cmath>
#include <random>

#include <Eigen/Eigenvalues>
#include <Eigen/QR>

#include "mtdao/random.hpp"

namespace mtdao {

namespace {

Matrix<double> gaussian_matrix(std::size_t rows, std::size_t cols, SplitMix64& rng) {
  std::normal_distribution<double> normal;
  Matrix<double> m(rows, cols);
  for (Eigen::Index j = 0; j < m.cols(); ++j)
    for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = normal(rng);
  return m;
}

}  // namespace

Problem Problem::rosenbrock() {
  Problem p;
  p.kind_ = Kind::Rosenbrock;
  p.dim_ = 2;
  p.optimum_ = ParamVector::Ones(2);
  p.f_star_ = 0.0;
  return p;
}

Problem Problem::quadratic_1d(double lambda) {
  if (!(lambda > 0.0)) throw Error("problem.lambda: must be positive");
  Problem p;
  p.kind_ = Kind::Quadratic1D;
  p.dim_ = 1;
  p.lambda_ = lambda;
  p.optimum_ = ParamVector::Zero(1);
  p.f_star_ = 0.0;
  p.smoothness_ = lambda;
  return p;
}

Problem Problem::random_quadratic(std::size_t dim, double condition_number, std::uint64_t seed) {
  if (dim == 0) throw Error("problem.dim: must be positive");
  if (!(condition_number >= 1.0)) throw Error("problem.condition_number: must be >= 1");
  SplitMix64 rng(hash_combine(seed, 0x51AD));
  const Matrix<double> q = Eigen::HouseholderQR<Matrix<double>>(gaussian_matrix(dim, dim, rng)).householderQ();
  Vector<double> spectrum(dim);
  for (std::size_t i = 0; i < dim; ++i) {
    const double frac = dim == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(dim - 1);
    spectrum(static_cast<Eigen::Index>(i)) = std::pow(condition_number, -frac);
  }
  auto data = std::make_shared<Data>();
  data->hessian = q * spectrum.asDiagonal() * q.transpose();
  data->hessian = (0.5 * (data->hessian + data->hessian.transpose())).eval();

  Problem p;
  p.kind_ = Kind::RandomQuadratic;
  p.dim_ = dim;
  p.condition_number_ = condition_number;
  p.seed_ = seed;
  p.optimum_ = gaussian_matrix(dim, 1, rng).col(0);
  p.f_star_ = 0.0;
  p.smoothness_ = spectrum.maxCoeff();
  p.data_ = std::move(data);
  return p;
}

Problem Problem::logistic_regression(std::size_t dim, std::size_t samples, std::uint64_t seed, double l2) {
  if (dim == 0 || samples == 0) throw Error("problem: dim and samples must be positive");
  if (!(l2 >= 0.0)) throw Error("problem.l2: must be non-negative");
  SplitMix64 rng(hash_combine(seed, 0x1061));
  auto data = std::make_shared<Data>();
  data->features = gaussian_matrix(samples, dim, rng) / std::sqrt(static_cast<double>(dim));
  const Vector<double> truth = gaussian_matrix(dim, 1, rng).col(0) * 2.0;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  data->labels.resize(static_cast<Eigen::Index>(samples));
  const Vector<double> margins = data->features * truth;
  for (Eigen::Index i = 0; i < margins.size(); ++i) {
    const double prob = 1.0 / (1.0 + std::exp(-margins(i)));
    data->labels(i) = unit(rng) < prob ? 1.0 : -1.0;
  }
  const Matrix<double> gram = data->features.transpose() * data->features / static_cast<double>(samples);
  const double top = Eigen::SelfAdjointEigenSolver<Matrix<double>>(gram, Eigen::EigenvaluesOnly).eigenvalues().maxCoeff();

  Problem p;
  p.kind_ = Kind::LogisticRegression;
  p.dim_ = dim;
  p.samples_ = samples;
  p.seed_ = seed;
  p.l2_ = l2;
  p.smoothness_ = top / 4.0 + l2;
  p.data_ = std::move(data);
  return p;
}

std::string Problem::name() const {
  switch (kind_) {
    case Kind::Rosenbrock: return "rosenbrock";
    case Kind::Quadratic1D: return "quadratic_1d";
    case Kind::RandomQuadratic: return "random_quadratic";
    case Kind::LogisticRegression: return "logistic_regression";
  }
  return "unknown";
}

double Problem::value(const ParamVector& x) const {
  if (static_cast<std::size_t>(x.size()) != dim_) throw Error("problem: dimension mismatch");
  switch (kind_) {
    case Kind::Rosenbrock: {
      const double a = 1.0 - x(0);
      const double b = x(1) - x(0) * x(0);
      return a * a + 100.0 * b * b;
    }
    case Kind::Quadratic1D: return 0.5 * lambda_ * x(0) * x(0);
    case Kind::RandomQuadratic: {
      const ParamVector r = x - *optimum_;
      return 0.5 * r.dot(data_->hessian * r);
    }
    case Kind::LogisticRegression: {
      const Vector<double> margins = data_->labels.cwiseProduct(data_->features * x);
      double loss = 0.0;
      for (Eigen::Index i = 0; i < margins.size(); ++i) {
        const double z = -margins(i);
        loss += z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
      }
      return loss / static_cast<double>(samples_) + 0.5 * l2_ * x.squaredNorm();
    }
  }
  return 0.0;
}

void Problem::gradient_into(const ParamVector& x, ParamVector& out) const {
  if (static_cast<std::size_t>(x.size()) != dim_) throw Error("problem: dimension mismatch");
  switch (kind_) {
    case Kind::Rosenbrock: {
      const double b = x(1) - x(0) * x(0);
      out.resize(2);
      out(0) = -2.0 * (1.0 - x(0)) - 400.0 * x(0) * b;
      out(1) = 200.0 * b;
      return;
    }
    case Kind::Quadratic1D:
      out.resize(1);
      out(0) = lambda_ * x(0);
      return;
    case Kind::RandomQuadratic:
      out.noalias() = data_->hessian * (x - *optimum_);
      return;
    case Kind::LogisticRegression: {
      const Vector<double> margins = data_->labels.cwiseProduct(data_->features * x);
      Vector<double> weights(margins.size());
      for (Eigen::Index i = 0; i < margins.size(); ++i)
        weights(i) = -data_->labels(i) / (1.0 + std::exp(margins(i)));
      out.noalias() = data_->features.transpose() * weights / static_cast<double>(samples_);
      out += l2_ * x;
      return;
    }
  }
}

ParamVector Problem::gradient(const ParamVector& x) const {
  ParamVector g;
  gradient_into(x, g);
  return g;
}

ParamVector Problem::default_start() const {
  switch (kind_) {
    case Kind::Rosenbrock: return (ParamVector(2) << -1.5, 2.0).finished();
    case Kind::Quadratic1D: return ParamVector::Ones(1);
    default: return ParamVector::Zero(static_cast<Eigen::Index>(dim_));
  }
}

NoiseModel NoiseModel::gaussian(double sigma, std::uint64_t seed) {
  if (!(sigma >= 0.0)) throw Error("noise.sigma: must be non-negative");
  NoiseModel n;
  n.kind_ = sigma > 0.0 ? Kind::IIDGaussian : Kind::None;
  n.sigma_ = sigma;
  n.seed_ = seed;
  return n;
}

void NoiseModel::perturb(ParamVector& g, std::size_t worker, Step t) const {
  if (kind_ == Kind::None) return;
  SplitMix64 rng(hash_combine(hash_combine(seed_, worker), static_cast<std::uint64_t>(t)));
  std::normal_distribution<double> normal(0.0, sigma_);
  for (Eigen::Index i = 0; i < g.size(); ++i) g(i) += normal(rng);
}

ParamVector NoiseModel::draw(std::size_t dim, std::size_t worker, Step t) const {
  ParamVector z = ParamVector::Zero(static_cast<Eigen::Index>(dim));
  perturb(z, worker, t);
  return z;
}

ParamVector gradient_oracle(const Problem& problem, const ParamVector& x, const NoiseModel& noise,
                            std::size_t worker, Step t) {
  ParamVector g = problem.gradient(x);
  noise.perturb(g, worker, t);
  return g;
}

}  // namespace mtdao
