#pragma once

// Fully factorized Gaussian variational family and its reparameterized
// samples.

#include <cmath>
#include <cstdint>
#include <numbers>

#include <Eigen/Core>

#include "sabvi/error.hpp"
#include "sabvi/rng.hpp"

namespace sabvi {

/// q(theta) = prod_j N(theta_j | mu_j, exp(log_sigma_j)^2).
struct MeanFieldGaussian {
  Eigen::VectorXd mu;
  Eigen::VectorXd log_sigma;

  MeanFieldGaussian() = default;
  MeanFieldGaussian(Eigen::VectorXd m, Eigen::VectorXd ls) : mu(std::move(m)), log_sigma(std::move(ls)) {
    if (mu.size() != log_sigma.size()) throw DomainError("mean and log-sigma lengths differ");
    if (!mu.allFinite() || !log_sigma.allFinite()) throw DomainError("variational parameters must be finite");
  }

  /// Default starting point: mu = 0, sigma = 0.1 in every coordinate.
  static MeanFieldGaussian standard_init(Eigen::Index d) {
    return {Eigen::VectorXd::Zero(d), Eigen::VectorXd::Constant(d, std::log(0.1))};
  }

  Eigen::Index dim() const noexcept { return mu.size(); }
  Eigen::VectorXd sigma() const { return log_sigma.array().exp(); }

  double log_pdf(const Eigen::VectorXd& theta) const {
    if (theta.size() != dim()) throw DomainError("sample dimension differs from q");
    const Eigen::ArrayXd z = (theta - mu).array() / sigma().array();
    return -0.5 * z.square().sum() - log_sigma.sum() -
           0.5 * static_cast<double>(dim()) * std::log(2.0 * std::numbers::pi);
  }

  /// (mu, log_sigma) stacked into one vector, the layout the optimizer sees.
  Eigen::VectorXd packed() const {
    Eigen::VectorXd v(2 * dim());
    v << mu, log_sigma;
    return v;
  }
  static MeanFieldGaussian unpack(const Eigen::VectorXd& v) {
    if (v.size() % 2 != 0) throw DomainError("packed variational vector has odd length");
    const Eigen::Index d = v.size() / 2;
    return {v.head(d), v.tail(d)};
  }
};

struct MCConfig {
  int K = 5;
  std::uint64_t seed = 0;

  void validate() const {
    if (K < 1) throw ConfigError("the number of Monte Carlo samples K must be at least 1");
  }
};

/// K x d standard-normal draws; row k is epsilon_k.
struct NoiseBlock {
  Eigen::MatrixXd epsilons;

  /// Draws from the (seed, stream) Philox stream in row-major order.
  static NoiseBlock draw(std::uint64_t seed, std::uint64_t stream, int K, Eigen::Index d) {
    if (K < 1 || d < 1) throw DomainError("noise block needs K >= 1 and d >= 1");
    CounterRng rng(seed, stream);
    NoiseBlock b{Eigen::MatrixXd(K, d)};
    for (int k = 0; k < K; ++k)
      for (Eigen::Index j = 0; j < d; ++j) b.epsilons(k, j) = rng.normal();
    return b;
  }

  int K() const noexcept { return static_cast<int>(epsilons.rows()); }
  Eigen::Index dim() const noexcept { return epsilons.cols(); }
};

/// theta_k = mu + sigma * epsilon_k, one sample per row.
inline Eigen::MatrixXd sample_reparam(const MeanFieldGaussian& q, const NoiseBlock& noise) {
  if (noise.dim() != q.dim()) throw DomainError("noise block dimension differs from q");
  const Eigen::RowVectorXd s = q.sigma().transpose();
  return (noise.epsilons.array().rowwise() * s.array()).rowwise() + q.mu.transpose().array();
}

}  // namespace sabvi
