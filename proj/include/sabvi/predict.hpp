#pragma once

// Posterior-predictive summaries from Monte Carlo draws of q.

#include <cmath>
#include <cstdint>

#include <Eigen/Core>

#include "sabvi/error.hpp"
#include "sabvi/mean_field.hpp"

namespace sabvi {

struct PredictiveSummary {
  Eigen::VectorXd mean;
  Eigen::VectorXd stddev;
  int draws = 0;
};

/// Averages model outputs over S reparameterized draws of q. The
/// predictive variance is the spread of the outputs plus the mean noise
/// variance, so stddev never falls below the observation noise.
template <class Model>
PredictiveSummary predict(const MeanFieldGaussian& q, const Model& model, const Eigen::MatrixXd& X_test, int S,
                          std::uint64_t seed) {
  if (S < 1) throw ConfigError("the number of predictive draws S must be at least 1");
  if (model.dim() != q.dim()) throw DomainError("model dimension differs from q");
  const NoiseBlock noise = NoiseBlock::draw(seed, 0, S, q.dim());
  const Eigen::MatrixXd theta = sample_reparam(q, noise);
  const Eigen::Index n = X_test.rows();
  Eigen::VectorXd s1 = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd s2 = Eigen::VectorXd::Zero(n);
  double noise_var = 0.0;
  for (int k = 0; k < S; ++k) {
    const Eigen::VectorXd th = theta.row(k).transpose();
    const Eigen::VectorXd f = model.predict(th, X_test);
    s1 += f;
    s2 += f.cwiseProduct(f);
    noise_var += model.noise_variance(th);
  }
  PredictiveSummary out;
  out.draws = S;
  out.mean = s1 / S;
  const Eigen::VectorXd spread = (s2 / S - out.mean.cwiseProduct(out.mean)).cwiseMax(0.0);
  out.stddev = (spread.array() + noise_var / S).sqrt();
  return out;
}

}  // namespace sabvi
