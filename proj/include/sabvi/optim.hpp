#pragma once

// Bias-corrected ADAM (Kingma & Ba) over a flat parameter vector.

#include <cmath>
#include <utility>

#include <Eigen/Core>

#include "sabvi/error.hpp"

namespace sabvi {

struct AdamConfig {
  double learning_rate = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  int steps = 1000;

  void validate() const {
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw ConfigError("learning rate must be positive");
    if (!(beta1 >= 0.0 && beta1 < 1.0)) throw ConfigError("beta1 must lie in [0, 1)");
    if (!(beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("beta2 must lie in [0, 1)");
    if (!(epsilon > 0.0)) throw ConfigError("epsilon must be positive");
    if (steps < 0) throw ConfigError("steps must be nonnegative");
  }
};

struct AdamState {
  Eigen::VectorXd params;
  Eigen::VectorXd m;
  Eigen::VectorXd v;
  long t = 0;

  explicit AdamState(Eigen::VectorXd initial)
      : params(std::move(initial)), m(Eigen::VectorXd::Zero(params.size())), v(Eigen::VectorXd::Zero(params.size())) {}
};

/// One descent step on `grads`; returns the updated state.
inline AdamState adam_step(AdamState state, const Eigen::VectorXd& grads, const AdamConfig& config) {
  if (grads.size() != state.params.size()) throw DomainError("gradient and parameter sizes differ");
  state.t += 1;
  state.m = config.beta1 * state.m + (1.0 - config.beta1) * grads;
  state.v = config.beta2 * state.v + (1.0 - config.beta2) * grads.cwiseProduct(grads);
  const double c1 = 1.0 - std::pow(config.beta1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(config.beta2, static_cast<double>(state.t));
  const Eigen::ArrayXd m_hat = state.m.array() / c1;
  const Eigen::ArrayXd v_hat = state.v.array() / c2;
  state.params.array() -= config.learning_rate * m_hat / (v_hat.sqrt() + config.epsilon);
  return state;
}

}  // namespace sabvi
