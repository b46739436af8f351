#pragma once

// Fully connected ReLU regression network with independent Gaussian priors
// on every weight and bias and a Gaussian likelihood.
//
// Parameter packing (normative): layers in input-to-output order; for each
// layer the weight matrix W (out x in) row-major, then the bias vector b
// (out). If the noise scale is learnable, log sigma_y is the final entry.
// Count = sum_l (in_l * out_l + out_l) [+ 1].

#include <cmath>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "sabvi/error.hpp"
#include "sabvi/models/regression_data.hpp"

namespace sabvi {

struct BNNConfig {
  std::vector<int> layer_sizes;  // input, hidden..., 1
  double prior_sigma = 1.0;
  double noise_sigma = 0.1;  // fixed value, or unused when learnable
  bool learn_noise = false;
  double noise_prior_sigma = 1.0;  // prior on log sigma_y: N(0, noise_prior_sigma^2)
};

class BNNModel {
 public:
  using data_type = RegressionData;

  explicit BNNModel(BNNConfig config) : config_(std::move(config)) {
    const auto& ls = config_.layer_sizes;
    if (ls.size() < 3) throw ModelError("network needs an input size, at least one hidden layer and an output size");
    for (int s : ls)
      if (s < 1) throw ModelError("every layer size must be at least 1");
    if (ls.back() != 1) throw ModelError("the output layer must have a single unit");
    if (!(config_.prior_sigma > 0.0) || !(config_.noise_sigma > 0.0) || !(config_.noise_prior_sigma > 0.0))
      throw ModelError("prior and noise scales must be positive");
    Eigen::Index off = 0;
    for (std::size_t l = 0; l + 1 < ls.size(); ++l) {
      Layer layer{ls[l], ls[l + 1], off, off + static_cast<Eigen::Index>(ls[l]) * ls[l + 1]};
      off = layer.b_offset + ls[l + 1];
      layers_.push_back(layer);
    }
    dim_ = off + (config_.learn_noise ? 1 : 0);
  }

  /// Number of entries of theta implied by the packing.
  static Eigen::Index parameter_count(const std::vector<int>& layer_sizes, bool learn_noise) {
    Eigen::Index n = 0;
    for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l)
      n += static_cast<Eigen::Index>(layer_sizes[l]) * layer_sizes[l + 1] + layer_sizes[l + 1];
    return n + (learn_noise ? 1 : 0);
  }

  Eigen::Index dim() const noexcept { return dim_; }
  Eigen::Index input_dim() const noexcept { return config_.layer_sizes.front(); }
  const BNNConfig& config() const noexcept { return config_; }

  double log_noise_sigma(const Eigen::VectorXd& theta) const {
    return config_.learn_noise ? theta[dim_ - 1] : std::log(config_.noise_sigma);
  }
  double noise_variance(const Eigen::VectorXd& theta) const { return std::exp(2.0 * log_noise_sigma(theta)); }

  /// Network outputs for the rows of X.
  Eigen::VectorXd predict(const Eigen::VectorXd& theta, const Eigen::MatrixXd& X) const {
    check(theta, X);
    Eigen::MatrixXd h = X;
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      Eigen::MatrixXd z = affine(theta, layers_[l], h);
      if (l + 1 < layers_.size()) z = z.cwiseMax(0.0);
      h = std::move(z);
    }
    return h.col(0);
  }

  std::pair<double, Eigen::VectorXd> value_and_grad(const Eigen::VectorXd& theta, const RegressionData& data) const {
    check(theta, data.X);
    if (data.X.rows() != data.y.size()) throw DomainError("design matrix and target lengths differ");
    const double log2pi = std::log(2.0 * std::numbers::pi);
    const Eigen::Index nw = config_.learn_noise ? dim_ - 1 : dim_;
    const double ps2 = config_.prior_sigma * config_.prior_sigma;

    // Prior over weights and biases.
    double v = -0.5 * theta.head(nw).squaredNorm() / ps2 -
               static_cast<double>(nw) * (std::log(config_.prior_sigma) + 0.5 * log2pi);
    Eigen::VectorXd g = Eigen::VectorXd::Zero(dim_);
    g.head(nw) = -theta.head(nw) / ps2;

    const double log_s = log_noise_sigma(theta);
    if (config_.learn_noise) {
      const double np2 = config_.noise_prior_sigma * config_.noise_prior_sigma;
      v += -0.5 * log_s * log_s / np2 - std::log(config_.noise_prior_sigma) - 0.5 * log2pi;
      g[dim_ - 1] = -log_s / np2;
    }
    const Eigen::Index n = data.size();
    if (n == 0) return {v, g};

    // Forward pass, keeping pre-activations.
    std::vector<Eigen::MatrixXd> acts{data.X};
    std::vector<Eigen::MatrixXd> pre;
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      pre.push_back(affine(theta, layers_[l], acts.back()));
      acts.push_back(l + 1 < layers_.size() ? pre.back().cwiseMax(0.0) : pre.back());
    }
    const Eigen::VectorXd r = data.y - acts.back().col(0);
    const double inv_s2 = std::exp(-2.0 * log_s);
    v += -0.5 * r.squaredNorm() * inv_s2 - static_cast<double>(n) * (log_s + 0.5 * log2pi);
    if (config_.learn_noise) g[dim_ - 1] += -static_cast<double>(n) + r.squaredNorm() * inv_s2;

    // Backward pass: delta = d loglik / d pre-activation.
    Eigen::MatrixXd delta = r * inv_s2;
    for (std::size_t l = layers_.size(); l-- > 0;) {
      const Layer& L = layers_[l];
      const Eigen::MatrixXd gw = delta.transpose() * acts[l];  // out x in
      for (int o = 0; o < L.out; ++o)
        for (int i = 0; i < L.in; ++i) g[L.w_offset + static_cast<Eigen::Index>(o) * L.in + i] += gw(o, i);
      g.segment(L.b_offset, L.out) += delta.colwise().sum().transpose();
      if (l == 0) break;
      Eigen::MatrixXd back = delta * weights(theta, L);  // n x in
      // ReLU subgradient: 0 at and below zero.
      delta = back.cwiseProduct((pre[l - 1].array() > 0.0).cast<double>().matrix());
    }
    return {v, g};
  }

  double log_joint(const Eigen::VectorXd& theta, const RegressionData& data) const {
    return value_and_grad(theta, data).first;
  }
  Eigen::VectorXd grad_log_joint(const Eigen::VectorXd& theta, const RegressionData& data) const {
    return value_and_grad(theta, data).second;
  }

 private:
  struct Layer {
    int in;
    int out;
    Eigen::Index w_offset;
    Eigen::Index b_offset;
  };

  static Eigen::MatrixXd weights(const Eigen::VectorXd& theta, const Layer& L) {
    // Row-major out x in block.
    return Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
        theta.data() + L.w_offset, L.out, L.in);
  }

  static Eigen::MatrixXd affine(const Eigen::VectorXd& theta, const Layer& L, const Eigen::MatrixXd& h) {
    Eigen::MatrixXd z = h * weights(theta, L).transpose();
    z.rowwise() += theta.segment(L.b_offset, L.out).transpose();
    return z;
  }

  void check(const Eigen::VectorXd& theta, const Eigen::MatrixXd& X) const {
    if (theta.size() != dim_)
      throw DomainError("BNN parameter vector has length " + std::to_string(theta.size()) + ", expected " +
                        std::to_string(dim_));
    if (X.rows() > 0 && X.cols() != input_dim()) throw DomainError("input dimension differs from the network");
  }

  BNNConfig config_;
  std::vector<Layer> layers_;
  Eigen::Index dim_ = 0;
};

}  // namespace sabvi
