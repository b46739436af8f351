#pragma once

// Bayesian linear regression: theta = (w_1..w_D, b),
//   w ~ N(0, sigma_w^2 I), b ~ N(0, sigma_b^2), y_n ~ N(x_n^T w + b, sigma_y^2).

#include <cmath>
#include <numbers>
#include <utility>

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include "sabvi/error.hpp"
#include "sabvi/models/regression_data.hpp"

namespace sabvi {

class BLRModel {
 public:
  using data_type = RegressionData;

  explicit BLRModel(Eigen::Index input_dim, double prior_w_sigma = 1.0, double prior_b_sigma = 1.0,
                    double noise_sigma = 0.1, bool with_bias = true)
      : input_dim_(input_dim),
        prior_w_sigma_(prior_w_sigma),
        prior_b_sigma_(prior_b_sigma),
        noise_sigma_(noise_sigma),
        with_bias_(with_bias) {
    if (input_dim < 1) throw ModelError("input dimension must be at least 1");
    if (!(prior_w_sigma > 0.0) || !(prior_b_sigma > 0.0) || !(noise_sigma > 0.0))
      throw ModelError("prior and noise scales must be positive");
  }

  Eigen::Index dim() const noexcept { return input_dim_ + (with_bias_ ? 1 : 0); }
  Eigen::Index input_dim() const noexcept { return input_dim_; }
  bool with_bias() const noexcept { return with_bias_; }
  double prior_w_sigma() const noexcept { return prior_w_sigma_; }
  double prior_b_sigma() const noexcept { return prior_b_sigma_; }
  double noise_sigma() const noexcept { return noise_sigma_; }

  /// Prior standard deviation of each entry of theta.
  Eigen::VectorXd prior_sigmas() const {
    Eigen::VectorXd s = Eigen::VectorXd::Constant(dim(), prior_w_sigma_);
    if (with_bias_) s[input_dim_] = prior_b_sigma_;
    return s;
  }

  /// Rows of X with a trailing column of ones when the model has a bias.
  Eigen::MatrixXd design(const Eigen::MatrixXd& X) const {
    Eigen::MatrixXd phi(X.rows(), dim());
    phi.leftCols(input_dim_) = X;
    if (with_bias_) phi.col(input_dim_).setOnes();
    return phi;
  }

  Eigen::VectorXd predict(const Eigen::VectorXd& theta, const Eigen::MatrixXd& X) const {
    check_theta(theta);
    Eigen::VectorXd f = X * theta.head(input_dim_);
    if (with_bias_) f.array() += theta[input_dim_];
    return f;
  }

  double noise_variance(const Eigen::VectorXd&) const noexcept { return noise_sigma_ * noise_sigma_; }

  std::pair<double, Eigen::VectorXd> value_and_grad(const Eigen::VectorXd& theta, const RegressionData& data) const {
    check_theta(theta);
    data.validate(input_dim_);
    const double log2pi = std::log(2.0 * std::numbers::pi);
    const Eigen::ArrayXd ps = prior_sigmas().array();
    double v = (-0.5 * (theta.array() / ps).square() - ps.log() - 0.5 * log2pi).sum();
    Eigen::VectorXd g = -(theta.array() / ps.square()).matrix();
    if (data.size() > 0) {
      const Eigen::VectorXd r = data.y - predict(theta, data.X);
      const double s2 = noise_sigma_ * noise_sigma_;
      v += -0.5 * r.squaredNorm() / s2 - static_cast<double>(data.size()) * (std::log(noise_sigma_) + 0.5 * log2pi);
      g.head(input_dim_) += data.X.transpose() * r / s2;
      if (with_bias_) g[input_dim_] += r.sum() / s2;
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
  void check_theta(const Eigen::VectorXd& theta) const {
    if (theta.size() != dim())
      throw DomainError("BLR parameter vector has length " + std::to_string(theta.size()) + ", expected " +
                        std::to_string(dim()));
  }

  Eigen::Index input_dim_;
  double prior_w_sigma_;
  double prior_b_sigma_;
  double noise_sigma_;
  bool with_bias_;
};

struct GaussianPosterior {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
};

/// Conjugate posterior: precision = Phi^T Phi / sigma_y^2 + diag(1/prior^2),
/// mean = precision^{-1} Phi^T y / sigma_y^2.
inline GaussianPosterior blr_exact_posterior(const BLRModel& model, const RegressionData& data) {
  data.validate(model.input_dim());
  const Eigen::MatrixXd phi = model.design(data.X);
  const double s2 = model.noise_sigma() * model.noise_sigma();
  Eigen::MatrixXd prec = phi.transpose() * phi / s2;
  prec.diagonal().array() += model.prior_sigmas().array().square().inverse();
  const Eigen::LLT<Eigen::MatrixXd> llt(prec);
  if (llt.info() != Eigen::Success) throw NumericalError("posterior precision is not positive definite");
  GaussianPosterior post;
  post.mean = llt.solve(phi.transpose() * data.y / s2);
  post.cov = llt.solve(Eigen::MatrixXd::Identity(model.dim(), model.dim()));
  if (!post.mean.allFinite() || !post.cov.allFinite()) throw NumericalError("posterior solve produced non-finite values");
  return post;
}

}  // namespace sabvi
