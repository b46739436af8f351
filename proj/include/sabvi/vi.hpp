#pragma once

// The sAB variational objective D(q || p(., X)) between a mean-field
// Gaussian and an unnormalized joint density, its K-sample Monte Carlo
// estimator with reparameterized gradients, and the ADAM training loop.
//
// With a_k = log p(theta_k, X) and b_k = log q(theta_k), the estimator is
//   t1 = LSE_k[(a+b) a_k - b_k] - log K     (int p^lambda)
//   t2 = LSE_k[(lambda-1) b_k] - log K      (int q^lambda)
//   t3 = LSE_k[beta a_k + (alpha-1) b_k] - log K   (int q^alpha p^beta)
//   D  = t1/(alpha lambda) + t2/(beta lambda) - t3/(alpha beta),
// which is unchanged by adding a constant to every a_k; the evidence never
// needs to be known.

#include <cmath>
#include <concepts>
#include <limits>
#include <numbers>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "sabvi/error.hpp"
#include "sabvi/mean_field.hpp"
#include "sabvi/optim.hpp"
#include "sabvi/params.hpp"

namespace sabvi {

/// A model supplies an unnormalized log-joint log p(theta, X) over a
/// d-dimensional parameter and its gradient in theta.
template <class M>
concept LogJointModel = requires(const M& m, const Eigen::VectorXd& theta, const typename M::data_type& data) {
  { m.dim() } -> std::convertible_to<Eigen::Index>;
  { m.log_joint(theta, data) } -> std::convertible_to<double>;
  { m.grad_log_joint(theta, data) } -> std::convertible_to<Eigen::VectorXd>;
};

template <class M>
concept FusedLogJointModel = LogJointModel<M> && requires(const M& m, const Eigen::VectorXd& theta,
                                                           const typename M::data_type& data) {
  { m.value_and_grad(theta, data) } -> std::convertible_to<std::pair<double, Eigen::VectorXd>>;
};

/// Value and gradient of D with respect to (mu, log_sigma).
struct ObjectiveEval {
  double value = 0.0;
  Eigen::VectorXd d_mu;
  Eigen::VectorXd d_log_sigma;

  Eigen::VectorXd packed() const {
    Eigen::VectorXd v(d_mu.size() + d_log_sigma.size());
    v << d_mu, d_log_sigma;
    return v;
  }
  bool finite() const { return std::isfinite(value) && d_mu.allFinite() && d_log_sigma.allFinite(); }
};

namespace detail {

template <LogJointModel M>
std::pair<double, Eigen::VectorXd> log_joint_and_grad(const M& model, const Eigen::VectorXd& theta,
                                                      const typename M::data_type& data) {
  if constexpr (FusedLogJointModel<M>) {
    return model.value_and_grad(theta, data);
  } else {
    return {model.log_joint(theta, data), model.grad_log_joint(theta, data)};
  }
}

// Per-sample quantities shared by every estimator.
struct SampleTable {
  Eigen::VectorXd a;       // log p(theta_k, X)
  Eigen::VectorXd b;       // log q(theta_k)
  Eigen::MatrixXd grad_a;  // K x d, d log p / d theta at theta_k
};

template <LogJointModel M>
SampleTable tabulate_samples(const MeanFieldGaussian& q, const M& model, const typename M::data_type& data,
                             const NoiseBlock& noise, bool with_grad) {
  if (model.dim() != q.dim()) throw DomainError("model dimension differs from q");
  const Eigen::MatrixXd theta = sample_reparam(q, noise);
  const int K = noise.K();
  const double log_norm = -q.log_sigma.sum() - 0.5 * static_cast<double>(q.dim()) * std::log(2.0 * std::numbers::pi);
  SampleTable t{Eigen::VectorXd(K), Eigen::VectorXd(K), Eigen::MatrixXd(with_grad ? K : 0, q.dim())};
  for (int k = 0; k < K; ++k) {
    const Eigen::VectorXd th = theta.row(k).transpose();
    if (with_grad) {
      auto [v, g] = log_joint_and_grad(model, th, data);
      if (g.size() != q.dim()) throw ModelError("model gradient has the wrong length");
      t.a[k] = v;
      t.grad_a.row(k) = g.transpose();
    } else {
      t.a[k] = model.log_joint(th, data);
    }
    // Under the reparameterization (theta - mu)/sigma = epsilon exactly.
    t.b[k] = -0.5 * noise.epsilons.row(k).squaredNorm() + log_norm;
  }
  return t;
}

struct SoftmaxLse {
  double lse;
  Eigen::VectorXd weights;
};

inline SoftmaxLse softmax_lse(const Eigen::VectorXd& e) {
  const double m = e.maxCoeff();
  const Eigen::VectorXd x = (e.array() - m).exp();
  const double s = x.sum();
  return {m + std::log(s), x / s};
}

inline void require_generic(const DivergenceParams& params) {
  if (classify_region(params) != Region::Generic)
    throw UnsupportedRegion("the Monte Carlo objective needs alpha, beta and alpha+beta all nonzero (got region " +
                            std::string(to_string(classify_region(params))) +
                            "); use the quadrature evaluator for exact limits or a near-limit value");
}

// Estimator value and, optionally, its exact gradient for a fixed noise
// block. No finiteness checks: the caller decides how to react.
inline ObjectiveEval sab_from_table(const DivergenceParams& params, const MeanFieldGaussian& q,
                                    const SampleTable& t, const NoiseBlock& noise, bool with_grad) {
  const double al = params.alpha();
  const double be = params.beta();
  const double la = params.lambda();
  const double log_k = std::log(static_cast<double>(t.a.size()));
  const SoftmaxLse s1 = softmax_lse(la * t.a - t.b);
  const SoftmaxLse s2 = softmax_lse((la - 1.0) * t.b);
  const SoftmaxLse s3 = softmax_lse(be * t.a + (al - 1.0) * t.b);
  const double c1 = 1.0 / (al * la);
  const double c2 = 1.0 / (be * la);
  const double c3 = -1.0 / (al * be);
  ObjectiveEval r;
  r.value = c1 * (s1.lse - log_k) + c2 * (s2.lse - log_k) + c3 * (s3.lse - log_k);
  if (!with_grad) return r;

  // d e_k / d mu_j     = coef_a * G_kj
  // d e_k / d logsig_j = coef_a * G_kj sigma_j eps_kj + coef_b * (-1)
  // (b_k depends on log sigma only through the -log sigma_j normalizer.)
  const Eigen::VectorXd wa = c1 * la * s1.weights + c3 * be * s3.weights;
  const double wb = c1 * (-1.0) * s1.weights.sum() + c2 * (la - 1.0) * s2.weights.sum() +
                    c3 * (al - 1.0) * s3.weights.sum();
  r.d_mu = t.grad_a.transpose() * wa;
  const Eigen::MatrixXd ge = t.grad_a.cwiseProduct(noise.epsilons);
  r.d_log_sigma = (ge.transpose() * wa).cwiseProduct(q.sigma()) - Eigen::VectorXd::Constant(q.dim(), wb);
  return r;
}

inline ObjectiveEval kl_from_table(const MeanFieldGaussian& q, const SampleTable& t, const NoiseBlock& noise,
                                   bool with_grad) {
  const double K = static_cast<double>(t.a.size());
  ObjectiveEval r;
  r.value = (t.b - t.a).sum() / K;
  if (!with_grad) return r;
  r.d_mu = -t.grad_a.colwise().sum().transpose() / K;
  const Eigen::MatrixXd ge = t.grad_a.cwiseProduct(noise.epsilons);
  r.d_log_sigma = -Eigen::VectorXd::Ones(q.dim()) - (ge.colwise().sum().transpose() / K).cwiseProduct(q.sigma());
  return r;
}

inline void require_finite_table(const SampleTable& t) {
  if (!t.a.allFinite()) throw ModelError("log_joint returned a non-finite value at a Monte Carlo sample");
}

}  // namespace detail

/// Monte Carlo estimate of D_sAB(q || p(., X)) for a fixed noise block.
template <LogJointModel M>
double mc_objective(const DivergenceParams& params, const MeanFieldGaussian& q, const M& model,
                    const typename M::data_type& data, const NoiseBlock& noise) {
  detail::require_generic(params);
  const auto t = detail::tabulate_samples(q, model, data, noise, false);
  detail::require_finite_table(t);
  return detail::sab_from_table(params, q, t, noise, false).value;
}

/// The estimator and its exact gradient in (mu, log sigma) with the noise
/// block held fixed.
template <LogJointModel M>
ObjectiveEval mc_objective_and_grad(const DivergenceParams& params, const MeanFieldGaussian& q, const M& model,
                                    const typename M::data_type& data, const NoiseBlock& noise) {
  detail::require_generic(params);
  const auto t = detail::tabulate_samples(q, model, data, noise, true);
  detail::require_finite_table(t);
  return detail::sab_from_table(params, q, t, noise, true);
}

template <LogJointModel M>
std::pair<Eigen::VectorXd, Eigen::VectorXd> mc_objective_grad(const DivergenceParams& params,
                                                              const MeanFieldGaussian& q, const M& model,
                                                              const typename M::data_type& data,
                                                              const NoiseBlock& noise) {
  auto r = mc_objective_and_grad(params, q, model, data, noise);
  return {std::move(r.d_mu), std::move(r.d_log_sigma)};
}

/// Reparameterized negative ELBO (1/K) sum_k [log q(theta_k) - log p(theta_k, X)].
template <LogJointModel M>
double kl_elbo_objective(const MeanFieldGaussian& q, const M& model, const typename M::data_type& data,
                         const NoiseBlock& noise) {
  const auto t = detail::tabulate_samples(q, model, data, noise, false);
  detail::require_finite_table(t);
  return detail::kl_from_table(q, t, noise, false).value;
}

template <LogJointModel M>
ObjectiveEval kl_elbo_and_grad(const MeanFieldGaussian& q, const M& model, const typename M::data_type& data,
                               const NoiseBlock& noise) {
  const auto t = detail::tabulate_samples(q, model, data, noise, true);
  detail::require_finite_table(t);
  return detail::kl_from_table(q, t, noise, true);
}

/// The objective the training loop uses for `params`: the negative ELBO at
/// (1, 0), the sAB estimator in the generic region.
template <LogJointModel M>
ObjectiveEval training_objective(const DivergenceParams& params, const MeanFieldGaussian& q, const M& model,
                                 const typename M::data_type& data, const NoiseBlock& noise) {
  if (is_kl_point(params)) return kl_elbo_and_grad(q, model, data, noise);
  return mc_objective_and_grad(params, q, model, data, noise);
}

struct TrainReport {
  double alpha = 0.0;
  double beta = 0.0;
  MCConfig mc;
  AdamConfig opt;
  MeanFieldGaussian initial;
  MeanFieldGaussian final;
  std::vector<double> trace;
  int skipped_steps = 0;
};

/// Raised after too many consecutive non-finite steps; carries the report up
/// to the failure.
class TrainAborted : public NumericalError {
 public:
  TrainAborted(const std::string& what, TrainReport report) : NumericalError(what), report_(std::move(report)) {}
  const TrainReport& report() const noexcept { return report_; }

 private:
  TrainReport report_;
};

inline constexpr int kMaxConsecutiveNonFinite = 10;

/// ADAM on (mu, log sigma). Step t uses the noise block drawn from the
/// (mc.seed, t) stream, so a run is a pure function of its inputs. Steps
/// whose objective or gradient is non-finite are skipped (recorded as NaN in
/// the trace); ten in a row abort the run.
template <LogJointModel M>
TrainReport train(const DivergenceParams& params, const MeanFieldGaussian& q0, const M& model,
                  const typename M::data_type& data, const MCConfig& mc, const AdamConfig& opt) {
  mc.validate();
  opt.validate();
  if (!is_kl_point(params)) detail::require_generic(params);
  if (model.dim() != q0.dim()) throw DomainError("model dimension differs from q");

  TrainReport report;
  report.alpha = params.alpha();
  report.beta = params.beta();
  report.mc = mc;
  report.opt = opt;
  report.initial = q0;
  report.final = q0;
  report.trace.reserve(static_cast<std::size_t>(opt.steps));

  AdamState state(q0.packed());
  int bad_run = 0;
  for (int step = 0; step < opt.steps; ++step) {
    const MeanFieldGaussian q = MeanFieldGaussian::unpack(state.params);
    const NoiseBlock noise = NoiseBlock::draw(mc.seed, static_cast<std::uint64_t>(step), mc.K, q.dim());
    const auto t = detail::tabulate_samples(q, model, data, noise, true);
    const ObjectiveEval e = is_kl_point(params) ? detail::kl_from_table(q, t, noise, true)
                                                : detail::sab_from_table(params, q, t, noise, true);
    if (!t.a.allFinite() || !e.finite()) {
      report.trace.push_back(std::numeric_limits<double>::quiet_NaN());
      ++report.skipped_steps;
      if (++bad_run >= kMaxConsecutiveNonFinite) {
        report.final = q;
        throw TrainAborted("objective was non-finite for " + std::to_string(bad_run) +
                               " consecutive steps (last step " + std::to_string(step) + ")",
                           std::move(report));
      }
      continue;
    }
    bad_run = 0;
    report.trace.push_back(e.value);
    state = adam_step(std::move(state), e.packed(), opt);
  }
  report.final = MeanFieldGaussian::unpack(state.params);
  return report;
}

}  // namespace sabvi
