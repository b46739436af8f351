#pragma once

// Analytic-versus-finite-difference conformance suites for every gradient in
// the library: the quadrature gradients of the 1-D fitting divergences, the
// reparameterized Monte Carlo objective gradients (noise held fixed), and the
// model log-joint gradients. Errors are measured component-wise as
// |analytic - fd| / max(1, |fd|).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "sabvi/density_fit.hpp"
#include "sabvi/error.hpp"
#include "sabvi/grid.hpp"
#include "sabvi/mean_field.hpp"
#include "sabvi/models/blr.hpp"
#include "sabvi/models/bnn.hpp"
#include "sabvi/rng.hpp"
#include "sabvi/vi.hpp"

namespace sabvi::gradcheck {

inline constexpr double kThreshold = 1e-4;

struct Options {
  std::uint64_t seed = 2024;
  // Test hook: every analytic gradient component g is replaced by
  // g + perturb * max(1, |g|) before comparison.
  double perturb = 0.0;
};

struct SuiteResult {
  std::string name;
  int cases = 0;
  int skipped = 0;  // cases whose divergence is not evaluable on the grid
  double max_rel_err = 0.0;
  double threshold = kThreshold;
  std::string worst_case;

  bool passed() const { return cases > 0 && max_rel_err < threshold; }
};

inline const std::vector<std::string>& suite_names() {
  static const std::vector<std::string> names{"appendix-c", "mc", "models"};
  return names;
}

namespace detail {

inline double rel_err(double value, double reference) {
  return std::abs(value - reference) / std::max(1.0, std::abs(reference));
}

inline double perturbed(double g, double perturb) { return g + perturb * std::max(1.0, std::abs(g)); }

inline Eigen::VectorXd perturbed(Eigen::VectorXd g, double perturb) {
  for (Eigen::Index i = 0; i < g.size(); ++i) g[i] = perturbed(g[i], perturb);
  return g;
}

inline double max_rel_err(const Eigen::VectorXd& g, const Eigen::VectorXd& ref) {
  double e = 0.0;
  for (Eigen::Index i = 0; i < g.size(); ++i) e = std::max(e, rel_err(g[i], ref[i]));
  return e;
}

inline Eigen::VectorXd central_differences(const std::function<double(const Eigen::VectorXd&)>& f,
                                           const Eigen::VectorXd& x, double h) {
  Eigen::VectorXd g(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    Eigen::VectorXd xp = x, xm = x;
    xp[i] += h;
    xm[i] -= h;
    g[i] = (f(xp) - f(xm)) / (2.0 * h);
  }
  return g;
}

inline void record(SuiteResult& r, double err, const std::string& label) {
  ++r.cases;
  if (!(err <= r.max_rel_err)) {  // also captures NaN
    r.max_rel_err = std::isnan(err) ? std::numeric_limits<double>::infinity() : err;
    r.worst_case = label;
  }
}

inline double uniform(CounterRng& rng, double lo, double hi) { return lo + (hi - lo) * rng.uniform(); }

inline Eigen::VectorXd normal_vector(CounterRng& rng, Eigen::Index n, double scale) {
  Eigen::VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = scale * rng.normal();
  return v;
}

// x ~ U[-1, 1]^d, y = 0.5 sum(x) + 0.1 U[-1, 1].
inline RegressionData linear_data(CounterRng& rng, Eigen::Index n, Eigen::Index d) {
  RegressionData data{Eigen::MatrixXd(n, d), Eigen::VectorXd(n)};
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < d; ++j) data.X(i, j) = uniform(rng, -1.0, 1.0);
    data.y[i] = 0.5 * data.X.row(i).sum() + 0.1 * uniform(rng, -1.0, 1.0);
  }
  return data;
}

}  // namespace detail

/// Quadrature gradients of KL, Renyi, gamma and sAB (generic and beta = 0)
/// for random Gaussian pairs, against central differences with h = 1e-5.
inline SuiteResult check_fit_gradients(const Options& opt, int n_cases = 50) {
  SuiteResult r;
  r.name = "appendix-c";
  CounterRng rng(derive_seed(opt.seed, 1), 0);
  auto draw = [&] {
    return GaussianSpec{detail::uniform(rng, -1.5, 1.5), std::exp(detail::uniform(rng, std::log(0.5), std::log(2.0)))};
  };
  for (int i = 0; i < n_cases; ++i) {
    const GaussianSpec gp = draw();
    const GaussianSpec gq = draw();
    const auto [p, unused] = gaussian_pair(gp, gq);
    const Gaussian1D q{gq.mu, std::log(gq.sigma)};
    Divergence d;
    switch (i % 5) {
      case 0: d = fit::KL{}; break;
      case 1: {
        double a = detail::uniform(rng, 0.2, 1.8);
        if (std::abs(a - 1.0) < 0.05) a += 0.1;
        d = fit::Renyi{a};
        break;
      }
      case 2: {
        double b = detail::uniform(rng, -0.8, 2.0);
        if (std::abs(b) < 0.05) b = 0.25;
        d = fit::Gamma{b};
        break;
      }
      case 3: d = fit::SAB{{detail::uniform(rng, 0.3, 2.0), 0.0}}; break;
      default: {
        const double a = detail::uniform(rng, 0.3, 2.0);
        double b = detail::uniform(rng, -0.8, 2.0);
        if (std::abs(b) < 0.05) b = 0.25;
        d = fit::SAB{{a, b}};
      }
    }
    try {
      const Gradient1D an = analytic_gradient(d, q, p);
      const Gradient1D fd = finite_diff_gradient(d, q, p, 1e-5);
      const double e = std::max(detail::rel_err(detail::perturbed(an.d_mu, opt.perturb), fd.d_mu),
                                detail::rel_err(detail::perturbed(an.d_log_sigma, opt.perturb), fd.d_log_sigma));
      std::ostringstream label;
      label << describe(d) << " q=N(" << gq.mu << "," << gq.sigma << ") p=N(" << gp.mu << "," << gp.sigma << ")";
      detail::record(r, e, label.str());
    } catch (const EvaluationError&) {
      ++r.skipped;
    }
  }
  return r;
}

/// Exact gradients of the Monte Carlo sAB objective and of the negative
/// ELBO for fixed noise blocks, on linear-regression and network models.
inline SuiteResult check_mc_gradients(const Options& opt, int n_cases = 24) {
  SuiteResult r;
  r.name = "mc";
  CounterRng rng(derive_seed(opt.seed, 2), 0);
  for (int rep = 0; rep < n_cases; ++rep) {
    const bool kl = rep % 4 == 3;
    const double alpha = detail::uniform(rng, 0.3, 2.2);
    double beta = detail::uniform(rng, -1.0, 1.5);
    if (std::abs(beta) < 0.05) beta = 0.3;
    if (std::abs(alpha + beta) < 0.05) beta += 0.3;
    const DivergenceParams params = kl ? DivergenceParams(1.0, 0.0) : DivergenceParams(alpha, beta);
    auto check = [&](const auto& model, const RegressionData& data, double sig, const char* what) {
      const Eigen::Index d = model.dim();
      const MeanFieldGaussian q(detail::normal_vector(rng, d, 0.4),
                                Eigen::VectorXd::Constant(d, std::log(sig)) + detail::normal_vector(rng, d, 0.1));
      const NoiseBlock noise = NoiseBlock::draw(derive_seed(opt.seed, 100 + rep), 0, 6, d);
      const Eigen::VectorXd an =
          detail::perturbed(training_objective(params, q, model, data, noise).packed(), opt.perturb);
      const Eigen::VectorXd fd = detail::central_differences(
          [&](const Eigen::VectorXd& v) {
            const MeanFieldGaussian qv = MeanFieldGaussian::unpack(v);
            return kl ? kl_elbo_objective(qv, model, data, noise) : mc_objective(params, qv, model, data, noise);
          },
          q.packed(), 1e-5);
      std::ostringstream label;
      label << what << (kl ? " KL path" : "") << " alpha=" << params.alpha() << " beta=" << params.beta();
      detail::record(r, detail::max_rel_err(an, fd), label.str());
    };
    if (rep % 2 == 0)
      check(BLRModel(2), detail::linear_data(rng, 30, 2), 0.05, "BLR[2]");
    else
      check(BNNModel({{2, 4, 1}}), detail::linear_data(rng, 20, 2), 0.1, "BNN[2,4,1]");
  }
  return r;
}

/// Log-joint gradients of BLR (with and without bias) and of networks of
/// several shapes (fixed and learnable noise) at random parameters,
/// against central differences with h = 1e-6.
inline SuiteResult check_model_gradients(const Options& opt, int reps_per_model = 20) {
  SuiteResult r;
  r.name = "models";
  CounterRng rng(derive_seed(opt.seed, 3), 0);
  auto run = [&](const auto& model, const RegressionData& data, double scale, const std::string& what) {
    for (int rep = 0; rep < reps_per_model; ++rep) {
      const Eigen::VectorXd theta = detail::normal_vector(rng, model.dim(), scale);
      const Eigen::VectorXd an = detail::perturbed(model.grad_log_joint(theta, data), opt.perturb);
      const Eigen::VectorXd fd = detail::central_differences(
          [&](const Eigen::VectorXd& t) { return model.log_joint(t, data); }, theta, 1e-6);
      detail::record(r, detail::max_rel_err(an, fd), what + " rep " + std::to_string(rep));
    }
  };
  for (bool bias : {true, false}) run(BLRModel(4, 1.0, 1.0, 0.1, bias), detail::linear_data(rng, 30, 4), 1.0,
                                      bias ? "BLR[4]+bias" : "BLR[4]");
  const RegressionData data = detail::linear_data(rng, 20, 3);
  for (const auto& sizes : {std::vector<int>{3, 1, 1}, std::vector<int>{3, 6, 1}, std::vector<int>{3, 4, 5, 1}}) {
    for (bool learn : {false, true}) {
      BNNConfig c{sizes};
      c.learn_noise = learn;
      std::string what = "BNN[";
      for (std::size_t i = 0; i < sizes.size(); ++i) what += (i ? "," : "") + std::to_string(sizes[i]);
      what += learn ? "] learned noise" : "]";
      run(BNNModel(c), data, 0.7, what);
    }
  }
  return r;
}

inline SuiteResult run_suite(const std::string& name, const Options& opt) {
  if (name == "appendix-c") return check_fit_gradients(opt);
  if (name == "mc") return check_mc_gradients(opt);
  if (name == "models") return check_model_gradients(opt);
  throw ConfigError("unknown gradient suite '" + name + "' (expected appendix-c, mc or models)");
}

}  // namespace sabvi::gradcheck
