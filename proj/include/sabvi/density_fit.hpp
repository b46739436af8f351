#pragma once

// Fitting a single Gaussian q to a fixed 1-D target p by minimizing D(q || p)
// with quadrature gradients, and the skew-normal mixture used as the
// default target.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include <Eigen/Core>

#include "sabvi/divergence.hpp"
#include "sabvi/error.hpp"
#include "sabvi/grid.hpp"
#include "sabvi/optim.hpp"
#include "sabvi/params.hpp"

namespace sabvi {

struct Gaussian1D {
  double mu = 0.0;
  double log_sigma = 0.0;

  double sigma() const noexcept { return std::exp(log_sigma); }
  double log_pdf(double x) const noexcept { return normal_log_pdf(x, mu, sigma()); }
};

// ---- skew-normal mixture target -------------------------------------------

/// log Phi(t) for the standard normal CDF, accurate far into the left tail.
inline double log_normal_cdf(double t) noexcept {
  if (t > -35.0) return std::log(0.5 * std::erfc(-t / std::numbers::sqrt2));
  // Mills-ratio series: Phi(t) = phi(t)/|t| * (1 - 1/t^2 + 3/t^4 - 15/t^6 + 105/t^8 ...).
  const double u = 1.0 / (t * t);
  const double series = 1.0 - u * (1.0 - 3.0 * u * (1.0 - 5.0 * u * (1.0 - 7.0 * u)));
  return -0.5 * t * t - 0.5 * std::log(2.0 * std::numbers::pi) - std::log(-t) + std::log(series);
}

/// log of (2/scale) phi(z) Phi(shape z), z = (x - location)/scale.
inline double skew_normal_log_pdf(double x, double location, double scale, double shape) {
  if (!(scale > 0.0)) throw DomainError("skew-normal scale must be positive");
  const double z = (x - location) / scale;
  return std::log(2.0 / scale) - 0.5 * z * z - 0.5 * std::log(2.0 * std::numbers::pi) + log_normal_cdf(shape * z);
}

struct SkewComponent {
  double weight;
  double location;
  double scale;
  double shape;
};

class SkewMixtureTarget {
 public:
  explicit SkewMixtureTarget(std::vector<SkewComponent> components) : components_(std::move(components)) {
    if (components_.empty()) throw DomainError("mixture needs at least one component");
    double total = 0.0;
    for (const auto& c : components_) {
      if (!(c.weight > 0.0 && c.weight <= 1.0)) throw DomainError("mixture weights must lie in (0, 1]");
      if (!(c.scale > 0.0)) throw DomainError("mixture scales must be positive");
      total += c.weight;
    }
    if (std::abs(total - 1.0) > 1e-12) throw DomainError("mixture weights must sum to one");
  }

  /// Two equally weighted skew normals: a tall narrow component skewed right
  /// and a short wide component skewed left.
  static SkewMixtureTarget default_skew_pair() {
    return SkewMixtureTarget({{0.5, -1.0, 0.6, 5.0}, {0.5, 1.5, 2.2, -4.0}});
  }

  const std::vector<SkewComponent>& components() const noexcept { return components_; }

  double log_pdf(double x) const {
    double m = -std::numeric_limits<double>::infinity();
    std::vector<double> t(components_.size());
    for (std::size_t k = 0; k < components_.size(); ++k) {
      const auto& c = components_[k];
      t[k] = std::log(c.weight) + skew_normal_log_pdf(x, c.location, c.scale, c.shape);
      m = std::max(m, t[k]);
    }
    double s = 0.0;
    for (double v : t) s += std::exp(v - m);
    return m + std::log(s);
  }

  /// [min(location - 10 scale), max(location + 10 scale)].
  std::pair<double, double> bracket() const {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (const auto& c : components_) {
      lo = std::min(lo, c.location - 10.0 * c.scale);
      hi = std::max(hi, c.location + 10.0 * c.scale);
    }
    return {lo, hi};
  }

  /// Tabulates the target on its effective support: the part of the bracket
  /// where log p stays within `support_log_ratio` of its maximum. Negative
  /// divergence exponents weight the target's tails by p^beta; trimming the
  /// grid to the region where p is representable keeps those terms defined.
  GridDensity tabulate(std::size_t n = kDefaultGridSize, double support_log_ratio = 40.0) const {
    const auto [blo, bhi] = bracket();
    const GridDensity coarse = GridDensity::tabulate(blo, bhi, n, [&](double x) { return log_pdf(x); });
    const auto v = coarse.log_values();
    const double vmax = *std::max_element(v.begin(), v.end());
    std::size_t first = 0;
    std::size_t last = v.size() - 1;
    while (first < last && v[first] < vmax - support_log_ratio) ++first;
    while (last > first && v[last] < vmax - support_log_ratio) --last;
    return GridDensity::tabulate(coarse.node(first), coarse.node(last), n, [&](double x) { return log_pdf(x); });
  }

  /// Mean and standard deviation computed by quadrature on `grid`.
  std::pair<double, double> moments(const GridDensity& grid) const;

  /// Location of the highest density of component k, found on a fine grid.
  double component_mode(std::size_t k, std::size_t n = 200001) const {
    const auto& c = components_.at(k);
    const double lo = c.location - 5.0 * c.scale;
    const double hi = c.location + 5.0 * c.scale;
    double best_x = lo;
    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i) {
      const double x = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
      const double v = skew_normal_log_pdf(x, c.location, c.scale, c.shape);
      if (v > best) {
        best = v;
        best_x = x;
      }
    }
    return best_x;
  }

 private:
  std::vector<SkewComponent> components_;
};

/// Mean and standard deviation of a tabulated (unnormalized) density.
inline std::pair<double, double> grid_moments(const GridDensity& grid) {
  const auto m = QuadratureMeasure::lebesgue_for(grid);
  const auto w = m.weights();
  double z = 0.0, s1 = 0.0, s2 = 0.0;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const double p = w[i] * std::exp(grid.log_value(i));
    const double x = grid.node(i);
    z += p;
    s1 += p * x;
    s2 += p * x * x;
  }
  const double mean = s1 / z;
  return {mean, std::sqrt(std::max(0.0, s2 / z - mean * mean))};
}

inline std::pair<double, double> SkewMixtureTarget::moments(const GridDensity& grid) const {
  return grid_moments(grid);
}

// ---- divergences and gradients --------------------------------------------

namespace fit {
struct KL {};
struct Renyi {
  double alpha;
};
struct Gamma {
  double beta;
};
struct SAB {
  DivergenceParams params;
};
}  // namespace fit

/// The objective D(q || p) minimized over q.
using Divergence = std::variant<fit::KL, fit::Renyi, fit::Gamma, fit::SAB>;

inline std::string describe(const Divergence& d) {
  struct V {
    std::string operator()(const fit::KL&) const { return "KL"; }
    std::string operator()(const fit::Renyi& r) const { return "Renyi(alpha=" + std::to_string(r.alpha) + ")"; }
    std::string operator()(const fit::Gamma& g) const { return "Gamma(beta=" + std::to_string(g.beta) + ")"; }
    std::string operator()(const fit::SAB& s) const {
      return "sAB(alpha=" + std::to_string(s.params.alpha()) + ", beta=" + std::to_string(s.params.beta()) + ")";
    }
  };
  return std::visit(V{}, d);
}

/// q tabulated on p's grid.
inline GridDensity tabulate_on(const Gaussian1D& q, const GridDensity& p) {
  return p.retabulate([&](double x) { return q.log_pdf(x); });
}

/// D(q || p) by quadrature.
inline double evaluate(const Divergence& div, const Gaussian1D& q, const GridDensity& p) {
  const GridDensity qg = tabulate_on(q, p);
  struct V {
    const GridDensity& q;
    const GridDensity& p;
    double operator()(const fit::KL&) const { return eval_kl(q, p); }
    double operator()(const fit::Renyi& r) const { return eval_renyi(r.alpha, q, p); }
    double operator()(const fit::Gamma& g) const { return eval_gamma(g.beta, q, p); }
    double operator()(const fit::SAB& s) const { return eval_sab(s.params, q, p); }
  };
  return std::visit(V{qg, p}, div);
}

struct Gradient1D {
  double d_mu = 0.0;
  double d_log_sigma = 0.0;

  double sup_norm() const noexcept { return std::max(std::abs(d_mu), std::abs(d_log_sigma)); }
};

namespace detail {

// Score of the Gaussian at each node: d log q / d(mu, log sigma). Zero at
// floored nodes, where the tabulated value no longer depends on q.
struct Scores {
  std::vector<double> mu;
  std::vector<double> log_sigma;
};

inline Scores gaussian_scores(const Gaussian1D& q, const GridDensity& qg) {
  const double s = q.sigma();
  Scores r{std::vector<double>(qg.size()), std::vector<double>(qg.size())};
  for (std::size_t i = 0; i < qg.size(); ++i) {
    if (qg.floored(i)) continue;
    const double z = (qg.node(i) - q.mu) / s;
    r.mu[i] = z / s;
    r.log_sigma[i] = z * z - 1.0;
  }
  return r;
}

// Normalized tilting weights w_i f_i / sum_j w_j f_j for f = exp(log_f).
inline std::vector<double> tilt(std::string_view name, const Integrand& f, const QuadratureMeasure& m) {
  const double log_z = checked_log_integral(name, f.log_f, m.weights(), f.mask);
  const auto w = m.weights();
  std::vector<double> t(f.log_f.size(), 0.0);
  for (std::size_t i = 0; i < t.size(); ++i)
    if (w[i] > 0.0) t[i] = std::exp(f.log_f[i] + std::log(w[i]) - log_z);
  return t;
}

inline Gradient1D expect(const std::vector<double>& t, const Scores& g) {
  Gradient1D r;
  for (std::size_t i = 0; i < t.size(); ++i) {
    r.d_mu += t[i] * g.mu[i];
    r.d_log_sigma += t[i] * g.log_sigma[i];
  }
  return r;
}

// d/dphi of the generic sAB D^{a,b}(q || p):
//   (1/b) (E_{q^(a+b)}[g] - E_{q^a p^b}[g]),
// where E_f denotes the expectation under the normalized tilt f dmu.
inline Gradient1D sab_generic_gradient(double a, double b, const GridDensity& q, const GridDensity& p,
                                       const Scores& g) {
  const auto m = QuadratureMeasure::normalized_for(q);
  const Gradient1D e1 = expect(tilt("log int q^(alpha+beta)", power_product(q, a + b, p, 0.0), m), g);
  const Gradient1D e2 = expect(tilt("log int q^alpha p^beta", power_product(q, a, p, b), m), g);
  return {(e1.d_mu - e2.d_mu) / b, (e1.d_log_sigma - e2.d_log_sigma) / b};
}

// d/dphi of D^{a,0}(q || p): the covariance of g with log(q/p) under the
// tilt q^a.
inline Gradient1D sab_beta_zero_gradient(double a, const GridDensity& q, const GridDensity& p, const Scores& g) {
  const auto m = QuadratureMeasure::normalized_for(q);
  const auto t = tilt("log int q^alpha", power_product(q, a, p, 0.0), m);
  double el = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) el += t[i] * (q.log_value(i) - p.log_value(i));
  Gradient1D r;
  for (std::size_t i = 0; i < t.size(); ++i) {
    const double d = q.log_value(i) - p.log_value(i) - el;
    r.d_mu += t[i] * g.mu[i] * d;
    r.d_log_sigma += t[i] * g.log_sigma[i] * d;
  }
  return r;
}

}  // namespace detail

/// Quadrature gradient of D(q || p) with respect to (mu, log sigma).
inline Gradient1D analytic_gradient(const Divergence& div, const Gaussian1D& q, const GridDensity& p) {
  const GridDensity qg = tabulate_on(q, p);
  const detail::Scores g = detail::gaussian_scores(q, qg);

  struct V {
    const GridDensity& q;
    const GridDensity& p;
    const detail::Scores& g;

    Gradient1D operator()(const fit::KL&) const {
      // int q g (log q - log p + 1) d(theta)
      const auto m = QuadratureMeasure::lebesgue_for(q);
      const auto w = m.weights();
      Gradient1D r;
      for (std::size_t i = 0; i < q.size(); ++i) {
        const double f = w[i] * std::exp(q.log_value(i)) * (q.log_value(i) - p.log_value(i) + 1.0);
        r.d_mu += f * g.mu[i];
        r.d_log_sigma += f * g.log_sigma[i];
      }
      return r;
    }
    Gradient1D operator()(const fit::Renyi& r) const {
      if (r.alpha == 0.0 || r.alpha == 1.0) throw DomainError("Renyi order must differ from 0 and 1");
      // alpha/(alpha-1) E_{q^alpha p^(1-alpha)}[g]
      const auto m = QuadratureMeasure::normalized_for(q);
      const Gradient1D e =
          detail::expect(detail::tilt("log int q^alpha p^(1-alpha)", detail::power_product(q, r.alpha, p, 1.0 - r.alpha), m), g);
      const double c = r.alpha / (r.alpha - 1.0);
      return {c * e.d_mu, c * e.d_log_sigma};
    }
    Gradient1D operator()(const fit::Gamma& gm) const {
      if (gm.beta == 0.0 || gm.beta == -1.0) throw DomainError("gamma-divergence parameter must differ from 0 and -1");
      return detail::sab_generic_gradient(1.0, gm.beta, q, p, g);
    }
    Gradient1D operator()(const fit::SAB& s) const {
      const double a = s.params.alpha();
      const double b = s.params.beta();
      switch (classify_region(s.params)) {
        case Region::Generic: return detail::sab_generic_gradient(a, b, q, p, g);
        case Region::BetaZero: return detail::sab_beta_zero_gradient(a, q, p, g);
        default:
          throw UnsupportedRegion("analytic gradient is available for the generic region and beta = 0 only, got " +
                                  std::string(to_string(classify_region(s.params))));
      }
    }
  };
  const auto r = std::visit(V{qg, p, g}, div);
  if (!std::isfinite(r.d_mu) || !std::isfinite(r.d_log_sigma))
    throw EvaluationError("non-finite gradient for " + describe(div));
  return r;
}

/// Central differences of `evaluate` in (mu, log sigma).
inline Gradient1D finite_diff_gradient(const Divergence& div, const Gaussian1D& q, const GridDensity& p, double h) {
  if (!(h > 0.0)) throw DomainError("finite-difference step must be positive");
  const auto at = [&](double dm, double ds) { return evaluate(div, {q.mu + dm, q.log_sigma + ds}, p); };
  return {(at(h, 0.0) - at(-h, 0.0)) / (2.0 * h), (at(0.0, h) - at(0.0, -h)) / (2.0 * h)};
}

// ---- fitting ---------------------------------------------------------------

struct FitResult {
  Gaussian1D final;
  std::vector<double> divergence_trace;
  bool converged = false;
  int iterations = 0;
};

/// Raised when the divergence cannot be evaluated mid-run; carries the
/// iterations completed so far.
class FitAborted : public EvaluationError {
 public:
  FitAborted(const std::string& what, FitResult partial) : EvaluationError(what), partial_(std::move(partial)) {}
  const FitResult& partial() const noexcept { return partial_; }

 private:
  FitResult partial_;
};

inline constexpr double kFitGradientTolerance = 1e-6;
inline constexpr int kDefaultFitIterations = 5000;

/// ADAM on (mu, log sigma) against a tabulated target. Stops when the
/// gradient sup-norm drops below 1e-6 (converged) or after max_iters steps.
inline FitResult fit_gaussian(const Divergence& div, const GridDensity& target, Gaussian1D init,
                              const AdamConfig& opt, int max_iters = kDefaultFitIterations) {
  if (max_iters < 1) throw ConfigError("max_iters must be at least 1");
  opt.validate();
  Eigen::VectorXd x0(2);
  x0 << init.mu, init.log_sigma;
  AdamState state(x0);
  FitResult r;
  r.final = init;
  for (int it = 0; it < max_iters; ++it) {
    const Gaussian1D q{state.params[0], state.params[1]};
    double value;
    Gradient1D g;
    try {
      value = evaluate(div, q, target);
      g = analytic_gradient(div, q, target);
    } catch (const Error& e) {
      r.final = q;
      throw FitAborted("fit aborted at iteration " + std::to_string(it) + ": " + e.what(), std::move(r));
    }
    r.divergence_trace.push_back(value);
    r.final = q;
    if (g.sup_norm() < kFitGradientTolerance) {
      r.converged = true;
      break;
    }
    Eigen::VectorXd grad(2);
    grad << g.d_mu, g.d_log_sigma;
    state = adam_step(std::move(state), grad, opt);
    r.iterations = it + 1;
    r.final = {state.params[0], state.params[1]};
  }
  return r;
}

/// Gaussian with the target's mean and standard deviation (by quadrature).
inline Gaussian1D moment_matched(const GridDensity& target) {
  const auto [mean, sd] = grid_moments(target);
  return {mean, std::log(sd)};
}

inline Gaussian1D moment_matched(const SkewMixtureTarget& target, const GridDensity& grid) {
  const auto [mean, sd] = target.moments(grid);
  return {mean, std::log(sd)};
}

/// Fits against the mixture tabulated on its effective support.
inline FitResult fit_gaussian(const Divergence& div, const SkewMixtureTarget& target, Gaussian1D init,
                              const AdamConfig& opt, int max_iters = kDefaultFitIterations) {
  return fit_gaussian(div, target.tabulate(), init, opt, max_iters);
}

}  // namespace sabvi
