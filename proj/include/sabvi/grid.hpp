#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "sabvi/error.hpp"

namespace sabvi {

/// Log-density values below this are clamped. exp(-700) is still a normal
/// double, so every tabulated density stays strictly positive.
inline constexpr double kLogFloor = -700.0;

/// Default node count for automatically built grids.
inline constexpr std::size_t kDefaultGridSize = 4001;

/// A possibly unnormalized 1-D density tabulated in log space on the uniform
/// grid lo = x_0 < ... < x_{n-1} = hi.
class GridDensity {
 public:
  GridDensity(double lo, double hi, std::vector<double> log_values)
      : lo_(lo), hi_(hi), log_values_(std::move(log_values)) {
    if (!(hi_ > lo_) || !std::isfinite(lo_) || !std::isfinite(hi_))
      throw DomainError("grid bounds must be finite with hi > lo");
    if (log_values_.size() < 2) throw DomainError("grid needs at least two nodes");
    floored_.resize(log_values_.size());
    for (std::size_t i = 0; i < log_values_.size(); ++i) {
      double& v = log_values_[i];
      if (std::isnan(v)) throw DomainError("grid log-density contains NaN at node " + std::to_string(i));
      if (v <= kLogFloor) {
        v = kLogFloor;
        floored_[i] = 1;
      }
      if (v == std::numeric_limits<double>::infinity())
        throw DomainError("grid log-density is +inf at node " + std::to_string(i));
    }
  }

  /// Tabulates log_density(x) on n uniform nodes of [lo, hi].
  template <class F>
  static GridDensity tabulate(double lo, double hi, std::size_t n, F&& log_density) {
    if (n < 2) throw DomainError("grid needs at least two nodes");
    std::vector<double> v(n);
    const double dx = (hi - lo) / static_cast<double>(n - 1);
    for (std::size_t i = 0; i < n; ++i) v[i] = log_density(i + 1 == n ? hi : lo + dx * static_cast<double>(i));
    return GridDensity(lo, hi, std::move(v));
  }

  /// Same grid, different values.
  template <class F>
  GridDensity retabulate(F&& log_density) const {
    return tabulate(lo_, hi_, size(), std::forward<F>(log_density));
  }

  double lo() const noexcept { return lo_; }
  double hi() const noexcept { return hi_; }
  std::size_t size() const noexcept { return log_values_.size(); }
  double spacing() const noexcept { return (hi_ - lo_) / static_cast<double>(size() - 1); }
  double node(std::size_t i) const noexcept {
    return i + 1 == size() ? hi_ : lo_ + spacing() * static_cast<double>(i);
  }
  std::span<const double> log_values() const noexcept { return log_values_; }
  double log_value(std::size_t i) const noexcept { return log_values_[i]; }
  bool floored(std::size_t i) const noexcept { return floored_[i] != 0; }

  /// c * density, applied in log space. Floor flags follow the node.
  GridDensity scaled(double log_c) const {
    GridDensity out = *this;
    for (double& v : out.log_values_) v += log_c;
    return out;
  }

  bool same_grid(const GridDensity& other) const noexcept {
    return lo_ == other.lo_ && hi_ == other.hi_ && size() == other.size();
  }

 private:
  double lo_;
  double hi_;
  std::vector<double> log_values_;
  std::vector<unsigned char> floored_;
};

/// Nonnegative quadrature weights over the nodes of a grid.
class QuadratureMeasure {
 public:
  explicit QuadratureMeasure(std::vector<double> weights) : weights_(std::move(weights)) {
    for (double w : weights_)
      if (!(w >= 0.0) || !std::isfinite(w)) throw DomainError("quadrature weights must be finite and nonnegative");
  }

  /// Trapezoid weights rescaled to sum to one: the uniform probability
  /// measure on [lo, hi].
  static QuadratureMeasure normalized_trapezoid(std::size_t n) {
    if (n < 2) throw DomainError("trapezoid rule needs at least two nodes");
    std::vector<double> w(n, 1.0 / static_cast<double>(n - 1));
    w.front() *= 0.5;
    w.back() *= 0.5;
    return QuadratureMeasure(std::move(w));
  }

  /// Plain trapezoid weights for d(theta) on [lo, hi].
  static QuadratureMeasure lebesgue_trapezoid(double lo, double hi, std::size_t n) {
    QuadratureMeasure m = normalized_trapezoid(n);
    for (double& w : m.weights_) w *= (hi - lo);
    return m;
  }

  static QuadratureMeasure normalized_for(const GridDensity& g) { return normalized_trapezoid(g.size()); }
  static QuadratureMeasure lebesgue_for(const GridDensity& g) {
    return lebesgue_trapezoid(g.lo(), g.hi(), g.size());
  }

  QuadratureMeasure rescaled(double c) const {
    if (!(c > 0.0)) throw DomainError("measure rescaling factor must be positive");
    QuadratureMeasure m = *this;
    for (double& w : m.weights_) w *= c;
    return m;
  }

  std::span<const double> weights() const noexcept { return weights_; }
  std::size_t size() const noexcept { return weights_.size(); }
  double total() const noexcept {
    double s = 0.0;
    for (double w : weights_) s += w;
    return s;
  }

 private:
  std::vector<double> weights_;
};

namespace detail {

struct WeightedLse {
  double log_value;     // log sum_i w_i exp(f_i)
  double floored_share; // fraction of the sum carried by masked nodes
};

/// Stabilized log sum_i w_i exp(f_i); the mask flags nodes whose value is
/// driven by the density floor.
inline WeightedLse weighted_lse(std::span<const double> log_f, std::span<const double> weights,
                                std::span<const unsigned char> floored_mask = {}) {
  if (log_f.size() != weights.size()) throw DomainError("integrand and measure lengths differ");
  double m = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < log_f.size(); ++i)
    if (weights[i] > 0.0) m = std::max(m, log_f[i] + std::log(weights[i]));
  if (!std::isfinite(m)) return {m, 0.0};
  double s = 0.0;
  double s_floor = 0.0;
  for (std::size_t i = 0; i < log_f.size(); ++i) {
    if (weights[i] <= 0.0) continue;
    const double t = weights[i] * std::exp(log_f[i] - m);
    s += t;
    if (!floored_mask.empty() && floored_mask[i]) s_floor += t;
  }
  return {m + std::log(s), s_floor / s};
}

/// Evaluates one log-integral term of a divergence and enforces the
/// floor-domination and finiteness rules. `term` names the integral in
/// error messages.
inline double checked_log_integral(std::string_view term, std::span<const double> log_f,
                                   std::span<const double> weights,
                                   std::span<const unsigned char> floored_mask) {
  const WeightedLse r = weighted_lse(log_f, weights, floored_mask);
  if (!std::isfinite(r.log_value))
    throw EvaluationError("non-finite value in term " + std::string(term));
  if (r.floored_share > 0.5)
    throw EvaluationError("term " + std::string(term) +
                          " is dominated by floored density values (tails too light for the exponent)");
  return r.log_value;
}

}  // namespace detail

/// log of the integral of exp(log_f) against the measure, via log-sum-exp.
/// Throws EvaluationError when every weighted entry sits at the floor.
inline double log_integral(std::span<const double> log_f, const QuadratureMeasure& measure) {
  if (log_f.size() != measure.size()) throw DomainError("integrand and measure lengths differ");
  const auto w = measure.weights();
  bool any_above = false;
  for (std::size_t i = 0; i < log_f.size(); ++i)
    if (w[i] > 0.0 && log_f[i] > kLogFloor) any_above = true;
  if (!any_above) throw EvaluationError("log_integral: every weighted entry is at the density floor");
  const double v = detail::weighted_lse(log_f, w).log_value;
  if (!std::isfinite(v)) throw EvaluationError("log_integral: non-finite result");
  return v;
}

/// Log-density of N(mu, sigma^2).
inline double normal_log_pdf(double x, double mu, double sigma) noexcept {
  const double z = (x - mu) / sigma;
  return -0.5 * z * z - std::log(sigma) - 0.5 * std::log(2.0 * std::numbers::pi);
}

struct GaussianSpec {
  double mu;
  double sigma;
};

/// Bounds [min(mu - 10 sigma), max(mu + 10 sigma)] over the given Gaussians.
inline std::pair<double, double> auto_grid_bounds(std::span<const GaussianSpec> gaussians) {
  if (gaussians.empty()) throw DomainError("auto grid needs at least one Gaussian");
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (const auto& g : gaussians) {
    if (!(g.sigma > 0.0)) throw DomainError("Gaussian scale must be positive");
    lo = std::min(lo, g.mu - 10.0 * g.sigma);
    hi = std::max(hi, g.mu + 10.0 * g.sigma);
  }
  return {lo, hi};
}

inline GridDensity tabulate_gaussian(const GaussianSpec& g, double lo, double hi,
                                     std::size_t n = kDefaultGridSize) {
  if (!(g.sigma > 0.0)) throw DomainError("Gaussian scale must be positive");
  return GridDensity::tabulate(lo, hi, n, [&](double x) { return normal_log_pdf(x, g.mu, g.sigma); });
}

/// Tabulates two Gaussians on their shared automatic grid.
inline std::pair<GridDensity, GridDensity> gaussian_pair(const GaussianSpec& p, const GaussianSpec& q,
                                                         std::size_t n = kDefaultGridSize) {
  const GaussianSpec both[] = {p, q};
  const auto [lo, hi] = auto_grid_bounds(both);
  return {tabulate_gaussian(p, lo, hi, n), tabulate_gaussian(q, lo, hi, n)};
}

}  // namespace sabvi
