#pragma once

// Quadrature evaluation of the scale-invariant alpha-beta divergence
// D(p || q) between tabulated densities, plus direct implementations of the
// divergences it reduces to. All sAB terms are integrals against a
// normalized reference measure; in the Generic region the value does not
// depend on that choice, and in the limit regions it keeps every term finite.

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "sabvi/error.hpp"
#include "sabvi/grid.hpp"
#include "sabvi/params.hpp"

namespace sabvi {

namespace detail {

inline void require_shared_grid(const GridDensity& p, const GridDensity& q) {
  if (!p.same_grid(q)) throw DomainError("densities must share the same grid");
}

inline void require_measure(const GridDensity& p, const QuadratureMeasure& m) {
  if (m.size() != p.size()) throw DomainError("measure length differs from grid size");
}

// Per-node combination a*log p + b*log q together with the union of the floor
// masks of the densities whose exponent is nonzero.
struct Integrand {
  std::vector<double> log_f;
  std::vector<unsigned char> mask;
};

inline Integrand power_product(const GridDensity& p, double a, const GridDensity& q, double b) {
  Integrand r;
  const std::size_t n = p.size();
  r.log_f.resize(n);
  r.mask.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    double v = 0.0;
    bool fl = false;
    if (a != 0.0) {
      v += a * p.log_value(i);
      fl = fl || p.floored(i);
    }
    if (b != 0.0) {
      v += b * q.log_value(i);
      fl = fl || q.floored(i);
    }
    r.log_f[i] = v;
    r.mask[i] = fl ? 1 : 0;
  }
  return r;
}

inline double log_term(std::string_view name, const Integrand& f, const QuadratureMeasure& m) {
  return checked_log_integral(name, f.log_f, m.weights(), f.mask);
}

inline double finite_or_throw(double v, std::string_view what) {
  if (!std::isfinite(v)) throw EvaluationError("non-finite result in " + std::string(what));
  return v;
}

// log sum_i w_i exp(v_i) for centered values v (sum_i w_i = 1, sum_i w_i v_i
// small relative to |v|). When every |v_i| is moderate the sum is formed as
// log1p(sum_i w_i expm1(v_i)), which keeps full relative precision as the
// exponents shrink toward zero; otherwise it falls back to the stabilized sum.
inline double centered_log_mean(std::string_view name, std::span<const double> v, std::span<const double> w,
                                std::span<const unsigned char> mask) {
  double vmax = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i)
    if (w[i] > 0.0) vmax = std::max(vmax, std::abs(v[i]));
  if (!(vmax <= 50.0)) return checked_log_integral(name, v, w, mask);
  double s = 0.0;
  double s_floor = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (w[i] <= 0.0) continue;
    s += w[i] * std::expm1(v[i]);
    if (mask[i]) s_floor += w[i] * std::exp(v[i]);
  }
  const double r = std::log1p(s);
  if (!std::isfinite(r)) throw EvaluationError("non-finite value in term " + std::string(name));
  if (s_floor / (1.0 + s) > 0.5)
    throw EvaluationError("term " + std::string(name) +
                          " is dominated by floored density values (tails too light for the exponent)");
  return r;
}

// Generic region. With X = log p, Y = log q and means taken under the
// normalized weights, each log-integral is split into its first-order part
// and a centered remainder; the first-order parts and the measure total
// cancel exactly in the combination, so only the remainders are evaluated.
inline double sab_generic(double a, double b, const GridDensity& p, const GridDensity& q,
                          const QuadratureMeasure& m) {
  const double l = a + b;
  const std::size_t n = p.size();
  const double total = m.total();
  std::vector<double> w(m.weights().begin(), m.weights().end());
  for (double& wi : w) wi /= total;
  double mx = 0.0;
  double my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += w[i] * p.log_value(i);
    my += w[i] * q.log_value(i);
  }
  const Integrand pl = power_product(p, l, q, 0.0);
  const Integrand ql = power_product(q, l, p, 0.0);
  const Integrand pq = power_product(p, a, q, b);
  std::vector<double> vp(n), vq(n), vpq(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = p.log_value(i) - mx;
    const double dy = q.log_value(i) - my;
    vp[i] = l * dx;
    vq[i] = l * dy;
    vpq[i] = a * dx + b * dy;
  }
  const double t_p = centered_log_mean("log int p^(alpha+beta)", vp, w, pl.mask);
  const double t_q = centered_log_mean("log int q^(alpha+beta)", vq, w, ql.mask);
  const double t_pq = centered_log_mean("log int p^alpha q^beta", vpq, w, pq.mask);
  return finite_or_throw(t_p / (b * l) + t_q / (a * l) - t_pq / (a * b), "generic sAB formula");
}

// alpha != 0, beta == 0:
//   (1/a^2) (log int q^a - log int p^a) + (1/a) int p^a log(p/q) / int p^a
inline double sab_beta_zero(double a, const GridDensity& p, const GridDensity& q, const QuadratureMeasure& m) {
  const Integrand pa = power_product(p, a, q, 0.0);
  const Integrand qa = power_product(q, a, p, 0.0);
  const double log_pa = log_term("log int p^alpha", pa, m);
  const double log_qa = log_term("log int q^alpha", qa, m);

  // Expectation of log(p/q) under the tilted weights p^a dmu / int p^a dmu.
  const auto w = m.weights();
  double e = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (w[i] <= 0.0) continue;
    const double t = std::exp(pa.log_f[i] + std::log(w[i]) - log_pa);
    e += t * (p.log_value(i) - q.log_value(i));
  }
  return finite_or_throw((log_qa - log_pa) / (a * a) + e / a, "int p^alpha log(p/q)");
}

}  // namespace detail

/// D_sAB^{alpha,beta}(p || q) over an explicit reference measure.
inline double eval_sab(const DivergenceParams& params, const GridDensity& p, const GridDensity& q,
                       const QuadratureMeasure& measure) {
  detail::require_shared_grid(p, q);
  detail::require_measure(p, measure);
  const double a = params.alpha();
  const double b = params.beta();

  switch (classify_region(params)) {
    case Region::Generic:
      return detail::sab_generic(a, b, p, q, measure);
    case Region::SumZero: {
      const detail::Integrand ratio = detail::power_product(p, a, q, -a);
      const double log_ratio = detail::log_term("log int (p/q)^alpha", ratio, measure);
      const auto w = measure.weights();
      double mean_log_ratio = 0.0;
      for (std::size_t i = 0; i < p.size(); ++i) mean_log_ratio += w[i] * (p.log_value(i) - q.log_value(i));
      return detail::finite_or_throw((log_ratio - a * mean_log_ratio) / (a * a), "alpha+beta=0 limit");
    }
    case Region::BetaZero:
      return detail::sab_beta_zero(a, p, q, measure);
    case Region::AlphaZero:
      // Dual symmetry: D^{0,b}(p||q) = D^{b,0}(q||p).
      return detail::sab_beta_zero(b, q, p, measure);
    case Region::BothZero: {
      // Half the variance of log(p/q) under the reference measure. Centering
      // makes the value the limit of the generic formula along every path and
      // keeps it invariant to rescaling p or q.
      const auto w = measure.weights();
      const double total = measure.total();
      double mean = 0.0;
      for (std::size_t i = 0; i < p.size(); ++i) mean += w[i] * (p.log_value(i) - q.log_value(i));
      mean /= total;
      double var = 0.0;
      for (std::size_t i = 0; i < p.size(); ++i) {
        const double d = p.log_value(i) - q.log_value(i) - mean;
        var += w[i] * d * d;
      }
      return detail::finite_or_throw(0.5 * var / total, "alpha=beta=0 limit");
    }
  }
  throw DomainError("unknown region");
}

/// D_sAB^{alpha,beta}(p || q) with the normalized trapezoid measure.
inline double eval_sab(const DivergenceParams& params, const GridDensity& p, const GridDensity& q) {
  return eval_sab(params, p, q, QuadratureMeasure::normalized_for(p));
}

// Direct reference implementations. These integrate against d(theta) with
// the trapezoid rule and never route through eval_sab.

/// KL(p || q) = int p log(p/q).
inline double eval_kl(const GridDensity& p, const GridDensity& q) {
  detail::require_shared_grid(p, q);
  const QuadratureMeasure m = QuadratureMeasure::lebesgue_for(p);
  const auto w = m.weights();
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i)
    s += w[i] * std::exp(p.log_value(i)) * (p.log_value(i) - q.log_value(i));
  return detail::finite_or_throw(s, "KL integral");
}

/// Renyi divergence of order alpha: 1/(alpha-1) log int p^alpha q^(1-alpha).
inline double eval_renyi(double alpha, const GridDensity& p, const GridDensity& q) {
  if (alpha == 0.0 || alpha == 1.0 || !std::isfinite(alpha))
    throw DomainError("Renyi order must be finite and differ from 0 and 1");
  detail::require_shared_grid(p, q);
  const QuadratureMeasure m = QuadratureMeasure::lebesgue_for(p);
  const double t = detail::log_term("log int p^alpha q^(1-alpha)", detail::power_product(p, alpha, q, 1.0 - alpha), m);
  return detail::finite_or_throw(t / (alpha - 1.0), "Renyi divergence");
}

/// Gamma divergence:
///   1/(b(b+1)) log int p^(b+1) + 1/(b+1) log int q^(b+1) - 1/b log int p q^b.
inline double eval_gamma(double beta, const GridDensity& p, const GridDensity& q) {
  if (beta == 0.0 || beta == -1.0 || !std::isfinite(beta))
    throw DomainError("gamma-divergence parameter must be finite and differ from 0 and -1");
  detail::require_shared_grid(p, q);
  const QuadratureMeasure m = QuadratureMeasure::lebesgue_for(p);
  const double t_p = detail::log_term("log int p^(beta+1)", detail::power_product(p, beta + 1.0, q, 0.0), m);
  const double t_q = detail::log_term("log int q^(beta+1)", detail::power_product(q, beta + 1.0, p, 0.0), m);
  const double t_pq = detail::log_term("log int p q^beta", detail::power_product(p, 1.0, q, beta), m);
  return detail::finite_or_throw(t_p / (beta * (beta + 1.0)) + t_q / (beta + 1.0) - t_pq / beta,
                                 "gamma divergence");
}

/// -4 log int sqrt(p q): the Hellinger-affinity form.
inline double eval_hellinger(const GridDensity& p, const GridDensity& q) {
  detail::require_shared_grid(p, q);
  const QuadratureMeasure m = QuadratureMeasure::lebesgue_for(p);
  return -4.0 * detail::log_term("log int sqrt(p q)", detail::power_product(p, 0.5, q, 0.5), m);
}

/// 1/2 log int p^2 / q: the chi-square form.
inline double eval_chisq(const GridDensity& p, const GridDensity& q) {
  detail::require_shared_grid(p, q);
  const QuadratureMeasure m = QuadratureMeasure::lebesgue_for(p);
  return 0.5 * detail::log_term("log int p^2/q", detail::power_product(p, 2.0, q, -1.0), m);
}

/// 1/2 int (log p - log q)^2 against the normalized reference measure.
inline double eval_log_euclidean(const GridDensity& p, const GridDensity& q) {
  detail::require_shared_grid(p, q);
  const QuadratureMeasure m = QuadratureMeasure::normalized_for(p);
  const auto w = m.weights();
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double d = p.log_value(i) - q.log_value(i);
    s += w[i] * d * d;
  }
  return 0.5 * s;
}

}  // namespace sabvi
