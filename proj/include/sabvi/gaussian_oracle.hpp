#pragma once

// Closed-form divergences between univariate Gaussians. Used as ground truth
// for the quadrature code; nothing here touches a grid.

#include <cmath>
#include <numbers>
#include <variant>

#include "sabvi/error.hpp"
#include "sabvi/params.hpp"

namespace sabvi::oracle {

struct Normal {
  double mu;
  double sigma;
};

/// log int N1(x)^a N2(x)^b dx. Requires a/s1^2 + b/s2^2 > 0.
inline double log_power_integral(double a, double b, Normal n1, Normal n2) {
  if (!(n1.sigma > 0.0) || !(n2.sigma > 0.0)) throw DomainError("Gaussian scales must be positive");
  const double p1 = 1.0 / (n1.sigma * n1.sigma);
  const double p2 = 1.0 / (n2.sigma * n2.sigma);
  const double prec = a * p1 + b * p2;
  if (!(prec > 0.0)) throw DomainError("combined precision of the power integral is not positive");
  const double mean = (a * p1 * n1.mu + b * p2 * n2.mu) / prec;
  const double c = a * p1 * n1.mu * n1.mu + b * p2 * n2.mu * n2.mu - prec * mean * mean;
  const double log2pi = std::log(2.0 * std::numbers::pi);
  return -0.5 * a * (log2pi + 2.0 * std::log(n1.sigma)) - 0.5 * b * (log2pi + 2.0 * std::log(n2.sigma)) +
         0.5 * (log2pi - std::log(prec)) - 0.5 * c;
}

inline double kl(Normal n1, Normal n2) {
  if (!(n1.sigma > 0.0) || !(n2.sigma > 0.0)) throw DomainError("Gaussian scales must be positive");
  const double d = n1.mu - n2.mu;
  return std::log(n2.sigma / n1.sigma) + (n1.sigma * n1.sigma + d * d) / (2.0 * n2.sigma * n2.sigma) - 0.5;
}

inline double renyi(double alpha, Normal n1, Normal n2) {
  if (alpha == 0.0 || alpha == 1.0) throw DomainError("Renyi order must differ from 0 and 1");
  return log_power_integral(alpha, 1.0 - alpha, n1, n2) / (alpha - 1.0);
}

/// Generic-region sAB divergence D(n1 || n2) from the three closed-form
/// power integrals.
inline double sab_generic(const DivergenceParams& params, Normal n1, Normal n2) {
  if (classify_region(params) != Region::Generic) throw DomainError("closed-form sAB covers the generic region only");
  const double a = params.alpha();
  const double b = params.beta();
  const double l = params.lambda();
  return log_power_integral(l, 0.0, n1, n2) / (b * l) + log_power_integral(0.0, l, n1, n2) / (a * l) -
         log_power_integral(a, b, n1, n2) / (a * b);
}

struct KL {};
struct Renyi {
  double alpha;
};
/// Bhattacharyya coefficient int sqrt(p q).
struct Hellinger {};
/// int p^2 / q.
struct ChiSq {};
/// int p^a q^(1-a).
struct PowerIntegral {
  double a;
};
using Kind = std::variant<KL, Renyi, Hellinger, ChiSq, PowerIntegral>;

inline double gaussian_oracle(const Kind& kind, double mu1, double s1, double mu2, double s2) {
  const Normal n1{mu1, s1};
  const Normal n2{mu2, s2};
  struct Visitor {
    Normal n1, n2;
    double operator()(KL) const { return kl(n1, n2); }
    double operator()(Renyi r) const { return renyi(r.alpha, n1, n2); }
    double operator()(Hellinger) const { return std::exp(log_power_integral(0.5, 0.5, n1, n2)); }
    double operator()(ChiSq) const { return std::exp(log_power_integral(2.0, -1.0, n1, n2)); }
    double operator()(PowerIntegral p) const { return std::exp(log_power_integral(p.a, 1.0 - p.a, n1, n2)); }
  };
  return std::visit(Visitor{n1, n2}, kind);
}

}  // namespace sabvi::oracle
