#pragma once

#include <cmath>
#include <string>
#include <string_view>

#include "sabvi/error.hpp"

namespace sabvi {

/// The (alpha, beta) pair that selects a member of the scale-invariant
/// alpha-beta family. lambda = alpha + beta is always recomputed.
class DivergenceParams {
 public:
  DivergenceParams(double alpha, double beta) : alpha_(alpha), beta_(beta) {
    if (!std::isfinite(alpha) || !std::isfinite(beta))
      throw DomainError("divergence parameters must be finite");
  }

  /// Builds the pair from the (lambda, beta) convention used when reporting
  /// robustness settings.
  static DivergenceParams from_lambda_beta(double lambda, double beta) {
    return DivergenceParams(lambda - beta, beta);
  }

  double alpha() const noexcept { return alpha_; }
  double beta() const noexcept { return beta_; }
  double lambda() const noexcept { return alpha_ + beta_; }

  friend bool operator==(const DivergenceParams&, const DivergenceParams&) = default;

 private:
  double alpha_;
  double beta_;
};

enum class Region { Generic, AlphaZero, BetaZero, SumZero, BothZero };

/// Classification uses exact comparison with zero; near-limit parameters are
/// Generic.
inline Region classify_region(const DivergenceParams& p) noexcept {
  const double a = p.alpha();
  const double b = p.beta();
  if (a == 0.0 && b == 0.0) return Region::BothZero;
  if (a == 0.0) return Region::AlphaZero;
  if (b == 0.0) return Region::BetaZero;
  if (a + b == 0.0) return Region::SumZero;
  return Region::Generic;
}

inline std::string_view to_string(Region r) noexcept {
  switch (r) {
    case Region::Generic: return "Generic";
    case Region::AlphaZero: return "AlphaZero";
    case Region::BetaZero: return "BetaZero";
    case Region::SumZero: return "SumZero";
    case Region::BothZero: return "BothZero";
  }
  return "Unknown";
}

/// True for the (1, 0) pair that the training loop routes to the
/// reparameterized negative ELBO.
inline bool is_kl_point(const DivergenceParams& p) noexcept {
  return p.alpha() == 1.0 && p.beta() == 0.0;
}

}  // namespace sabvi
