#pragma once

#include <Eigen/Core>

#include "sabvi/error.hpp"

namespace sabvi {

/// Inputs (one row per observation) and scalar targets.
struct RegressionData {
  Eigen::MatrixXd X;
  Eigen::VectorXd y;

  Eigen::Index size() const noexcept { return y.size(); }
  Eigen::Index input_dim() const noexcept { return X.cols(); }

  void validate(Eigen::Index expected_dim) const {
    if (X.rows() != y.size()) throw DomainError("design matrix and target lengths differ");
    if (X.rows() > 0 && X.cols() != expected_dim) throw DomainError("input dimension differs from the model");
  }
};

}  // namespace sabvi
