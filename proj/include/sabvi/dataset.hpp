#pragma once

// Regression datasets: the synthetic linear task with outliers, CSV
// ingestion, standardization, target corruption and error metrics.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "sabvi/error.hpp"
#include "sabvi/models/regression_data.hpp"
#include "sabvi/rng.hpp"

namespace sabvi {

struct Dataset {
  Eigen::MatrixXd X;
  Eigen::VectorXd y;
  // Statistics of the standardization applied to X and y (identity when the
  // data are on their raw scale).
  Eigen::VectorXd feature_means;
  Eigen::VectorXd feature_stds;
  double y_mean = 0.0;
  double y_std = 1.0;
  bool normalized = false;
  std::vector<bool> outlier_mask;
  std::vector<std::string> feature_names;
  std::string target_name = "y";

  Eigen::Index size() const noexcept { return y.size(); }
  Eigen::Index input_dim() const noexcept { return X.cols(); }
  RegressionData regression() const { return {X, y}; }

  std::size_t outlier_count() const {
    return static_cast<std::size_t>(std::count(outlier_mask.begin(), outlier_mask.end(), true));
  }

  /// Rows `idx` in the given order; statistics and names carried over.
  Dataset subset(const std::vector<Eigen::Index>& idx) const {
    Dataset d = *this;
    d.X.resize(static_cast<Eigen::Index>(idx.size()), X.cols());
    d.y.resize(static_cast<Eigen::Index>(idx.size()));
    d.outlier_mask.assign(idx.size(), false);
    for (std::size_t i = 0; i < idx.size(); ++i) {
      d.X.row(static_cast<Eigen::Index>(i)) = X.row(idx[i]);
      d.y[static_cast<Eigen::Index>(i)] = y[idx[i]];
      d.outlier_mask[i] = outlier_mask[static_cast<std::size_t>(idx[i])];
    }
    return d;
  }

  /// Maps standardized targets back to the raw scale.
  Eigen::VectorXd denormalize_y(const Eigen::VectorXd& v) const { return (v.array() * y_std + y_mean).matrix(); }
};

namespace detail {

inline Dataset raw_dataset(Eigen::MatrixXd X, Eigen::VectorXd y) {
  Dataset d;
  const Eigen::Index D = X.cols();
  d.X = std::move(X);
  d.y = std::move(y);
  d.feature_means = Eigen::VectorXd::Zero(D);
  d.feature_stds = Eigen::VectorXd::Ones(D);
  d.outlier_mask.assign(static_cast<std::size_t>(d.y.size()), false);
  for (Eigen::Index j = 0; j < D; ++j) d.feature_names.push_back("x" + std::to_string(j + 1));
  return d;
}

// Fisher-Yates prefix: the first `count` entries of a uniform random
// permutation of `pool`.
inline std::vector<Eigen::Index> sample_without_replacement(std::vector<Eigen::Index> pool, std::size_t count,
                                                            CounterRng& rng) {
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.below(pool.size() - i));
    std::swap(pool[i], pool[j]);
  }
  pool.resize(count);
  return pool;
}

inline std::size_t outlier_count(double p, Eigen::Index n) {
  return static_cast<std::size_t>(std::llround(p * static_cast<double>(n)));
}

}  // namespace detail

// Streams of the synthetic generator under one seed.
inline constexpr std::uint64_t kStreamToyInputs = 1;
inline constexpr std::uint64_t kStreamToyNoise = 2;
inline constexpr std::uint64_t kStreamToyOutliers = 3;
inline constexpr std::uint64_t kStreamCorrupt = 4;

/// Synthetic linear regression with w = (1/2, ..., 1/2):
/// clean rows x ~ U[-1, 1]^D, y = w.x + N(0, 0.1^2); round(p N) corrupted rows
/// x ~ N(0, 0.2^2) per coordinate, y = 5 + w.x + N(0, 0.1^2).
inline Dataset gen_toy(Eigen::Index N, Eigen::Index D, double p_outliers, std::uint64_t seed) {
  if (N < 1 || D < 1) throw ConfigError("toy data needs N >= 1 and D >= 1");
  if (!(p_outliers >= 0.0 && p_outliers < 1.0)) throw ConfigError("outlier fraction must lie in [0, 1)");
  CounterRng pick(seed, kStreamToyOutliers);
  std::vector<Eigen::Index> all(static_cast<std::size_t>(N));
  std::iota(all.begin(), all.end(), Eigen::Index{0});
  const auto corrupted = detail::sample_without_replacement(all, detail::outlier_count(p_outliers, N), pick);
  std::vector<bool> mask(static_cast<std::size_t>(N), false);
  for (auto i : corrupted) mask[static_cast<std::size_t>(i)] = true;

  CounterRng inputs(seed, kStreamToyInputs);
  CounterRng noise(seed, kStreamToyNoise);
  Eigen::MatrixXd X(N, D);
  Eigen::VectorXd y(N);
  for (Eigen::Index n = 0; n < N; ++n) {
    const bool out = mask[static_cast<std::size_t>(n)];
    for (Eigen::Index j = 0; j < D; ++j) X(n, j) = out ? 0.2 * inputs.normal() : 2.0 * inputs.uniform() - 1.0;
    y[n] = 0.5 * X.row(n).sum() + 0.1 * noise.normal() + (out ? 5.0 : 0.0);
  }
  Dataset d = detail::raw_dataset(std::move(X), std::move(y));
  d.outlier_mask = std::move(mask);
  return d;
}

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  bool quoted = false;
  for (char c : line) {
    if (c == '"') {
      quoted = !quoted;
    } else if (c == ',' && !quoted) {
      out.push_back(cell);
      cell.clear();
    } else if (c != '\r') {
      cell.push_back(c);
    }
  }
  out.push_back(cell);
  return out;
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
  return s;
}

}  // namespace detail

/// Reads a numeric CSV with a header row. `target_column` names the target;
/// every other column is a feature. Errors report the 1-based line and
/// column of the offending cell.
inline Dataset load_csv(const std::string& path, const std::string& target_column) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open CSV file '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw ConfigError(path + ": empty file, expected a header row");
  std::vector<std::string> header = detail::split_csv_line(line);
  for (auto& h : header) h = std::string(detail::trim(h));
  std::size_t target = header.size();
  for (std::size_t j = 0; j < header.size(); ++j)
    if (header[j] == target_column) target = j;
  if (target == header.size()) throw ConfigError(path + ": no column named '" + target_column + "'");

  std::vector<std::vector<double>> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    const auto cells = detail::split_csv_line(line);
    if (cells.size() != header.size())
      throw ConfigError(path + ":" + std::to_string(line_no) + ": expected " + std::to_string(header.size()) +
                        " columns, found " + std::to_string(cells.size()));
    std::vector<double> row(cells.size());
    for (std::size_t j = 0; j < cells.size(); ++j) {
      const std::string_view c = detail::trim(cells[j]);
      const auto res = std::from_chars(c.data(), c.data() + c.size(), row[j]);
      if (c.empty() || res.ec != std::errc{} || res.ptr != c.data() + c.size() || !std::isfinite(row[j]))
        throw ConfigError(path + ":" + std::to_string(line_no) + ": column " + std::to_string(j + 1) + " ('" +
                          header[j] + "'): non-numeric value '" + std::string(c) + "'");
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw ConfigError(path + ": no data rows");

  const auto n = static_cast<Eigen::Index>(rows.size());
  const auto D = static_cast<Eigen::Index>(header.size() - 1);
  Eigen::MatrixXd X(n, D);
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    Eigen::Index k = 0;
    for (std::size_t j = 0; j < header.size(); ++j) {
      if (j == target)
        y[i] = rows[static_cast<std::size_t>(i)][j];
      else
        X(i, k++) = rows[static_cast<std::size_t>(i)][j];
    }
  }
  Dataset d = detail::raw_dataset(std::move(X), std::move(y));
  d.feature_names.clear();
  for (std::size_t j = 0; j < header.size(); ++j)
    if (j != target) d.feature_names.push_back(header[j]);
  d.target_name = header[target];
  return d;
}

struct NormalizationStats {
  Eigen::VectorXd feature_means;
  Eigen::VectorXd feature_stds;
  double y_mean = 0.0;
  double y_std = 1.0;
};

/// Means and population standard deviations of every column of a
/// raw-scale dataset.
inline NormalizationStats fit_normalization(const Dataset& d) {
  if (d.normalized) throw DataError("dataset is already normalized");
  if (d.size() < 2) throw DataError("normalization needs at least two rows");
  const double n = static_cast<double>(d.size());
  NormalizationStats s;
  s.feature_means = d.X.colwise().mean().transpose();
  s.feature_stds = ((d.X.rowwise() - s.feature_means.transpose()).array().square().colwise().sum() / n).sqrt().transpose();
  for (Eigen::Index j = 0; j < s.feature_stds.size(); ++j)
    if (!(s.feature_stds[j] > 0.0))
      throw DataError("zero variance feature '" + d.feature_names.at(static_cast<std::size_t>(j)) + "'");
  s.y_mean = d.y.mean();
  s.y_std = std::sqrt((d.y.array() - s.y_mean).square().sum() / n);
  if (!(s.y_std > 0.0)) throw DataError("zero variance target '" + d.target_name + "'");
  return s;
}

/// Standardizes with given statistics (e.g. those of a training split).
inline Dataset apply_normalization(const Dataset& d, const NormalizationStats& s) {
  if (d.normalized) throw DataError("dataset is already normalized");
  Dataset out = d;
  out.X = ((d.X.rowwise() - s.feature_means.transpose()).array().rowwise() / s.feature_stds.transpose().array()).matrix();
  out.y = ((d.y.array() - s.y_mean) / s.y_std).matrix();
  out.feature_means = s.feature_means;
  out.feature_stds = s.feature_stds;
  out.y_mean = s.y_mean;
  out.y_std = s.y_std;
  out.normalized = true;
  return out;
}

/// Zero mean, unit (population) variance for every feature and the target.
inline Dataset normalize(const Dataset& d) { return apply_normalization(d, fit_normalization(d)); }

/// Adds +5 to the standardized target of round(p N) rows drawn uniformly
/// without replacement from the rows not yet marked as outliers.
inline Dataset corrupt(const Dataset& d, double p, std::uint64_t seed) {
  if (!d.normalized) throw DataError("corruption is defined on normalized targets; normalize first");
  if (!(p >= 0.0 && p < 1.0)) throw ConfigError("outlier fraction must lie in [0, 1)");
  const std::size_t count = detail::outlier_count(p, d.size());
  std::vector<Eigen::Index> pool;
  for (Eigen::Index i = 0; i < d.size(); ++i)
    if (!d.outlier_mask[static_cast<std::size_t>(i)]) pool.push_back(i);
  if (count > pool.size()) throw DataError("not enough uncorrupted rows left to corrupt");
  CounterRng rng(seed, kStreamCorrupt);
  Dataset out = d;
  for (auto i : detail::sample_without_replacement(std::move(pool), count, rng)) {
    out.y[i] += 5.0;
    out.outlier_mask[static_cast<std::size_t>(i)] = true;
  }
  return out;
}

struct Metrics {
  double mae = 0.0;
  double mse = 0.0;
  double rmse = 0.0;
};

inline Metrics metrics(const Eigen::VectorXd& y_true, const Eigen::VectorXd& y_pred) {
  if (y_true.size() != y_pred.size()) throw DomainError("metric inputs have different lengths");
  if (y_true.size() < 1) throw DomainError("metrics need at least one value");
  const Eigen::ArrayXd e = (y_true - y_pred).array();
  Metrics m;
  m.mae = e.abs().mean();
  m.mse = e.square().mean();
  m.rmse = std::sqrt(m.mse);
  return m;
}

/// Fold id in [0, K) for each of n rows: a seeded permutation dealt
/// round-robin, so fold sizes differ by at most one.
inline std::vector<int> kfold_assignment(Eigen::Index n, int K, std::uint64_t seed, std::uint64_t stream) {
  if (K < 2) throw ConfigError("cross-validation needs at least two folds");
  if (n < K) throw DataError("fewer rows than folds");
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), Eigen::Index{0});
  CounterRng rng(seed, stream);
  const auto perm = detail::sample_without_replacement(std::move(idx), static_cast<std::size_t>(n), rng);
  std::vector<int> fold(static_cast<std::size_t>(n));
  for (std::size_t i = 0; i < perm.size(); ++i) fold[static_cast<std::size_t>(perm[i])] = static_cast<int>(i % K);
  return fold;
}

/// Row indices with fold == k (or != k when `complement`).
inline std::vector<Eigen::Index> fold_rows(const std::vector<int>& fold, int k, bool complement) {
  std::vector<Eigen::Index> out;
  for (std::size_t i = 0; i < fold.size(); ++i)
    if ((fold[i] == k) != complement) out.push_back(static_cast<Eigen::Index>(i));
  return out;
}

}  // namespace sabvi
