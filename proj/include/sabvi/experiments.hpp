#pragma once

// Experiment harnesses: the synthetic outlier regression benchmark (Bayesian
// linear regression trained under several divergence settings) and nested
// cross-validated grid search over (alpha, beta) for Bayesian neural
// networks on a tabular dataset.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "sabvi/dataset.hpp"
#include "sabvi/error.hpp"
#include "sabvi/mean_field.hpp"
#include "sabvi/models/blr.hpp"
#include "sabvi/models/bnn.hpp"
#include "sabvi/optim.hpp"
#include "sabvi/params.hpp"
#include "sabvi/predict.hpp"
#include "sabvi/rng.hpp"
#include "sabvi/vi.hpp"

namespace sabvi {

/// Sample mean and standard deviation (n - 1 denominator; 0 for n < 2).
struct MeanStd {
  double mean = 0.0;
  double std = 0.0;
  std::size_t count = 0;
};

inline MeanStd mean_std(const std::vector<double>& v) {
  MeanStd r;
  r.count = v.size();
  if (v.empty()) return {std::numeric_limits<double>::quiet_NaN(), std::numeric_limits<double>::quiet_NaN(), 0};
  for (double x : v) r.mean += x;
  r.mean /= static_cast<double>(v.size());
  if (v.size() > 1) {
    double s = 0.0;
    for (double x : v) s += (x - r.mean) * (x - r.mean);
    r.std = std::sqrt(s / static_cast<double>(v.size() - 1));
  }
  return r;
}

/// Runs task(i) for i in [0, n) on `workers` threads. Each task writes only
/// its own output slot, so results do not depend on scheduling. The first
/// exception (lowest index) is rethrown after all workers finish.
inline void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& task) {
  if (workers <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) task(i);
    return;
  }
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto body = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        task(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  std::vector<std::jthread> pool;
  const auto count = std::min<std::size_t>(static_cast<std::size_t>(workers), n);
  for (std::size_t w = 0; w < count; ++w) pool.emplace_back(body);
  pool.clear();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

// ---------------------------------------------------------------------------
// Synthetic outlier regression
// ---------------------------------------------------------------------------

/// A training objective in the (lambda, beta) convention; (1, 0) is KL.
struct ToySetting {
  double lambda = 1.0;
  double beta = 0.0;

  DivergenceParams params() const { return DivergenceParams::from_lambda_beta(lambda, beta); }
};

struct ToyConfig {
  Eigen::Index n_train = 1000;
  Eigen::Index input_dim = 4;
  double p_outliers = 0.05;
  Eigen::Index n_test = 1000;
  double prior_w_sigma = 1.0;
  double prior_b_sigma = 1.0;
  double noise_sigma = 0.1;
  int mc_samples = 5;
  AdamConfig opt{};
  int workers = 1;

  void validate() const {
    if (n_train < 1 || n_test < 1 || input_dim < 1) throw ConfigError("toy sizes must be at least 1");
    if (!(p_outliers >= 0.0 && p_outliers < 1.0)) throw ConfigError("outlier fraction must lie in [0, 1)");
    if (mc_samples < 1) throw ConfigError("the number of Monte Carlo samples K must be at least 1");
    if (workers < 1) throw ConfigError("workers must be at least 1");
    opt.validate();
  }
};

struct ToyRun {
  std::uint64_t seed = 0;
  Metrics test;
  TrainReport report;
};

struct ToyRow {
  ToySetting setting;
  double alpha = 0.0;
  MeanStd mae;
  MeanStd mse;
  std::vector<ToyRun> runs;  // one per seed, in seed order
};

struct ToyTable {
  ToyConfig config;
  std::vector<std::uint64_t> seeds;
  std::vector<ToyRow> rows;  // one per setting, in input order
};

/// A training failure annotated with the experiment cell that produced it.
class ExperimentAborted : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

// Seed tags under one experiment seed.
inline constexpr std::uint64_t kTagTrainData = 1;
inline constexpr std::uint64_t kTagTestData = 2;
inline constexpr std::uint64_t kTagTrainNoise = 3;

/// Throws ConfigError for any setting the Monte Carlo objective cannot train
/// (an exact limit other than the KL point).
inline void validate_toy_settings(const std::vector<ToySetting>& settings) {
  for (const auto& s : settings) {
    const DivergenceParams p = s.params();
    if (!is_kl_point(p) && classify_region(p) != Region::Generic)
      throw ConfigError("setting (lambda=" + std::to_string(s.lambda) + ", beta=" + std::to_string(s.beta) +
                        ") is an exact limit; the Monte Carlo objective needs the generic region or (1, 0)");
  }
}

/// Trains Bayesian linear regression on a corrupted synthetic set for every
/// (setting, seed) pair and scores the posterior-mean predictor on a fresh
/// clean test set. All settings share the same data and noise streams per
/// seed, so comparisons between settings are paired.
inline ToyTable run_toy_experiment(const std::vector<ToySetting>& settings, const std::vector<std::uint64_t>& seeds,
                                   const ToyConfig& config) {
  config.validate();
  if (settings.empty() || seeds.empty()) throw ConfigError("toy experiment needs at least one setting and one seed");
  validate_toy_settings(settings);

  ToyTable table;
  table.config = config;
  table.seeds = seeds;
  table.rows.resize(settings.size());
  for (std::size_t i = 0; i < settings.size(); ++i) {
    table.rows[i].setting = settings[i];
    table.rows[i].alpha = settings[i].params().alpha();
    table.rows[i].runs.resize(seeds.size());
  }

  const BLRModel model(config.input_dim, config.prior_w_sigma, config.prior_b_sigma, config.noise_sigma);
  parallel_for(settings.size() * seeds.size(), config.workers, [&](std::size_t task) {
    const std::size_t si = task / seeds.size();
    const std::size_t ki = task % seeds.size();
    const std::uint64_t seed = seeds[ki];
    const Dataset train_set = gen_toy(config.n_train, config.input_dim, config.p_outliers, derive_seed(seed, kTagTrainData));
    const Dataset test_set = gen_toy(config.n_test, config.input_dim, 0.0, derive_seed(seed, kTagTestData));
    MCConfig mc;
    mc.K = config.mc_samples;
    mc.seed = derive_seed(seed, kTagTrainNoise);
    ToyRun& run = table.rows[si].runs[ki];
    run.seed = seed;
    try {
      run.report = train(settings[si].params(), MeanFieldGaussian::standard_init(model.dim()), model,
                         train_set.regression(), mc, config.opt);
    } catch (const TrainAborted& e) {
      throw ExperimentAborted("training aborted for setting (lambda=" + std::to_string(settings[si].lambda) +
                              ", beta=" + std::to_string(settings[si].beta) + "), seed " + std::to_string(seed) +
                              ": " + e.what());
    }
    // For a linear model the predictive mean is the prediction at the mean.
    run.test = metrics(test_set.y, model.predict(run.report.final.mu, test_set.X));
  });

  for (auto& row : table.rows) {
    std::vector<double> mae, mse;
    for (const auto& r : row.runs) {
      mae.push_back(r.test.mae);
      mse.push_back(r.test.mse);
    }
    row.mae = mean_std(mae);
    row.mse = mean_std(mse);
  }
  return table;
}

// ---------------------------------------------------------------------------
// Nested cross-validated grid search
// ---------------------------------------------------------------------------

struct GridSearchSpec {
  double alpha_min = -0.5;
  double alpha_max = 2.5;
  double beta_min = -1.5;
  double beta_max = 1.5;
  double step = 0.25;
  // The (1, 0) cell is trained through the KL path; every other cell with
  // alpha = 0, beta = 0 or alpha + beta = 0 is excluded.
  bool include_kl = true;

  void validate() const {
    if (!(step > 0.0) || !std::isfinite(step)) throw ConfigError("grid step must be positive");
    if (!(alpha_min <= alpha_max) || !(beta_min <= beta_max)) throw ConfigError("grid ranges must be ordered");
    if (!std::isfinite(alpha_min) || !std::isfinite(alpha_max) || !std::isfinite(beta_min) || !std::isfinite(beta_max))
      throw ConfigError("grid ranges must be finite");
  }

  /// Grid values lo + i*step up to hi, with values within 1e-9 of a
  /// multiple of 1e-9 snapped so that zero and one are hit exactly.
  static std::vector<double> axis(double lo, double hi, double step) {
    std::vector<double> v;
    const auto n = static_cast<long>(std::floor((hi - lo) / step + 1e-9));
    for (long i = 0; i <= n; ++i) v.push_back(std::round((lo + static_cast<double>(i) * step) * 1e9) / 1e9);
    return v;
  }

  /// Cells in row-major (alpha outer, beta inner) order.
  std::vector<DivergenceParams> cells() const {
    validate();
    std::vector<DivergenceParams> out;
    for (double a : axis(alpha_min, alpha_max, step)) {
      for (double b : axis(beta_min, beta_max, step)) {
        const DivergenceParams p(a, b);
        if (is_kl_point(p)) {
          if (include_kl) out.push_back(p);
          continue;
        }
        if (classify_region(p) == Region::Generic) out.push_back(p);
      }
    }
    if (out.empty()) throw ConfigError("the grid contains no trainable cell");
    return out;
  }
};

struct CVConfig {
  int outer_folds = 5;   // K1
  int inner_folds = 2;   // K2
  std::vector<int> hidden_layers{10};
  double prior_sigma = 1.0;
  double noise_sigma = 0.1;
  bool learn_noise = false;
  int mc_samples = 10;
  AdamConfig opt{0.01, 0.9, 0.999, 1e-8, 300};
  int predictive_draws = 50;
  double p_outliers = 0.10;
  // Inner validation and outer test use the uncorrupted targets; only the
  // targets a model is fitted on carry outliers.
  bool clean_validation = true;
  int workers = 1;

  void validate() const {
    if (outer_folds < 2 || inner_folds < 2) throw ConfigError("nested CV needs at least two outer and two inner folds");
    if (hidden_layers.empty()) throw ConfigError("the network needs at least one hidden layer");
    for (int h : hidden_layers)
      if (h < 1) throw ConfigError("hidden layer sizes must be at least 1");
    if (!(prior_sigma > 0.0) || !(noise_sigma > 0.0)) throw ConfigError("prior and noise scales must be positive");
    if (mc_samples < 1) throw ConfigError("the number of Monte Carlo samples K must be at least 1");
    if (predictive_draws < 1) throw ConfigError("predictive draws must be at least 1");
    if (!(p_outliers >= 0.0 && p_outliers < 1.0)) throw ConfigError("outlier fraction must lie in [0, 1)");
    if (workers < 1) throw ConfigError("workers must be at least 1");
    opt.validate();
  }

  BNNConfig network(Eigen::Index input_dim) const {
    BNNConfig c;
    c.layer_sizes.push_back(static_cast<int>(input_dim));
    c.layer_sizes.insert(c.layer_sizes.end(), hidden_layers.begin(), hidden_layers.end());
    c.layer_sizes.push_back(1);
    c.prior_sigma = prior_sigma;
    c.noise_sigma = noise_sigma;
    c.learn_noise = learn_noise;
    return c;
  }
};

struct CellSummary {
  double alpha = 0.0;
  double beta = 0.0;
  MeanStd validation_rmse;  // over every successful (outer, inner) fit
  int failures = 0;
  bool excluded_somewhere = false;
};

struct OuterFoldResult {
  int fold = 0;
  std::size_t train_size = 0;
  std::size_t test_size = 0;
  double selected_alpha = 0.0;
  double selected_beta = 0.0;
  double selected_validation_rmse = 0.0;
  double test_rmse = 0.0;
  double kl_test_rmse = 0.0;
};

struct CVReport {
  GridSearchSpec grid;
  CVConfig config;
  std::uint64_t seed = 0;
  std::vector<CellSummary> cells;  // in GridSearchSpec::cells() order
  std::vector<OuterFoldResult> folds;
  double selected_alpha = 0.0;  // most frequent selection (ties toward KL)
  double selected_beta = 0.0;
  MeanStd test_rmse;
  MeanStd kl_test_rmse;
  std::vector<std::string> warnings;
};

namespace detail {

inline double distance_to_kl(double a, double b) { return std::abs(a - 1.0) + std::abs(b); }

// Seed tags under the CV seed.
inline constexpr std::uint64_t kTagOuterFolds = 11;
inline constexpr std::uint64_t kTagCorrupt = 12;
inline constexpr std::uint64_t kTagInnerFolds = 13;
inline constexpr std::uint64_t kTagFit = 14;
inline constexpr std::uint64_t kTagInit = 15;
inline constexpr std::uint64_t kTagPredict = 16;

// Starting point for a network: mu ~ N(0, 0.1^2) to break the symmetry
// between hidden units, sigma = 0.1.
inline MeanFieldGaussian network_init(Eigen::Index dim, std::uint64_t seed) {
  MeanFieldGaussian q = MeanFieldGaussian::standard_init(dim);
  CounterRng rng(seed, 0);
  for (Eigen::Index i = 0; i < dim; ++i) q.mu[i] = 0.1 * rng.normal();
  return q;
}

struct FitOutcome {
  bool ok = false;
  double rmse = std::numeric_limits<double>::quiet_NaN();
  std::string error;
};

// Trains on (X, y_fit) and scores the predictive mean against y_score.
inline FitOutcome fit_and_score(const DivergenceParams& params, const BNNModel& model, const Dataset& fit_set,
                                const Dataset& score_set, const CVConfig& config, std::uint64_t seed) {
  FitOutcome out;
  try {
    MCConfig mc;
    mc.K = config.mc_samples;
    mc.seed = derive_seed(seed, kTagFit);
    const TrainReport r = train(params, network_init(model.dim(), derive_seed(seed, kTagInit)), model,
                                fit_set.regression(), mc, config.opt);
    const PredictiveSummary pred =
        predict(r.final, model, score_set.X, config.predictive_draws, derive_seed(seed, kTagPredict));
    if (!pred.mean.allFinite()) throw NumericalError("non-finite predictions");
    out.rmse = metrics(score_set.y, pred.mean).rmse;
    out.ok = true;
  } catch (const NumericalError& e) {
    out.error = e.what();
  } catch (const ModelError& e) {
    out.error = e.what();
  }
  return out;
}

}  // namespace detail

/// Nested cross-validation. For every outer fold: standardize with the
/// outer-train statistics, corrupt the outer-train targets, grid-search
/// (alpha, beta) by mean inner-validation RMSE, retrain the winner on the
/// whole outer-train split and score it on the outer test fold. The KL cell
/// is always retrained as well, to serve as the reference.
inline CVReport nested_cv(const Dataset& raw, const GridSearchSpec& grid, const CVConfig& config, std::uint64_t seed) {
  grid.validate();
  config.validate();
  if (raw.normalized) throw DataError("nested CV expects raw-scale data; it standardizes each outer fold itself");
  const int K1 = config.outer_folds;
  const int K2 = config.inner_folds;
  if (raw.size() < static_cast<Eigen::Index>(K1) * K2)
    throw DataError("nested CV needs at least K1*K2 = " + std::to_string(K1 * K2) + " rows");

  const std::vector<DivergenceParams> cells = grid.cells();
  const DivergenceParams kl(1.0, 0.0);
  const BNNModel model(config.network(raw.input_dim()));

  CVReport report;
  report.grid = grid;
  report.config = config;
  report.seed = seed;

  // Per outer fold: normalized clean splits and the corrupted training split.
  struct OuterData {
    Dataset train_clean;
    Dataset train_fit;
    Dataset test;
    std::vector<int> inner;
  };
  const std::vector<int> outer = kfold_assignment(raw.size(), K1, derive_seed(seed, detail::kTagOuterFolds), 0);
  std::vector<OuterData> od(static_cast<std::size_t>(K1));
  for (int k = 0; k < K1; ++k) {
    const Dataset tr = raw.subset(fold_rows(outer, k, true));
    const Dataset te = raw.subset(fold_rows(outer, k, false));
    const NormalizationStats stats = fit_normalization(tr);
    OuterData& d = od[static_cast<std::size_t>(k)];
    d.train_clean = apply_normalization(tr, stats);
    d.test = apply_normalization(te, stats);
    d.train_fit = corrupt(d.train_clean, config.p_outliers, derive_seed(seed, detail::kTagCorrupt + 100 * k));
    d.inner = kfold_assignment(d.train_clean.size(), K2, derive_seed(seed, detail::kTagInnerFolds + 100 * k), 0);
  }

  // Inner grid: one task per (outer fold, cell, inner fold).
  const std::size_t n_cells = cells.size();
  const std::size_t per_outer = n_cells * static_cast<std::size_t>(K2);
  std::vector<detail::FitOutcome> inner(static_cast<std::size_t>(K1) * per_outer);
  parallel_for(inner.size(), config.workers, [&](std::size_t t) {
    const int k = static_cast<int>(t / per_outer);
    const std::size_t c = (t % per_outer) / static_cast<std::size_t>(K2);
    const int j = static_cast<int>(t % static_cast<std::size_t>(K2));
    const OuterData& d = od[static_cast<std::size_t>(k)];
    const auto fit_rows = fold_rows(d.inner, j, true);
    const auto val_rows = fold_rows(d.inner, j, false);
    const Dataset& val_source = config.clean_validation ? d.train_clean : d.train_fit;
    // Cells fitted on the same inner split share noise streams (paired).
    const std::uint64_t task_seed = derive_seed(seed, 1000000 + static_cast<std::uint64_t>(k * K2 + j));
    inner[t] = detail::fit_and_score(cells[c], model, d.train_fit.subset(fit_rows), val_source.subset(val_rows),
                                     config, task_seed);
  });

  // Selection per outer fold.
  std::vector<std::size_t> chosen(static_cast<std::size_t>(K1));
  std::vector<double> chosen_rmse(static_cast<std::size_t>(K1));
  report.cells.resize(n_cells);
  std::vector<std::vector<double>> cell_values(n_cells);
  for (std::size_t c = 0; c < n_cells; ++c) {
    report.cells[c].alpha = cells[c].alpha();
    report.cells[c].beta = cells[c].beta();
  }
  for (int k = 0; k < K1; ++k) {
    std::optional<std::size_t> best;
    double best_val = 0.0;
    for (std::size_t c = 0; c < n_cells; ++c) {
      std::vector<double> vals;
      int failures = 0;
      for (int j = 0; j < K2; ++j) {
        const auto& o = inner[static_cast<std::size_t>(k) * per_outer + c * static_cast<std::size_t>(K2) +
                              static_cast<std::size_t>(j)];
        if (o.ok) {
          vals.push_back(o.rmse);
          cell_values[c].push_back(o.rmse);
        } else {
          ++failures;
          report.warnings.push_back("outer fold " + std::to_string(k) + ", cell (alpha=" +
                                    std::to_string(cells[c].alpha()) + ", beta=" + std::to_string(cells[c].beta()) +
                                    "), inner fold " + std::to_string(j) + ": " + o.error);
        }
      }
      report.cells[c].failures += failures;
      if (2 * failures > K2) {
        report.cells[c].excluded_somewhere = true;
        report.warnings.push_back("outer fold " + std::to_string(k) + ": cell (alpha=" +
                                  std::to_string(cells[c].alpha()) + ", beta=" + std::to_string(cells[c].beta()) +
                                  ") excluded after failing on " + std::to_string(failures) + " of " +
                                  std::to_string(K2) + " inner folds");
        continue;
      }
      const double v = mean_std(vals).mean;
      const auto better = [&] {
        if (!best) return true;
        if (v < best_val - 1e-12) return true;
        if (v > best_val + 1e-12) return false;
        return detail::distance_to_kl(cells[c].alpha(), cells[c].beta()) <
               detail::distance_to_kl(cells[*best].alpha(), cells[*best].beta());
      };
      if (better()) {
        best = c;
        best_val = v;
      }
    }
    if (!best) throw ExperimentAborted("outer fold " + std::to_string(k) + ": every grid cell failed");
    chosen[static_cast<std::size_t>(k)] = *best;
    chosen_rmse[static_cast<std::size_t>(k)] = best_val;
  }
  for (std::size_t c = 0; c < n_cells; ++c) report.cells[c].validation_rmse = mean_std(cell_values[c]);

  // Outer refits: the selected cell and the KL reference for each fold.
  std::vector<detail::FitOutcome> outer_fit(static_cast<std::size_t>(2 * K1));
  parallel_for(outer_fit.size(), config.workers, [&](std::size_t t) {
    const auto k = t / 2;
    const DivergenceParams& p = (t % 2 == 0) ? cells[chosen[k]] : kl;
    const std::uint64_t task_seed = derive_seed(seed, 2000000 + k);  // shared by both fits of the fold
    outer_fit[t] = detail::fit_and_score(p, model, od[k].train_fit, od[k].test, config, task_seed);
  });

  std::vector<double> test, kl_test;
  for (int k = 0; k < K1; ++k) {
    const auto ks = static_cast<std::size_t>(k);
    for (int which = 0; which < 2; ++which)
      if (!outer_fit[2 * ks + static_cast<std::size_t>(which)].ok)
        throw ExperimentAborted("outer fold " + std::to_string(k) + ": " + (which == 0 ? "selected" : "KL") +
                                " refit failed: " + outer_fit[2 * ks + static_cast<std::size_t>(which)].error);
    OuterFoldResult r;
    r.fold = k;
    r.train_size = static_cast<std::size_t>(od[ks].train_fit.size());
    r.test_size = static_cast<std::size_t>(od[ks].test.size());
    r.selected_alpha = cells[chosen[ks]].alpha();
    r.selected_beta = cells[chosen[ks]].beta();
    r.selected_validation_rmse = chosen_rmse[ks];
    r.test_rmse = outer_fit[2 * ks].rmse;
    r.kl_test_rmse = outer_fit[2 * ks + 1].rmse;
    test.push_back(r.test_rmse);
    kl_test.push_back(r.kl_test_rmse);
    report.folds.push_back(r);
  }
  report.test_rmse = mean_std(test);
  report.kl_test_rmse = mean_std(kl_test);

  // Overall selection: the most frequently chosen cell, ties toward KL.
  std::map<std::size_t, int> votes;
  for (auto c : chosen) ++votes[c];
  std::size_t winner = chosen.front();
  for (const auto& [c, n] : votes) {
    const int wn = votes[winner];
    if (n > wn || (n == wn && detail::distance_to_kl(cells[c].alpha(), cells[c].beta()) <
                                  detail::distance_to_kl(cells[winner].alpha(), cells[winner].beta())))
      winner = c;
  }
  report.selected_alpha = cells[winner].alpha();
  report.selected_beta = cells[winner].beta();
  return report;
}

}  // namespace sabvi
