#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <numeric>
#include <set>
#include <string>

#include "sabvi/dataset.hpp"
#include "sabvi/experiments.hpp"

namespace sabvi {
namespace {

const std::string kDataDir = SABVI_TEST_DATA_DIR;

std::string write_temp(const std::string& name, const std::string& content) {
  const auto path = std::filesystem::temp_directory_path() / ("sabvi_test_" + name);
  std::ofstream(path) << content;
  return path.string();
}

Eigen::VectorXd residuals(const Dataset& d) { return d.y - 0.5 * d.X.rowwise().sum(); }

// ---------------------------------------------------------------------------
// Synthetic data
// ---------------------------------------------------------------------------

TEST(GenToy, OutlierCountIsRounded) {
  EXPECT_EQ(gen_toy(1000, 4, 0.05, 1).outlier_count(), 50u);
  EXPECT_EQ(gen_toy(30, 2, 0.05, 1).outlier_count(), 2u);  // round(1.5) = 2
  EXPECT_EQ(gen_toy(10, 2, 0.0, 1).outlier_count(), 0u);
}

TEST(GenToy, CleanResidualsAreCenteredNoise) {
  const Dataset d = gen_toy(1000, 4, 0.0, 7);
  const Eigen::VectorXd r = residuals(d);
  EXPECT_LT(std::abs(r.mean()), 0.02);
  const double sd = std::sqrt((r.array() - r.mean()).square().mean());
  EXPECT_NEAR(sd, 0.1, 0.01);
  EXPECT_LE(d.X.maxCoeff(), 1.0);
  EXPECT_GE(d.X.minCoeff(), -1.0);
}

TEST(GenToy, CorruptedRowsAreShiftedByFive) {
  const Dataset d = gen_toy(1000, 4, 0.05, 3);
  const Eigen::VectorXd r = residuals(d);
  double sum = 0.0;
  std::vector<double> xs;
  for (Eigen::Index i = 0; i < d.size(); ++i) {
    if (!d.outlier_mask[static_cast<std::size_t>(i)]) continue;
    sum += r[i];
    for (Eigen::Index j = 0; j < d.input_dim(); ++j) xs.push_back(d.X(i, j));
  }
  EXPECT_NEAR(sum / 50.0, 5.0, 0.1);
  const double sd = std::sqrt(std::inner_product(xs.begin(), xs.end(), xs.begin(), 0.0) / xs.size());
  EXPECT_NEAR(sd, 0.2, 0.03);
}

TEST(GenToy, DeterministicGivenSeed) {
  const Dataset a = gen_toy(200, 3, 0.1, 42);
  const Dataset b = gen_toy(200, 3, 0.1, 42);
  const Dataset c = gen_toy(200, 3, 0.1, 43);
  EXPECT_EQ(a.X, b.X);
  EXPECT_EQ(a.y, b.y);
  EXPECT_EQ(a.outlier_mask, b.outlier_mask);
  EXPECT_NE(a.y, c.y);
}

TEST(GenToy, RejectsBadArguments) {
  EXPECT_THROW(gen_toy(0, 1, 0.0, 1), ConfigError);
  EXPECT_THROW(gen_toy(10, 0, 0.0, 1), ConfigError);
  EXPECT_THROW(gen_toy(10, 1, 1.0, 1), ConfigError);
  EXPECT_THROW(gen_toy(10, 1, -0.1, 1), ConfigError);
}

// ---------------------------------------------------------------------------
// CSV and normalization
// ---------------------------------------------------------------------------

TEST(LoadCsv, ReadsBundledDataset) {
  const Dataset d = load_csv(kDataDir + "/diabetes_400.csv", "target");
  EXPECT_EQ(d.size(), 400);
  EXPECT_EQ(d.input_dim(), 10);
  EXPECT_EQ(d.feature_names.front(), "age");
  EXPECT_EQ(d.target_name, "target");
  EXPECT_DOUBLE_EQ(d.X(0, 0), 59.0);
  EXPECT_DOUBLE_EQ(d.y[0], 151.0);
  EXPECT_FALSE(d.normalized);
}

TEST(LoadCsv, TargetColumnMayBeAnywhere) {
  const auto path = write_temp("mid.csv", "a,y,b\n1,10,2\n3,20,5\n");
  const Dataset d = load_csv(path, "y");
  EXPECT_EQ(d.input_dim(), 2);
  EXPECT_EQ(d.feature_names, (std::vector<std::string>{"a", "b"}));
  EXPECT_DOUBLE_EQ(d.y[1], 20.0);
  EXPECT_DOUBLE_EQ(d.X(1, 1), 5.0);
}

TEST(LoadCsv, NonNumericCellReportsLocation) {
  const auto path = write_temp("bad.csv", "a,b,y\n1,2,3\n4,oops,6\n");
  try {
    load_csv(path, "y");
    FAIL() << "expected a parse error";
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find(":3:"), std::string::npos) << msg;
    EXPECT_NE(msg.find("column 2"), std::string::npos) << msg;
    EXPECT_NE(msg.find("oops"), std::string::npos) << msg;
  }
}

TEST(LoadCsv, MissingColumnAndRaggedRows) {
  const auto good = write_temp("good.csv", "a,y\n1,2\n3,4\n");
  EXPECT_THROW(load_csv(good, "target"), ConfigError);
  const auto ragged = write_temp("ragged.csv", "a,y\n1,2\n3\n");
  EXPECT_THROW(load_csv(ragged, "y"), ConfigError);
  const auto empty = write_temp("empty.csv", "");
  EXPECT_THROW(load_csv(empty, "y"), ConfigError);
  EXPECT_THROW(load_csv("/nonexistent/file.csv", "y"), ConfigError);
}

TEST(Normalize, ZeroVarianceFeatureIsNamed) {
  const auto path = write_temp("const.csv", "a,flat,y\n1,7,1\n2,7,3\n3,7,2\n");
  const Dataset d = load_csv(path, "y");
  try {
    normalize(d);
    FAIL() << "expected a zero-variance error";
  } catch (const DataError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("zero variance feature"), std::string::npos) << msg;
    EXPECT_NE(msg.find("flat"), std::string::npos) << msg;
  }
}

TEST(Normalize, StandardizesEveryColumn) {
  const Dataset n = normalize(load_csv(kDataDir + "/diabetes_400.csv", "target"));
  ASSERT_TRUE(n.normalized);
  for (Eigen::Index j = 0; j < n.input_dim(); ++j) {
    const Eigen::ArrayXd c = n.X.col(j).array();
    EXPECT_LT(std::abs(c.mean()), 1e-10);
    EXPECT_NEAR(std::sqrt((c - c.mean()).square().mean()), 1.0, 1e-10);
  }
  EXPECT_LT(std::abs(n.y.mean()), 1e-10);
  EXPECT_NEAR(std::sqrt((n.y.array() - n.y.mean()).square().mean()), 1.0, 1e-10);
}

TEST(Normalize, DenormalizeRoundTrips) {
  const Dataset raw = load_csv(kDataDir + "/diabetes_400.csv", "target");
  const Dataset n = normalize(raw);
  EXPECT_LT((n.denormalize_y(n.y) - raw.y).cwiseAbs().maxCoeff(), 1e-12 * raw.y.cwiseAbs().maxCoeff() + 1e-12);
  EXPECT_THROW(normalize(n), DataError);
}

TEST(Normalize, TrainStatisticsApplyToOtherSplits) {
  const Dataset raw = gen_toy(100, 2, 0.0, 5);
  std::vector<Eigen::Index> a, b;
  for (Eigen::Index i = 0; i < 100; ++i) (i < 70 ? a : b).push_back(i);
  const NormalizationStats s = fit_normalization(raw.subset(a));
  const Dataset tb = apply_normalization(raw.subset(b), s);
  EXPECT_NEAR(tb.X(0, 0), (raw.X(70, 0) - s.feature_means[0]) / s.feature_stds[0], 1e-15);
  EXPECT_NEAR(tb.y[0], (raw.y[70] - s.y_mean) / s.y_std, 1e-15);
}

// ---------------------------------------------------------------------------
// Corruption
// ---------------------------------------------------------------------------

TEST(Corrupt, ZeroFractionLeavesDataUnchanged) {
  const Dataset n = normalize(gen_toy(300, 2, 0.0, 1));
  const Dataset c = corrupt(n, 0.0, 9);
  EXPECT_EQ(c.y, n.y);
  EXPECT_EQ(c.outlier_count(), 0u);
}

TEST(Corrupt, ShiftsExactlyRoundPNByFive) {
  const Dataset n = normalize(gen_toy(300, 2, 0.0, 1));
  const Dataset c = corrupt(n, 0.10, 9);
  EXPECT_EQ(c.outlier_count(), 30u);
  int shifted = 0;
  for (Eigen::Index i = 0; i < n.size(); ++i) {
    const double d = c.y[i] - n.y[i];
    if (c.outlier_mask[static_cast<std::size_t>(i)]) {
      EXPECT_EQ(d, (n.y[i] + 5.0) - n.y[i]);
      ++shifted;
    } else {
      EXPECT_EQ(d, 0.0);
    }
  }
  EXPECT_EQ(shifted, 30);
}

TEST(Corrupt, RepeatedCorruptionNeverDoubleShifts) {
  const Dataset n = normalize(gen_toy(300, 2, 0.0, 1));
  const Dataset c = corrupt(corrupt(n, 0.10, 1), 0.10, 2);
  EXPECT_EQ(c.outlier_count(), 60u);
  for (Eigen::Index i = 0; i < n.size(); ++i) EXPECT_LT(c.y[i] - n.y[i], 5.0 + 1e-9);
}

TEST(Corrupt, RequiresNormalizedData) {
  EXPECT_THROW(corrupt(gen_toy(50, 1, 0.0, 1), 0.1, 1), DataError);
  EXPECT_THROW(corrupt(normalize(gen_toy(50, 1, 0.0, 1)), 1.0, 1), ConfigError);
}

// ---------------------------------------------------------------------------
// Metrics and folds
// ---------------------------------------------------------------------------

TEST(Metrics, HandComputedValues) {
  Eigen::VectorXd t(2), p(2);
  t << 0, 0;
  p << 1, -1;
  Metrics m = metrics(t, p);
  EXPECT_DOUBLE_EQ(m.mae, 1.0);
  EXPECT_DOUBLE_EQ(m.mse, 1.0);
  EXPECT_DOUBLE_EQ(m.rmse, 1.0);
  m = metrics(Eigen::VectorXd::Zero(1), Eigen::VectorXd::Constant(1, 3.0));
  EXPECT_DOUBLE_EQ(m.mae, 3.0);
  EXPECT_DOUBLE_EQ(m.mse, 9.0);
  EXPECT_DOUBLE_EQ(m.rmse, 3.0);
  m = metrics(t, t);
  EXPECT_EQ(m.mae, 0.0);
  EXPECT_EQ(m.rmse, 0.0);
  EXPECT_THROW(metrics(t, Eigen::VectorXd::Zero(3)), DomainError);
  EXPECT_THROW(metrics(Eigen::VectorXd(0), Eigen::VectorXd(0)), DomainError);
}

TEST(KFold, PartitionIsBalancedAndDeterministic) {
  const auto f = kfold_assignment(103, 5, 17, 0);
  std::vector<int> sizes(5, 0);
  for (int k : f) ++sizes[static_cast<std::size_t>(k)];
  for (int s : sizes) EXPECT_TRUE(s == 20 || s == 21);
  EXPECT_EQ(f, kfold_assignment(103, 5, 17, 0));
  EXPECT_NE(f, kfold_assignment(103, 5, 18, 0));
  std::set<Eigen::Index> all;
  for (int k = 0; k < 5; ++k) {
    const auto in = fold_rows(f, k, false);
    const auto out = fold_rows(f, k, true);
    EXPECT_EQ(in.size() + out.size(), 103u);
    all.insert(in.begin(), in.end());
  }
  EXPECT_EQ(all.size(), 103u);
  EXPECT_THROW(kfold_assignment(10, 1, 0, 0), ConfigError);
  EXPECT_THROW(kfold_assignment(3, 5, 0, 0), DataError);
}

TEST(MeanStd, SampleStatistics) {
  const MeanStd m = mean_std({1.0, 2.0, 3.0, 4.0});
  EXPECT_DOUBLE_EQ(m.mean, 2.5);
  EXPECT_NEAR(m.std, std::sqrt(5.0 / 3.0), 1e-15);
  EXPECT_EQ(mean_std({2.0}).std, 0.0);
}

TEST(ParallelFor, MatchesSerialAndPropagatesErrors) {
  std::vector<int> serial(50), threaded(50);
  parallel_for(50, 1, [&](std::size_t i) { serial[i] = static_cast<int>(i * i); });
  parallel_for(50, 4, [&](std::size_t i) { threaded[i] = static_cast<int>(i * i); });
  EXPECT_EQ(serial, threaded);
  EXPECT_THROW(parallel_for(10, 3,
                            [](std::size_t i) {
                              if (i == 7) throw NumericalError("boom");
                            }),
               NumericalError);
}

// ---------------------------------------------------------------------------
// Grid
// ---------------------------------------------------------------------------

TEST(GridSearchSpec, ExcludesExactLimitsButKeepsKl) {
  GridSearchSpec g;
  const auto full = g.cells();
  // 13 x 13 raw cells minus 25 on the axes and 8 more on alpha + beta = 0.
  EXPECT_EQ(full.size(), 137u);
  int kl = 0;
  for (const auto& c : full) {
    if (is_kl_point(c)) {
      ++kl;
      continue;
    }
    EXPECT_EQ(classify_region(c), Region::Generic) << c.alpha() << "," << c.beta();
  }
  EXPECT_EQ(kl, 1);
  g.step = 0.5;
  EXPECT_EQ(g.cells().size(), 33u);
  g.include_kl = false;
  EXPECT_EQ(g.cells().size(), 32u);
}

TEST(GridSearchSpec, ValuesAreExactGridPoints) {
  GridSearchSpec g;
  std::set<double> alphas;
  for (const auto& c : g.cells()) alphas.insert(c.alpha());
  EXPECT_TRUE(alphas.count(1.0));
  EXPECT_TRUE(alphas.count(0.25));
  EXPECT_TRUE(alphas.count(2.5));
  EXPECT_FALSE(alphas.count(0.0));
}

TEST(GridSearchSpec, Validation) {
  GridSearchSpec g;
  g.step = 0.0;
  EXPECT_THROW(g.validate(), ConfigError);
  g = GridSearchSpec{};
  g.alpha_min = 3.0;
  EXPECT_THROW(g.validate(), ConfigError);
  g = GridSearchSpec{};
  g.alpha_min = g.alpha_max = 0.0;
  g.beta_min = g.beta_max = 0.0;
  EXPECT_THROW(g.cells(), ConfigError);
}

// ---------------------------------------------------------------------------
// Toy experiment
// ---------------------------------------------------------------------------

TEST(ToyExperiment, CleanDataMakesSettingsEquivalent) {
  ToyConfig cfg;
  cfg.p_outliers = 0.0;
  std::vector<std::uint64_t> seeds;
  for (std::uint64_t s = 0; s < 10; ++s) seeds.push_back(s);
  const ToyTable t = run_toy_experiment({{1.0, 0.0}, {1.9, -0.3}}, seeds, cfg);
  ASSERT_EQ(t.rows.size(), 2u);
  EXPECT_NEAR(t.rows[0].mae.mean, t.rows[1].mae.mean, 0.05);
  // On clean data the posterior mean recovers w and the error is the noise.
  EXPECT_NEAR(t.rows[0].mae.mean, 0.1 * std::sqrt(2.0 / std::numbers::pi), 0.02);
  EXPECT_EQ(t.rows[1].runs.size(), 10u);
  EXPECT_DOUBLE_EQ(t.rows[1].alpha, 1.9 + 0.3);
}

TEST(ToyExperiment, DeterministicAndIndependentOfWorkers) {
  ToyConfig cfg;
  cfg.n_train = 200;
  cfg.n_test = 100;
  cfg.opt.steps = 200;
  const ToyTable a = run_toy_experiment({{1.0, 0.0}, {1.9, -0.3}}, {1, 2}, cfg);
  cfg.workers = 3;
  const ToyTable b = run_toy_experiment({{1.0, 0.0}, {1.9, -0.3}}, {1, 2}, cfg);
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_EQ(a.rows[i].mae.mean, b.rows[i].mae.mean);
    for (std::size_t k = 0; k < 2; ++k) {
      EXPECT_EQ(a.rows[i].runs[k].report.final.mu, b.rows[i].runs[k].report.final.mu);
      EXPECT_EQ(a.rows[i].runs[k].report.trace, b.rows[i].runs[k].report.trace);
    }
  }
}

TEST(ToyExperiment, RejectsLimitSettingsAndEmptyInputs) {
  ToyConfig cfg;
  EXPECT_THROW(run_toy_experiment({{2.0, 0.0}}, {1}, cfg), ConfigError);   // beta = 0, not KL
  EXPECT_THROW(run_toy_experiment({{0.0, 0.5}}, {1}, cfg), ConfigError);   // alpha + beta = 0
  EXPECT_THROW(run_toy_experiment({}, {1}, cfg), ConfigError);
  EXPECT_THROW(run_toy_experiment({{1.0, 0.0}}, {}, cfg), ConfigError);
  cfg.mc_samples = 0;
  EXPECT_THROW(run_toy_experiment({{1.0, 0.0}}, {1}, cfg), ConfigError);
}

// ---------------------------------------------------------------------------
// Nested cross-validation
// ---------------------------------------------------------------------------

CVConfig tiny_cv() {
  CVConfig c;
  c.outer_folds = 3;
  c.inner_folds = 2;
  c.hidden_layers = {4};
  c.mc_samples = 3;
  c.opt.steps = 40;
  c.predictive_draws = 5;
  return c;
}

Dataset small_regression() { return gen_toy(60, 3, 0.0, 11); }

TEST(NestedCV, SingleCellGridSelectsIt) {
  GridSearchSpec g;
  g.alpha_min = g.alpha_max = 1.0;
  g.beta_min = g.beta_max = 0.0;
  const CVReport r = nested_cv(small_regression(), g, tiny_cv(), 3);
  EXPECT_EQ(r.selected_alpha, 1.0);
  EXPECT_EQ(r.selected_beta, 0.0);
  ASSERT_EQ(r.folds.size(), 3u);
  for (const auto& f : r.folds) {
    EXPECT_EQ(f.selected_alpha, 1.0);
    // The selected cell is KL and shares its seeds with the KL refit.
    EXPECT_EQ(f.test_rmse, f.kl_test_rmse);
  }
}

TEST(NestedCV, OuterFoldsPartitionTheData) {
  GridSearchSpec g;
  g.alpha_min = 0.5;
  g.alpha_max = 1.0;
  g.beta_min = -0.5;
  g.beta_max = 0.0;
  g.step = 0.5;
  const CVReport r = nested_cv(small_regression(), g, tiny_cv(), 4);
  std::size_t total = 0;
  for (const auto& f : r.folds) {
    total += f.test_size;
    EXPECT_EQ(f.train_size + f.test_size, 60u);
  }
  EXPECT_EQ(total, 60u);
  // (0.5, -0.5) is a SumZero limit and (0.5, 0) a BetaZero limit.
  ASSERT_EQ(r.cells.size(), 2u);
  EXPECT_EQ(r.cells[0].alpha, 1.0);
  EXPECT_EQ(r.cells[0].beta, -0.5);
  for (const auto& c : r.cells) EXPECT_EQ(c.validation_rmse.count, 6u);
  bool selected_in_grid = false;
  for (const auto& c : r.cells) selected_in_grid |= (c.alpha == r.selected_alpha && c.beta == r.selected_beta);
  EXPECT_TRUE(selected_in_grid);
}

TEST(NestedCV, DeterministicAndIndependentOfWorkers) {
  GridSearchSpec g;
  g.alpha_min = 0.5;
  g.alpha_max = 1.5;
  g.beta_min = -0.5;
  g.beta_max = 0.5;
  g.step = 0.5;
  const Dataset d = small_regression();
  CVConfig c = tiny_cv();
  c.p_outliers = 0.1;
  const CVReport a = nested_cv(d, g, c, 5);
  c.workers = 3;
  const CVReport b = nested_cv(d, g, c, 5);
  ASSERT_EQ(a.folds.size(), b.folds.size());
  for (std::size_t k = 0; k < a.folds.size(); ++k) {
    EXPECT_EQ(a.folds[k].test_rmse, b.folds[k].test_rmse);
    EXPECT_EQ(a.folds[k].kl_test_rmse, b.folds[k].kl_test_rmse);
    EXPECT_EQ(a.folds[k].selected_alpha, b.folds[k].selected_alpha);
  }
  for (std::size_t i = 0; i < a.cells.size(); ++i)
    EXPECT_EQ(a.cells[i].validation_rmse.mean, b.cells[i].validation_rmse.mean);
  const CVReport other = nested_cv(d, g, c, 6);
  EXPECT_NE(a.test_rmse.mean, other.test_rmse.mean);
}

TEST(NestedCV, CleanDataWinnerIsNotMateriallyWorseThanKl) {
  GridSearchSpec g;
  g.alpha_min = 0.5;
  g.alpha_max = 1.5;
  g.beta_min = -0.5;
  g.beta_max = 0.5;
  g.step = 0.5;
  CVConfig c;
  c.p_outliers = 0.0;
  const Dataset d = load_csv(kDataDir + "/diabetes_400.csv", "target");
  const CVReport r = nested_cv(d, g, c, 1);
  EXPECT_LE(r.test_rmse.mean, r.kl_test_rmse.mean + 0.05);
}

TEST(NestedCV, PreconditionsAreChecked) {
  GridSearchSpec g;
  CVConfig c = tiny_cv();
  EXPECT_THROW(nested_cv(gen_toy(5, 2, 0.0, 1), g, c, 0), DataError);
  EXPECT_THROW(nested_cv(normalize(small_regression()), g, c, 0), DataError);
  c.outer_folds = 1;
  EXPECT_THROW(nested_cv(small_regression(), g, c, 0), ConfigError);
  c = tiny_cv();
  c.hidden_layers.clear();
  EXPECT_THROW(nested_cv(small_regression(), g, c, 0), ConfigError);
}

}  // namespace
}  // namespace sabvi
