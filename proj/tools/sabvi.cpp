// Command-line entry point: divergence evaluation, 1-D density fitting,
// gradient diagnostics, and the two experiment harnesses.
//
// Every subcommand accepts --config FILE (a config.json written by an earlier
// run) as its base; flags given explicitly override it. With --out DIR a run
// writes its fully resolved config.json, results.json and CSV tables there.
//
// Exit codes: 0 success, 1 diagnostic failure, 2 config error, 3 numerical
// error.

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "sabvi/dataset.hpp"
#include "sabvi/density_fit.hpp"
#include "sabvi/divergence.hpp"
#include "sabvi/error.hpp"
#include "sabvi/experiments.hpp"
#include "sabvi/gradcheck.hpp"
#include "sabvi/io.hpp"

namespace {

using namespace sabvi;
using io::Json;
namespace fs = std::filesystem;

enum ExitCode : int { kOk = 0, kDiagnosticFailure = 1, kConfigFailure = 2, kNumericalFailure = 3 };

// ---- shared plumbing --------------------------------------------------------

/// The base config for `command`: the file's JSON object, or {} without one.
Json load_base(const std::string& path, std::string_view command) {
  if (path.empty()) return Json::object();
  Json j = io::parse_json(io::read_file(path), path);
  if (!j.is_object()) throw ConfigError(path + ": expected a JSON object");
  if (j.contains("command") && j["command"] != command)
    throw ConfigError(path + ": config belongs to command '" + j["command"].get<std::string>() + "', not '" +
                      std::string(command) + "'");
  return j;
}

struct Outputs {
  std::string dir;

  bool enabled() const { return !dir.empty(); }
  void json(const std::string& name, const Json& j) const {
    if (enabled()) io::write_json(fs::path(dir) / name, j);
  }
  void csv(const std::string& name, const io::CsvTable& t) const {
    if (enabled()) t.write(fs::path(dir) / name);
  }
};

/// (alpha, beta) given as --alpha/--beta or --lambda/--beta.
struct ParamFlags {
  double alpha = 0.0;
  double beta = 0.0;
  double lambda = 0.0;
  CLI::Option* a = nullptr;
  CLI::Option* b = nullptr;
  CLI::Option* l = nullptr;

  void add(CLI::App* cmd) {
    a = cmd->add_option("--alpha", alpha, "alpha (excludes --lambda)");
    l = cmd->add_option("--lambda", lambda, "lambda = alpha + beta (excludes --alpha)");
    b = cmd->add_option("--beta", beta, "beta");
    a->excludes(l);
  }

  /// Explicit flags over `base` ({alpha, beta, ...}, may be null). A lone
  /// --beta keeps the base alpha.
  DivergenceParams resolve(const Json* base) const {
    std::optional<double> A, B;
    if (base && base->is_object()) {
      if (base->contains("alpha")) A = base->at("alpha").get<double>();
      if (base->contains("beta")) B = base->at("beta").get<double>();
    }
    if (b->count()) B = beta;
    if (a->count()) A = alpha;
    if (l->count()) {
      if (!b->count()) throw ConfigError("--lambda needs --beta");
      A = lambda - beta;
    }
    if (!A || !B) throw ConfigError("divergence parameters missing: give --alpha and --beta, or --lambda and --beta");
    return DivergenceParams(*A, *B);
  }
};

Json params_json(const DivergenceParams& p) { return io::params_json(p.alpha(), p.beta()); }

template <class T>
void override_if(const CLI::Option* opt, T& target, const T& value) {
  if (opt->count()) target = value;
}

double parse_double(std::string_view s, std::string_view what) {
  while (!s.empty() && s.front() == ' ') s.remove_prefix(1);
  while (!s.empty() && s.back() == ' ') s.remove_suffix(1);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size())
    throw ConfigError(std::string(what) + ": '" + std::string(s) + "' is not a number");
  return v;
}

// ---- divergence -------------------------------------------------------------

struct DivergenceCmd {
  std::string config, out, p, q;
  std::size_t grid_size = kDefaultGridSize;
  ParamFlags params;
  CLI::Option* grid_opt = nullptr;

  void add(CLI::App& app) {
    auto* cmd = app.add_subcommand("divergence", "Evaluate D(p || q) on a shared grid");
    cmd->add_option("--config", config, "Resolved config.json to start from");
    cmd->add_option("--out", out, "Output directory");
    params.add(cmd);
    cmd->add_option("--p", p, "Density spec: gaussian:MU,SIGMA | mixture:skew-pair | JSON | file.json");
    cmd->add_option("--q", q, "Density spec (as --p)");
    grid_opt = cmd->add_option("--grid-size", grid_size, "Grid nodes")->check(CLI::Range(3, 10000000));
  }

  int run() const {
    const Json base = load_base(config, "divergence");
    const DivergenceParams prm = params.resolve(base.contains("params") ? &base["params"] : nullptr);
    auto spec = [&](const std::string& flag, const char* key) {
      if (!flag.empty()) return io::parse_density_spec(flag, std::string("--") + key);
      if (base.contains(key)) return io::density_from_json(base[key], key);
      throw ConfigError(std::string("missing density --") + key);
    };
    const io::DensitySpec ps = spec(p, "p");
    const io::DensitySpec qs = spec(q, "q");
    std::size_t n = base.value("grid_size", grid_size);
    override_if(grid_opt, n, grid_size);

    Json resolved{{"command", "divergence"},
                  {"params", params_json(prm)},
                  {"p", io::to_json(ps)},
                  {"q", io::to_json(qs)},
                  {"grid_size", n}};
    const Outputs o{out};
    o.json("config.json", resolved);

    const auto [pg, qg] = io::tabulate_pair(ps, qs, n);
    const double value = eval_sab(prm, pg, qg);
    const Json result{{"value", value}, {"region", to_string(classify_region(prm))}, {"params", params_json(prm)}};
    o.json("results.json", result);
    std::cout << result.dump(2) << "\n";
    return kOk;
  }
};

// ---- fit-density ------------------------------------------------------------

struct FitDensityCmd {
  std::string config, out, target, kind = "sab";
  double order = 0.0, init_mu = 0.0, init_sigma = 1.0, lr = 0.0;
  int max_iters = kDefaultFitIterations;
  std::size_t grid_size = kDefaultGridSize;
  ParamFlags params;
  CLI::Option *kind_opt = nullptr, *order_opt = nullptr, *mu_opt = nullptr, *sigma_opt = nullptr, *lr_opt = nullptr,
              *iters_opt = nullptr, *grid_opt = nullptr;

  void add(CLI::App& app) {
    auto* cmd = app.add_subcommand("fit-density", "Fit a Gaussian to a 1-D target by minimizing D(q || p)");
    cmd->add_option("--config", config, "Resolved config.json to start from");
    cmd->add_option("--out", out, "Output directory");
    cmd->add_option("--target", target, "Target density spec (default mixture:skew-pair)");
    kind_opt = cmd->add_option("--kind", kind, "sab | kl | renyi | gamma")
                   ->check(CLI::IsMember({"sab", "kl", "renyi", "gamma"}));
    params.add(cmd);
    order_opt = cmd->add_option("--order", order, "Order of the renyi (alpha) or gamma (beta) divergence");
    mu_opt = cmd->add_option("--init-mu", init_mu, "Initial mean (default: target mean)");
    sigma_opt = cmd->add_option("--init-sigma", init_sigma, "Initial standard deviation (default: target sd)")
                    ->check(CLI::PositiveNumber);
    lr_opt = cmd->add_option("--lr", lr, "ADAM learning rate")->check(CLI::PositiveNumber);
    iters_opt = cmd->add_option("--max-iters", max_iters, "Iteration cap")->check(CLI::PositiveNumber);
    grid_opt = cmd->add_option("--grid-size", grid_size, "Grid nodes")->check(CLI::Range(3, 10000000));
  }

  /// The divergence and its config JSON.
  std::pair<Divergence, Json> resolve_divergence(const Json& base) const {
    const Json* bd = base.contains("divergence") ? &base["divergence"] : nullptr;
    std::string k = bd ? bd->value("kind", std::string("sab")) : std::string("sab");
    override_if(kind_opt, k, kind);
    const bool kind_changed = kind_opt->count() && (!bd || bd->value("kind", std::string("sab")) != k);
    const Json* base_params = kind_changed ? nullptr : bd;
    auto order_value = [&](const char* key) {
      if (order_opt->count()) return order;
      if (base_params && base_params->contains(key)) return base_params->at(key).get<double>();
      throw ConfigError("--order is required for --kind " + k);
    };
    if (k == "kl") return {fit::KL{}, Json{{"kind", "kl"}}};
    if (k == "renyi") {
      const double a = order_value("alpha");
      return {fit::Renyi{a}, Json{{"kind", "renyi"}, {"alpha", a}}};
    }
    if (k == "gamma") {
      const double b = order_value("beta");
      return {fit::Gamma{b}, Json{{"kind", "gamma"}, {"beta", b}}};
    }
    if (k != "sab") throw ConfigError("unknown divergence kind '" + k + "'");
    const DivergenceParams prm = params.resolve(base_params);
    Json j{{"kind", "sab"}};
    j.update(params_json(prm));
    return {fit::SAB{prm}, j};
  }

  int run() const {
    const Json base = load_base(config, "fit-density");
    const io::DensitySpec spec = !target.empty()      ? io::parse_density_spec(target, "--target")
                                 : base.contains("target") ? io::density_from_json(base["target"], "target")
                                                           : io::parse_density_spec("mixture:skew-pair");
    std::size_t n = base.value("grid_size", grid_size);
    override_if(grid_opt, n, grid_size);
    const auto [div, div_json] = resolve_divergence(base);
    AdamConfig opt = base.contains("optimizer") ? io::adam_from_json(base["optimizer"]) : AdamConfig{};
    override_if(lr_opt, opt.learning_rate, lr);
    int iters = base.value("max_iters", max_iters);
    override_if(iters_opt, iters, max_iters);

    const GridDensity grid = io::tabulate(spec, n);
    Gaussian1D init = base.contains("init")
                          ? Gaussian1D{base["init"].at("mu").get<double>(), base["init"].at("log_sigma").get<double>()}
                          : moment_matched(grid);
    override_if(mu_opt, init.mu, init_mu);
    if (sigma_opt->count()) init.log_sigma = std::log(init_sigma);

    const Json resolved{{"command", "fit-density"},
                        {"target", io::to_json(spec)},
                        {"grid_size", n},
                        {"divergence", div_json},
                        {"init", Json{{"mu", init.mu}, {"log_sigma", init.log_sigma}}},
                        {"optimizer", io::adam_json(opt)},
                        {"max_iters", iters}};
    const Outputs o{out};
    o.json("config.json", resolved);

    auto write = [&](const FitResult& r, const std::string& error) {
      Json result{{"divergence", div_json}, {"fit", io::fit_result_json(r)}};
      if (!error.empty()) result["error"] = error;
      o.json("results.json", result);
      o.csv("trace.csv", io::trace_csv(r.divergence_trace));
      o.csv("density.csv", io::density_plot_csv(grid, r.final));
      return result;
    };
    try {
      const FitResult r = fit_gaussian(div, grid, init, opt, iters);
      std::cout << write(r, "").dump(2) << "\n";
    } catch (const FitAborted& e) {
      write(e.partial(), e.what());
      throw;
    }
    return kOk;
  }
};

// ---- gradcheck --------------------------------------------------------------

struct GradcheckCmd {
  std::string config, out;
  std::vector<std::string> only;
  double perturb = 0.0;
  std::uint64_t seed = gradcheck::Options{}.seed;
  CLI::Option *only_opt = nullptr, *perturb_opt = nullptr, *seed_opt = nullptr;

  void add(CLI::App& app) {
    auto* cmd = app.add_subcommand("gradcheck", "Compare every analytic gradient with central differences");
    cmd->add_option("--config", config, "Resolved config.json to start from");
    cmd->add_option("--out", out, "Output directory");
    only_opt = cmd->add_option("--only", only, "Suites to run (appendix-c, mc, models)")
                   ->delimiter(',')
                   ->check(CLI::IsMember(gradcheck::suite_names()));
    perturb_opt = cmd->add_option("--perturb", perturb, "Test hook: perturb analytic gradients by this relative amount");
    seed_opt = cmd->add_option("--seed", seed, "Seed for the random cases");
  }

  int run() const {
    const Json base = load_base(config, "gradcheck");
    std::vector<std::string> suites = base.value("suites", gradcheck::suite_names());
    override_if(only_opt, suites, only);
    gradcheck::Options opt;
    opt.perturb = base.value("perturb", 0.0);
    opt.seed = base.value("seed", opt.seed);
    override_if(perturb_opt, opt.perturb, perturb);
    override_if(seed_opt, opt.seed, seed);
    const auto& known = gradcheck::suite_names();
    for (const auto& s : suites)
      if (std::find(known.begin(), known.end(), s) == known.end())
        throw ConfigError("unknown gradient suite '" + s + "' (expected appendix-c, mc or models)");
    const Json resolved{{"command", "gradcheck"}, {"suites", suites}, {"seed", opt.seed}, {"perturb", opt.perturb}};
    const Outputs o{out};
    o.json("config.json", resolved);

    std::printf("%-12s %6s %8s %14s %10s  %s\n", "suite", "cases", "skipped", "max_rel_err", "threshold", "status");
    Json results = Json::array();
    bool ok = true;
    std::vector<gradcheck::SuiteResult> failures;
    for (const auto& s : suites) {
      const gradcheck::SuiteResult r = gradcheck::run_suite(s, opt);
      std::printf("%-12s %6d %8d %14.3e %10.0e  %s\n", r.name.c_str(), r.cases, r.skipped, r.max_rel_err,
                  r.threshold, r.passed() ? "PASS" : "FAIL");
      results.push_back(Json{{"suite", r.name},
                             {"cases", r.cases},
                             {"skipped", r.skipped},
                             {"max_rel_err", r.max_rel_err},
                             {"threshold", r.threshold},
                             {"passed", r.passed()},
                             {"worst_case", r.worst_case}});
      if (!r.passed()) {
        ok = false;
        failures.push_back(r);
      }
    }
    for (const auto& f : failures) std::printf("offending case [%s]: %s\n", f.name.c_str(), f.worst_case.c_str());
    o.json("results.json", Json{{"passed", ok}, {"suites", results}});
    return ok ? kOk : kDiagnosticFailure;
  }
};

// ---- toy --------------------------------------------------------------------

std::vector<ToySetting> parse_settings(const std::string& text) {
  std::vector<ToySetting> out;
  std::string_view rest = text;
  while (!rest.empty()) {
    const auto semi = rest.find(';');
    const std::string_view item = rest.substr(0, semi);
    rest = semi == std::string_view::npos ? std::string_view{} : rest.substr(semi + 1);
    if (item.find_first_not_of(' ') == std::string_view::npos) continue;
    const auto comma = item.find(',');
    if (comma == std::string_view::npos || item.find(',', comma + 1) != std::string_view::npos)
      throw ConfigError("--settings: expected 'lambda,beta' pairs separated by ';', got '" + std::string(item) + "'");
    out.push_back({parse_double(item.substr(0, comma), "--settings"), parse_double(item.substr(comma + 1), "--settings")});
  }
  if (out.empty()) throw ConfigError("--settings: no setting given");
  return out;
}

const std::vector<ToySetting> kDefaultToySettings{{1.0, 0.0}, {1.9, -0.3}, {1.8, 0.8}};

struct ToyCmd {
  std::string config, out;
  std::vector<std::string> settings;
  int seeds = 10, steps = 0, mc = 0, workers = 1;
  Eigen::Index n_train = 0, n_test = 0, dim = 0;
  double outliers = 0.0, lr = 0.0;
  CLI::Option *settings_opt = nullptr, *seeds_opt = nullptr, *outliers_opt = nullptr, *steps_opt = nullptr,
              *lr_opt = nullptr, *mc_opt = nullptr, *train_opt = nullptr, *test_opt = nullptr, *dim_opt = nullptr,
              *workers_opt = nullptr;

  void add(CLI::App& app) {
    auto* cmd = app.add_subcommand("toy", "Bayesian linear regression with outliers, one row per setting");
    cmd->add_option("--config", config, "Resolved config.json to start from");
    cmd->add_option("--out", out, "Output directory");
    settings_opt = cmd->add_option("--settings", settings,
                                   "Settings as \"lambda,beta;lambda,beta\" (may be repeated)");
    seeds_opt = cmd->add_option("--seeds", seeds, "Use seeds 0..N-1")->check(CLI::PositiveNumber);
    outliers_opt = cmd->add_option("--outliers", outliers, "Fraction of training outliers");
    steps_opt = cmd->add_option("--steps", steps, "ADAM steps")->check(CLI::PositiveNumber);
    lr_opt = cmd->add_option("--lr", lr, "ADAM learning rate")->check(CLI::PositiveNumber);
    mc_opt = cmd->add_option("--K", mc, "Monte Carlo samples per step")->check(CLI::PositiveNumber);
    train_opt = cmd->add_option("--n-train", n_train, "Training points")->check(CLI::PositiveNumber);
    test_opt = cmd->add_option("--n-test", n_test, "Clean test points")->check(CLI::PositiveNumber);
    dim_opt = cmd->add_option("--dim", dim, "Input dimension")->check(CLI::PositiveNumber);
    workers_opt = cmd->add_option("--workers", workers, "Worker threads")->check(CLI::PositiveNumber);
  }

  int run() const {
    const Json base = load_base(config, "toy");
    std::vector<ToySetting> sets = kDefaultToySettings;
    if (base.contains("settings")) {
      sets.clear();
      for (const auto& s : base["settings"]) sets.push_back({s.at("lambda").get<double>(), s.at("beta").get<double>()});
    }
    if (settings_opt->count()) {
      sets.clear();
      for (const auto& text : settings)
        for (const auto& s : parse_settings(text)) sets.push_back(s);
    }
    std::vector<std::uint64_t> seed_list = base.value("seeds", std::vector<std::uint64_t>{});
    if (seed_list.empty() || seeds_opt->count()) {
      seed_list.clear();
      for (int s = 0; s < seeds; ++s) seed_list.push_back(static_cast<std::uint64_t>(s));
    }
    ToyConfig cfg = base.contains("experiment") ? io::toy_config_from_json(base["experiment"]) : ToyConfig{};
    override_if(outliers_opt, cfg.p_outliers, outliers);
    override_if(steps_opt, cfg.opt.steps, steps);
    override_if(lr_opt, cfg.opt.learning_rate, lr);
    override_if(mc_opt, cfg.mc_samples, mc);
    override_if(train_opt, cfg.n_train, n_train);
    override_if(test_opt, cfg.n_test, n_test);
    override_if(dim_opt, cfg.input_dim, dim);
    override_if(workers_opt, cfg.workers, workers);
    cfg.validate();
    validate_toy_settings(sets);

    Json settings_json = Json::array();
    for (const auto& s : sets) settings_json.push_back(Json{{"lambda", s.lambda}, {"beta", s.beta}});
    const Json resolved{
        {"command", "toy"}, {"settings", settings_json}, {"seeds", seed_list}, {"experiment", io::toy_config_json(cfg)}};
    const Outputs o{out};
    o.json("config.json", resolved);

    // Settings run one at a time so that completed rows survive a failure.
    ToyTable table;
    table.config = cfg;
    table.seeds = seed_list;
    auto flush = [&](const std::string& error) {
      Json result = io::toy_table_json(table);
      result["complete"] = error.empty();
      if (!error.empty()) result["error"] = error;
      o.json("results.json", result);
      o.csv("table.csv", io::toy_table_csv(table));
      o.csv("runs.csv", io::toy_runs_csv(table));
      Json reports = Json::array();
      for (const auto& row : table.rows)
        for (const auto& run : row.runs) {
          Json r{{"lambda", row.setting.lambda}, {"beta", row.setting.beta}, {"seed", run.seed}};
          r["report"] = io::train_report_json(run.report);
          reports.push_back(std::move(r));
        }
      o.json("train_reports.json", reports);
    };
    for (const auto& s : sets) {
      try {
        ToyTable one = run_toy_experiment({s}, seed_list, cfg);
        table.rows.push_back(std::move(one.rows.front()));
      } catch (const Error& e) {
        flush(e.what());
        throw;
      }
    }
    flush("");

    std::printf("%8s %8s %8s %18s %18s\n", "lambda", "beta", "alpha", "MAE (mean +- sd)", "MSE (mean +- sd)");
    for (const auto& r : table.rows)
      std::printf("%8.3g %8.3g %8.3g %9.4f +- %6.4f %9.4f +- %6.4f\n", r.setting.lambda, r.setting.beta, r.alpha,
                  r.mae.mean, r.mae.std, r.mse.mean, r.mse.std);
    return kOk;
  }
};

// ---- uci --------------------------------------------------------------------

struct UciCmd {
  std::string config, out, csv, target = "target";
  double corrupt_p = 0.0, step = 0.0, lr = 0.0;
  int k1 = 0, k2 = 0, steps = 0, mc = 0, workers = 1, draws = 0;
  std::vector<int> hidden;
  std::uint64_t seed = 0;
  bool desk = false, full = false, learn_noise = false;
  CLI::Option *csv_opt = nullptr, *target_opt = nullptr, *corrupt_opt = nullptr, *step_opt = nullptr,
              *lr_opt = nullptr, *k1_opt = nullptr, *k2_opt = nullptr, *steps_opt = nullptr, *mc_opt = nullptr,
              *workers_opt = nullptr, *draws_opt = nullptr, *hidden_opt = nullptr, *seed_opt = nullptr,
              *full_opt = nullptr, *desk_opt = nullptr, *noise_opt = nullptr;

  void add(CLI::App& app) {
    auto* cmd = app.add_subcommand("uci", "Nested cross-validated grid search on a regression CSV");
    cmd->add_option("--config", config, "Resolved config.json to start from");
    cmd->add_option("--out", out, "Output directory");
    csv_opt = cmd->add_option("--csv", csv, "CSV file with a header row");
    target_opt = cmd->add_option("--target", target, "Target column name");
    corrupt_opt = cmd->add_option("--corrupt", corrupt_p, "Fraction of training targets shifted by +5");
    desk_opt = cmd->add_flag("--desk", desk, "Desk-scale settings (default): step 0.5, K1 5, one hidden layer of 10");
    full_opt = cmd->add_flag("--full", full, "Full settings: step 0.25, K1 10, 50x50 network, 500 steps, K 25");
    desk_opt->excludes(full_opt);
    step_opt = cmd->add_option("--step", step, "Grid step")->check(CLI::PositiveNumber);
    k1_opt = cmd->add_option("--k1", k1, "Outer folds");
    k2_opt = cmd->add_option("--k2", k2, "Inner folds");
    hidden_opt = cmd->add_option("--hidden", hidden, "Hidden layer sizes, comma separated")->delimiter(',');
    steps_opt = cmd->add_option("--steps", steps, "ADAM steps per fit")->check(CLI::PositiveNumber);
    lr_opt = cmd->add_option("--lr", lr, "ADAM learning rate")->check(CLI::PositiveNumber);
    mc_opt = cmd->add_option("--K", mc, "Monte Carlo samples per step")->check(CLI::PositiveNumber);
    draws_opt = cmd->add_option("--draws", draws, "Posterior draws for the predictive mean")->check(CLI::PositiveNumber);
    noise_opt = cmd->add_flag("--learn-noise", learn_noise, "Learn the observation noise");
    seed_opt = cmd->add_option("--seed", seed, "Seed for folds, corruption and training");
    workers_opt = cmd->add_option("--workers", workers, "Worker threads")->check(CLI::PositiveNumber);
  }

  static void apply_full(GridSearchSpec& g, CVConfig& c) {
    g.step = 0.25;
    c.outer_folds = 10;
    c.hidden_layers = {50, 50};
    c.opt.steps = 500;
    c.mc_samples = 25;
  }

  static void apply_desk(GridSearchSpec& g, CVConfig& c) {
    g.step = 0.5;
    const CVConfig d;
    c.outer_folds = d.outer_folds;
    c.inner_folds = d.inner_folds;
    c.hidden_layers = d.hidden_layers;
    c.opt.steps = d.opt.steps;
    c.mc_samples = d.mc_samples;
  }

  int run() const {
    const Json base = load_base(config, "uci");
    std::string path = base.value("csv", std::string());
    override_if(csv_opt, path, csv);
    if (path.empty()) throw ConfigError("uci needs --csv");
    std::string target_col = base.value("target", std::string("target"));
    override_if(target_opt, target_col, target);
    std::uint64_t s = base.value("seed", std::uint64_t{0});
    override_if(seed_opt, s, seed);

    GridSearchSpec grid;
    CVConfig cv;
    apply_desk(grid, cv);
    if (base.contains("grid")) grid = io::grid_from_json(base["grid"]);
    if (base.contains("cv")) cv = io::cv_config_from_json(base["cv"]);
    if (full) apply_full(grid, cv);
    if (desk) apply_desk(grid, cv);
    override_if(corrupt_opt, cv.p_outliers, corrupt_p);
    override_if(step_opt, grid.step, step);
    override_if(k1_opt, cv.outer_folds, k1);
    override_if(k2_opt, cv.inner_folds, k2);
    override_if(hidden_opt, cv.hidden_layers, hidden);
    override_if(steps_opt, cv.opt.steps, steps);
    override_if(lr_opt, cv.opt.learning_rate, lr);
    override_if(mc_opt, cv.mc_samples, mc);
    override_if(draws_opt, cv.predictive_draws, draws);
    if (noise_opt->count()) cv.learn_noise = true;
    override_if(workers_opt, cv.workers, workers);
    grid.validate();
    cv.validate();

    const Json resolved{{"command", "uci"},     {"csv", path},     {"target", target_col},
                        {"seed", s},            {"grid", io::grid_json(grid)}, {"cv", io::cv_config_json(cv)}};
    const Outputs o{out};
    o.json("config.json", resolved);

    const Dataset data = load_csv(path, target_col);
    CVReport report;
    try {
      report = nested_cv(data, grid, cv, s);
    } catch (const Error& e) {
      o.json("results.json", Json{{"complete", false}, {"error", e.what()}});
      throw;
    }
    Json result{{"complete", true}, {"rows", data.size()}, {"features", data.input_dim()}};
    result.update(io::cv_report_json(report));
    o.json("results.json", result);
    o.csv("cells.csv", io::cv_cells_csv(report));
    o.csv("heatmap.csv", io::cv_heatmap_csv(report));
    o.csv("folds.csv", io::cv_folds_csv(report));

    for (const auto& w : report.warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());
    std::printf("%4s %8s %8s %8s %12s %10s %10s\n", "fold", "alpha", "beta", "lambda", "val_rmse", "test_rmse",
                "kl_rmse");
    for (const auto& f : report.folds)
      std::printf("%4d %8.3g %8.3g %8.3g %12.4f %10.4f %10.4f\n", f.fold, f.selected_alpha, f.selected_beta,
                  f.selected_alpha + f.selected_beta, f.selected_validation_rmse, f.test_rmse, f.kl_test_rmse);
    std::printf("selected (alpha, beta) = (%g, %g), lambda = %g\n", report.selected_alpha, report.selected_beta,
                report.selected_alpha + report.selected_beta);
    std::printf("test RMSE %.4f +- %.4f (KL %.4f +- %.4f)\n", report.test_rmse.mean, report.test_rmse.std,
                report.kl_test_rmse.mean, report.kl_test_rmse.std);
    return kOk;
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Scale-invariant alpha-beta divergences for variational inference"};
  app.require_subcommand(1);
  DivergenceCmd divergence;
  FitDensityCmd fit_density;
  GradcheckCmd grad;
  ToyCmd toy;
  UciCmd uci;
  divergence.add(app);
  fit_density.add(app);
  grad.add(app);
  toy.add(app);
  uci.add(app);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kConfigFailure;
  }

  try {
    if (app.got_subcommand("divergence")) return divergence.run();
    if (app.got_subcommand("fit-density")) return fit_density.run();
    if (app.got_subcommand("gradcheck")) return grad.run();
    if (app.got_subcommand("toy")) return toy.run();
    if (app.got_subcommand("uci")) return uci.run();
  } catch (const ConfigError& e) {  // includes DataError
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigFailure;
  } catch (const DomainError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigFailure;
  } catch (const UnsupportedRegion& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigFailure;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigFailure;
  } catch (const Error& e) {  // evaluation, numerical and model failures
    std::cerr << "numerical error: " << e.what() << "\n";
    return kNumericalFailure;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigFailure;
  }
  return kConfigFailure;
}
