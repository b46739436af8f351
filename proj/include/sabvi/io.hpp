#pragma once

// Density specifications, JSON/CSV serialization of results, and small file
// helpers shared by the command-line tool and the tests. JSON objects keep
// insertion order, so every file is byte-stable for identical inputs.

#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "json.hpp"

#include "sabvi/dataset.hpp"
#include "sabvi/density_fit.hpp"
#include "sabvi/error.hpp"
#include "sabvi/experiments.hpp"
#include "sabvi/grid.hpp"
#include "sabvi/params.hpp"
#include "sabvi/vi.hpp"

namespace sabvi::io {

using Json = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Files and number formatting
// ---------------------------------------------------------------------------

/// Shortest decimal text that parses back to the same double.
inline std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  out << content;
  if (!out) throw Error("cannot write '" + path.string() + "'");
}

inline void write_json(const std::filesystem::path& path, const Json& j) { write_file(path, j.dump(2) + "\n"); }

inline Json parse_json(std::string_view text, std::string_view what) {
  try {
    return Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw ConfigError(std::string(what) + ": invalid JSON: " + e.what());
  }
}

/// Header plus rows of numbers or strings, comma separated.
class CsvTable {
 public:
  using Cell = std::variant<double, long long, std::string>;

  explicit CsvTable(std::vector<std::string> header) : header_(std::move(header)) {}

  void add(std::vector<Cell> row) {
    if (row.size() != header_.size()) throw Error("CSV row has the wrong number of cells");
    rows_.push_back(std::move(row));
  }

  std::size_t size() const noexcept { return rows_.size(); }

  std::string str() const {
    std::string out;
    append_line(out, header_);
    for (const auto& r : rows_) {
      std::vector<std::string> cells;
      for (const auto& c : r) {
        if (const auto* d = std::get_if<double>(&c))
          cells.push_back(format_double(*d));
        else if (const auto* i = std::get_if<long long>(&c))
          cells.push_back(std::to_string(*i));
        else
          cells.push_back(std::get<std::string>(c));
      }
      append_line(out, cells);
    }
    return out;
  }

  void write(const std::filesystem::path& path) const { write_file(path, str()); }

 private:
  static void append_line(std::string& out, const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) out += ',';
      const bool quote = cells[i].find_first_of(",\"\n") != std::string::npos;
      if (quote) {
        out += '"';
        for (char ch : cells[i]) {
          if (ch == '"') out += '"';
          out += ch;
        }
        out += '"';
      } else {
        out += cells[i];
      }
    }
    out += '\n';
  }

  std::vector<std::string> header_;
  std::vector<std::vector<Cell>> rows_;
};

// ---------------------------------------------------------------------------
// Density specifications
// ---------------------------------------------------------------------------

namespace spec {

struct Gaussian {
  double mu = 0.0;
  double sigma = 1.0;
};

struct Mixture {
  std::vector<SkewComponent> components;
};

/// A density given directly by its log-values on a uniform grid.
struct Grid {
  double lo = 0.0;
  double hi = 1.0;
  std::vector<double> log_values;
};

}  // namespace spec

using DensitySpec = std::variant<spec::Gaussian, spec::Mixture, spec::Grid>;

namespace detail {

inline double parse_number(std::string_view s, std::string_view what) {
  while (!s.empty() && s.front() == ' ') s.remove_prefix(1);
  while (!s.empty() && s.back() == ' ') s.remove_suffix(1);
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || res.ec != std::errc{} || res.ptr != s.data() + s.size() || !std::isfinite(v))
    throw ConfigError(std::string(what) + ": '" + std::string(s) + "' is not a finite number");
  return v;
}

inline double number_field(const Json& j, const char* key, std::string_view what) {
  if (!j.contains(key)) throw ConfigError(std::string(what) + ": missing field '" + key + "'");
  if (!j[key].is_number()) throw ConfigError(std::string(what) + ": field '" + key + "' must be a number");
  const double v = j[key].get<double>();
  if (!std::isfinite(v)) throw ConfigError(std::string(what) + ": field '" + key + "' must be finite");
  return v;
}

inline void check(const DensitySpec& s, std::string_view what) {
  if (const auto* g = std::get_if<spec::Gaussian>(&s)) {
    if (!(g->sigma > 0.0)) throw ConfigError(std::string(what) + ": Gaussian sigma must be positive");
  } else if (const auto* m = std::get_if<spec::Mixture>(&s)) {
    try {
      [[maybe_unused]] const SkewMixtureTarget t(m->components);
    } catch (const DomainError& e) {
      throw ConfigError(std::string(what) + ": " + e.what());
    }
  } else {
    const auto& gr = std::get<spec::Grid>(s);
    if (!(gr.lo < gr.hi)) throw ConfigError(std::string(what) + ": grid needs lo < hi");
    if (gr.log_values.size() < 2) throw ConfigError(std::string(what) + ": grid needs at least two log_values");
  }
}

}  // namespace detail

/// JSON schema:
///   {"kind": "gaussian", "mu": m, "sigma": s}
///   {"kind": "mixture", "components": [{"weight", "location", "scale", "shape"}, ...]}
///   {"kind": "mixture", "preset": "skew-pair"}
///   {"kind": "grid", "lo": a, "hi": b, "n": n, "log_values": [...]}
inline DensitySpec density_from_json(const Json& j, std::string_view what = "density spec") {
  if (!j.is_object() || !j.contains("kind") || !j["kind"].is_string())
    throw ConfigError(std::string(what) + ": expected an object with a string 'kind'");
  const std::string kind = j["kind"].get<std::string>();
  DensitySpec out;
  if (kind == "gaussian") {
    out = spec::Gaussian{detail::number_field(j, "mu", what), detail::number_field(j, "sigma", what)};
  } else if (kind == "mixture") {
    spec::Mixture m;
    if (j.contains("preset")) {
      if (j["preset"] != "skew-pair") throw ConfigError(std::string(what) + ": unknown mixture preset");
      m.components = SkewMixtureTarget::default_skew_pair().components();
    } else {
      if (!j.contains("components") || !j["components"].is_array())
        throw ConfigError(std::string(what) + ": mixture needs a 'components' array");
      for (const auto& c : j["components"]) {
        SkewComponent sc{detail::number_field(c, "weight", what), detail::number_field(c, "location", what),
                         detail::number_field(c, "scale", what), 0.0};
        if (c.contains("shape")) sc.shape = detail::number_field(c, "shape", what);
        m.components.push_back(sc);
      }
    }
    out = std::move(m);
  } else if (kind == "grid") {
    spec::Grid g{detail::number_field(j, "lo", what), detail::number_field(j, "hi", what), {}};
    if (!j.contains("log_values") || !j["log_values"].is_array())
      throw ConfigError(std::string(what) + ": grid needs a 'log_values' array");
    for (const auto& v : j["log_values"]) {
      if (!v.is_number()) throw ConfigError(std::string(what) + ": log_values must be numbers");
      g.log_values.push_back(v.get<double>());
    }
    if (j.contains("n") && detail::number_field(j, "n", what) != static_cast<double>(g.log_values.size()))
      throw ConfigError(std::string(what) + ": 'n' differs from the number of log_values");
    out = std::move(g);
  } else {
    throw ConfigError(std::string(what) + ": unknown kind '" + kind + "' (expected gaussian, mixture or grid)");
  }
  detail::check(out, what);
  return out;
}

inline Json to_json(const DensitySpec& s) {
  Json j;
  if (const auto* g = std::get_if<spec::Gaussian>(&s)) {
    j["kind"] = "gaussian";
    j["mu"] = g->mu;
    j["sigma"] = g->sigma;
  } else if (const auto* m = std::get_if<spec::Mixture>(&s)) {
    j["kind"] = "mixture";
    j["components"] = Json::array();
    for (const auto& c : m->components)
      j["components"].push_back(Json{{"weight", c.weight}, {"location", c.location}, {"scale", c.scale},
                                     {"shape", c.shape}});
  } else {
    const auto& g = std::get<spec::Grid>(s);
    j["kind"] = "grid";
    j["lo"] = g.lo;
    j["hi"] = g.hi;
    j["n"] = g.log_values.size();
    j["log_values"] = g.log_values;
  }
  return j;
}

/// Accepts "gaussian:MU,SIGMA", "mixture:skew-pair", inline JSON, or the path
/// of a JSON file.
inline DensitySpec parse_density_spec(std::string_view text, std::string_view what = "density spec") {
  if (text.starts_with("gaussian:")) {
    const std::string_view rest = text.substr(9);
    const auto comma = rest.find(',');
    if (comma == std::string_view::npos || rest.find(',', comma + 1) != std::string_view::npos)
      throw ConfigError(std::string(what) + ": expected gaussian:MU,SIGMA");
    spec::Gaussian g{detail::parse_number(rest.substr(0, comma), what),
                     detail::parse_number(rest.substr(comma + 1), what)};
    detail::check(g, what);
    return g;
  }
  if (text == "mixture:skew-pair") return spec::Mixture{SkewMixtureTarget::default_skew_pair().components()};
  if (!text.empty() && text.front() == '{') return density_from_json(parse_json(text, what), what);
  if (text.ends_with(".json")) return density_from_json(parse_json(read_file(std::string(text)), what), what);
  throw ConfigError(std::string(what) + ": cannot interpret '" + std::string(text) +
                    "' (use gaussian:MU,SIGMA, mixture:skew-pair, inline JSON, or a .json file)");
}

inline double log_density(const DensitySpec& s, double x) {
  if (const auto* g = std::get_if<spec::Gaussian>(&s)) return normal_log_pdf(x, g->mu, g->sigma);
  if (const auto* m = std::get_if<spec::Mixture>(&s)) return SkewMixtureTarget(m->components).log_pdf(x);
  throw DomainError("grid densities are only defined at their nodes");
}

/// Tabulates one density on its own effective support.
inline GridDensity tabulate(const DensitySpec& s, std::size_t n = kDefaultGridSize) {
  if (const auto* g = std::get_if<spec::Gaussian>(&s)) return tabulate_gaussian({g->mu, g->sigma}, g->mu - 10 * g->sigma,
                                                                                g->mu + 10 * g->sigma, n);
  if (const auto* m = std::get_if<spec::Mixture>(&s)) return SkewMixtureTarget(m->components).tabulate(n);
  const auto& gr = std::get<spec::Grid>(s);
  const std::size_t count = gr.log_values.size();
  return GridDensity::tabulate(gr.lo, gr.hi, count, [&](double x) {
    const auto i = static_cast<std::size_t>(std::llround((x - gr.lo) / (gr.hi - gr.lo) * static_cast<double>(count - 1)));
    return gr.log_values[std::min(i, count - 1)];
  });
}

/// Tabulates p and q on one shared grid: the grid of a grid-kind spec if
/// there is one (both grid specs must then agree), otherwise the union of
/// the +-10 scale brackets with n nodes.
inline std::pair<GridDensity, GridDensity> tabulate_pair(const DensitySpec& p, const DensitySpec& q,
                                                         std::size_t n = kDefaultGridSize) {
  const auto* gp = std::get_if<spec::Grid>(&p);
  const auto* gq = std::get_if<spec::Grid>(&q);
  if (gp && gq) {
    if (gp->lo != gq->lo || gp->hi != gq->hi || gp->log_values.size() != gq->log_values.size())
      throw ConfigError("grid densities p and q must share lo, hi and n");
    return {tabulate(p), tabulate(q)};
  }
  if (gp || gq) {
    const GridDensity base = tabulate(gp ? p : q);
    const DensitySpec& other = gp ? q : p;
    const GridDensity o = base.retabulate([&](double x) { return log_density(other, x); });
    return gp ? std::pair{base, o} : std::pair{o, base};
  }
  auto bracket = [](const DensitySpec& s) -> std::pair<double, double> {
    if (const auto* g = std::get_if<spec::Gaussian>(&s)) return {g->mu - 10 * g->sigma, g->mu + 10 * g->sigma};
    return SkewMixtureTarget(std::get<spec::Mixture>(s).components).bracket();
  };
  const auto [lp, hp] = bracket(p);
  const auto [lq, hq] = bracket(q);
  const double lo = std::min(lp, lq);
  const double hi = std::max(hp, hq);
  return {GridDensity::tabulate(lo, hi, n, [&](double x) { return log_density(p, x); }),
          GridDensity::tabulate(lo, hi, n, [&](double x) { return log_density(q, x); })};
}

// ---------------------------------------------------------------------------
// Result serialization
// ---------------------------------------------------------------------------

inline Json params_json(double alpha, double beta) {
  return Json{{"alpha", alpha}, {"beta", beta}, {"lambda", alpha + beta}};
}

inline Json mean_std_json(const MeanStd& m) { return Json{{"mean", m.mean}, {"std", m.std}, {"count", m.count}}; }

inline Json adam_json(const AdamConfig& c) {
  return Json{{"learning_rate", c.learning_rate}, {"beta1", c.beta1}, {"beta2", c.beta2},
              {"epsilon", c.epsilon},             {"steps", c.steps}};
}

inline AdamConfig adam_from_json(const Json& j) {
  AdamConfig c;
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.beta1 = j.value("beta1", c.beta1);
  c.beta2 = j.value("beta2", c.beta2);
  c.epsilon = j.value("epsilon", c.epsilon);
  c.steps = j.value("steps", c.steps);
  return c;
}

inline Json train_report_json(const TrainReport& r) {
  Json j;
  j["params"] = params_json(r.alpha, r.beta);
  j["mc"] = Json{{"K", r.mc.K}, {"seed", r.mc.seed}};
  j["optimizer"] = adam_json(r.opt);
  j["final_mu"] = std::vector<double>(r.final.mu.data(), r.final.mu.data() + r.final.mu.size());
  j["final_log_sigma"] =
      std::vector<double>(r.final.log_sigma.data(), r.final.log_sigma.data() + r.final.log_sigma.size());
  j["final_objective"] = r.trace.empty() ? Json(nullptr) : Json(r.trace.back());
  j["skipped_steps"] = r.skipped_steps;
  return j;
}

inline Json toy_config_json(const ToyConfig& c) {
  return Json{{"n_train", c.n_train},         {"input_dim", c.input_dim},       {"p_outliers", c.p_outliers},
              {"n_test", c.n_test},           {"prior_w_sigma", c.prior_w_sigma}, {"prior_b_sigma", c.prior_b_sigma},
              {"noise_sigma", c.noise_sigma}, {"mc_samples", c.mc_samples},     {"optimizer", adam_json(c.opt)},
              {"workers", c.workers}};
}

inline ToyConfig toy_config_from_json(const Json& j) {
  ToyConfig c;
  c.n_train = j.value("n_train", c.n_train);
  c.input_dim = j.value("input_dim", c.input_dim);
  c.p_outliers = j.value("p_outliers", c.p_outliers);
  c.n_test = j.value("n_test", c.n_test);
  c.prior_w_sigma = j.value("prior_w_sigma", c.prior_w_sigma);
  c.prior_b_sigma = j.value("prior_b_sigma", c.prior_b_sigma);
  c.noise_sigma = j.value("noise_sigma", c.noise_sigma);
  c.mc_samples = j.value("mc_samples", c.mc_samples);
  if (j.contains("optimizer")) c.opt = adam_from_json(j["optimizer"]);
  c.workers = j.value("workers", c.workers);
  return c;
}

inline Json toy_table_json(const ToyTable& t) {
  Json j;
  j["rows"] = Json::array();
  for (const auto& row : t.rows) {
    // Settings are given as (lambda, beta): report lambda as given.
    Json r{{"alpha", row.alpha}, {"beta", row.setting.beta}, {"lambda", row.setting.lambda}};
    r["kl_path"] = is_kl_point(row.setting.params());
    r["mae"] = mean_std_json(row.mae);
    r["mse"] = mean_std_json(row.mse);
    r["runs"] = Json::array();
    for (const auto& run : row.runs)
      r["runs"].push_back(Json{{"seed", run.seed}, {"mae", run.test.mae}, {"mse", run.test.mse}});
    j["rows"].push_back(std::move(r));
  }
  return j;
}

/// One row per setting.
inline CsvTable toy_table_csv(const ToyTable& t) {
  CsvTable csv({"lambda", "beta", "alpha", "mae_mean", "mae_std", "mse_mean", "mse_std", "runs"});
  for (const auto& r : t.rows)
    csv.add({r.setting.lambda, r.setting.beta, r.alpha, r.mae.mean, r.mae.std, r.mse.mean, r.mse.std,
             static_cast<long long>(r.runs.size())});
  return csv;
}

/// One row per (setting, seed).
inline CsvTable toy_runs_csv(const ToyTable& t) {
  CsvTable csv({"lambda", "beta", "seed", "mae", "mse", "skipped_steps", "final_objective"});
  for (const auto& r : t.rows)
    for (const auto& run : r.runs)
      csv.add({r.setting.lambda, r.setting.beta, std::to_string(run.seed), run.test.mae, run.test.mse,
               static_cast<long long>(run.report.skipped_steps),
               run.report.trace.empty() ? std::numeric_limits<double>::quiet_NaN() : run.report.trace.back()});
  return csv;
}

inline Json grid_json(const GridSearchSpec& g) {
  return Json{{"alpha_min", g.alpha_min}, {"alpha_max", g.alpha_max}, {"beta_min", g.beta_min},
              {"beta_max", g.beta_max},   {"step", g.step},           {"include_kl", g.include_kl}};
}

inline GridSearchSpec grid_from_json(const Json& j) {
  GridSearchSpec g;
  g.alpha_min = j.value("alpha_min", g.alpha_min);
  g.alpha_max = j.value("alpha_max", g.alpha_max);
  g.beta_min = j.value("beta_min", g.beta_min);
  g.beta_max = j.value("beta_max", g.beta_max);
  g.step = j.value("step", g.step);
  g.include_kl = j.value("include_kl", g.include_kl);
  return g;
}

inline Json cv_config_json(const CVConfig& c) {
  return Json{{"outer_folds", c.outer_folds},
              {"inner_folds", c.inner_folds},
              {"hidden_layers", c.hidden_layers},
              {"prior_sigma", c.prior_sigma},
              {"noise_sigma", c.noise_sigma},
              {"learn_noise", c.learn_noise},
              {"mc_samples", c.mc_samples},
              {"optimizer", adam_json(c.opt)},
              {"predictive_draws", c.predictive_draws},
              {"p_outliers", c.p_outliers},
              {"clean_validation", c.clean_validation},
              {"workers", c.workers}};
}

inline CVConfig cv_config_from_json(const Json& j) {
  CVConfig c;
  c.outer_folds = j.value("outer_folds", c.outer_folds);
  c.inner_folds = j.value("inner_folds", c.inner_folds);
  c.hidden_layers = j.value("hidden_layers", c.hidden_layers);
  c.prior_sigma = j.value("prior_sigma", c.prior_sigma);
  c.noise_sigma = j.value("noise_sigma", c.noise_sigma);
  c.learn_noise = j.value("learn_noise", c.learn_noise);
  c.mc_samples = j.value("mc_samples", c.mc_samples);
  if (j.contains("optimizer")) c.opt = adam_from_json(j["optimizer"]);
  c.predictive_draws = j.value("predictive_draws", c.predictive_draws);
  c.p_outliers = j.value("p_outliers", c.p_outliers);
  c.clean_validation = j.value("clean_validation", c.clean_validation);
  c.workers = j.value("workers", c.workers);
  return c;
}

inline Json cv_report_json(const CVReport& r) {
  Json j;
  j["seed"] = r.seed;
  j["selected"] = params_json(r.selected_alpha, r.selected_beta);
  j["test_rmse"] = mean_std_json(r.test_rmse);
  j["kl_test_rmse"] = mean_std_json(r.kl_test_rmse);
  j["folds"] = Json::array();
  for (const auto& f : r.folds) {
    Json fj;
    fj["fold"] = f.fold;
    fj["train_size"] = f.train_size;
    fj["test_size"] = f.test_size;
    fj["selected"] = params_json(f.selected_alpha, f.selected_beta);
    fj["selected_validation_rmse"] = f.selected_validation_rmse;
    fj["test_rmse"] = f.test_rmse;
    fj["kl_test_rmse"] = f.kl_test_rmse;
    j["folds"].push_back(std::move(fj));
  }
  j["cells"] = Json::array();
  for (const auto& c : r.cells) {
    Json cj = params_json(c.alpha, c.beta);
    cj["validation_rmse"] = mean_std_json(c.validation_rmse);
    cj["failures"] = c.failures;
    cj["excluded_somewhere"] = c.excluded_somewhere;
    j["cells"].push_back(std::move(cj));
  }
  j["warnings"] = r.warnings;
  return j;
}

/// One row per grid cell.
inline CsvTable cv_cells_csv(const CVReport& r) {
  CsvTable csv({"alpha", "beta", "lambda", "val_rmse_mean", "val_rmse_std", "fits", "failures"});
  for (const auto& c : r.cells)
    csv.add({c.alpha, c.beta, c.alpha + c.beta, c.validation_rmse.mean, c.validation_rmse.std,
             static_cast<long long>(c.validation_rmse.count), static_cast<long long>(c.failures)});
  return csv;
}

/// Plot data for the validation heatmap: alpha, beta, mean RMSE.
inline CsvTable cv_heatmap_csv(const CVReport& r) {
  CsvTable csv({"alpha", "beta", "mean_rmse"});
  for (const auto& c : r.cells) csv.add({c.alpha, c.beta, c.validation_rmse.mean});
  return csv;
}

/// One row per outer fold.
inline CsvTable cv_folds_csv(const CVReport& r) {
  CsvTable csv({"fold", "selected_alpha", "selected_beta", "selected_lambda", "selected_val_rmse", "test_rmse",
                "kl_test_rmse"});
  for (const auto& f : r.folds)
    csv.add({static_cast<long long>(f.fold), f.selected_alpha, f.selected_beta, f.selected_alpha + f.selected_beta,
             f.selected_validation_rmse, f.test_rmse, f.kl_test_rmse});
  return csv;
}

inline Json fit_result_json(const FitResult& r) {
  return Json{{"mu", r.final.mu},
              {"sigma", r.final.sigma()},
              {"log_sigma", r.final.log_sigma},
              {"final_divergence", r.divergence_trace.empty() ? Json(nullptr) : Json(r.divergence_trace.back())},
              {"converged", r.converged},
              {"iterations", r.iterations}};
}

/// Two columns: iteration, divergence.
inline CsvTable trace_csv(const std::vector<double>& trace) {
  CsvTable csv({"iteration", "divergence"});
  for (std::size_t i = 0; i < trace.size(); ++i) csv.add({static_cast<long long>(i), trace[i]});
  return csv;
}

/// Target and fitted densities on the target grid.
inline CsvTable density_plot_csv(const GridDensity& target, const Gaussian1D& fitted) {
  CsvTable csv({"x", "target_pdf", "fitted_pdf"});
  for (std::size_t i = 0; i < target.size(); ++i) {
    const double x = target.node(i);
    csv.add({x, std::exp(target.log_value(i)), std::exp(fitted.log_pdf(x))});
  }
  return csv;
}

}  // namespace sabvi::io
