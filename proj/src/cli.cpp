#include "eslasso/cli.hpp"

#include "eslasso/coes.hpp"
#include "eslasso/csv.hpp"
#include "eslasso/errors.hpp"
#include "eslasso/es.hpp"
#include "eslasso/features.hpp"
#include "eslasso/model_selection.hpp"
#include "eslasso/parallel.hpp"
#include "eslasso/quantile.hpp"
#include "eslasso/simulation.hpp"
#include "eslasso/tailbound.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>

namespace eslasso {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

class ConfigError : public InvalidArgument {
 public:
  using InvalidArgument::InvalidArgument;
};

struct GlobalOptions {
  std::string config;
  std::string out = ".";
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  bool verbose = false;
};

struct Context {
  GlobalOptions opts;
  json config;
  fs::path config_dir;
  fs::path out_dir;
  int threads = 1;
  std::ostream* log = nullptr;

  void note(const std::string& msg) const {
    if (opts.verbose) *log << msg << '\n';
  }
};

// Rejects keys the command does not understand, so typos fail loudly.
void allow_keys(const json& j, const std::string& where, std::initializer_list<const char*> keys) {
  if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
  const std::set<std::string> allowed(keys.begin(), keys.end());
  for (const auto& item : j.items()) {
    if (!allowed.count(item.key())) throw ConfigError("unknown key '" + item.key() + "' in " + where);
  }
}

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(std::string("config key '") + key + "' has the wrong type");
  }
}

json load_config(const std::string& path) {
  if (path.empty()) throw ConfigError("--config is required");
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path + "'");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config '" + path + "' is not valid JSON: " + e.what());
  }
}

fs::path resolve_path(const Context& ctx, const std::string& p) {
  fs::path path(p);
  return path.is_absolute() ? path : ctx.config_dir / path;
}

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  out << j.dump(2) << '\n';
}

void write_manifest(const Context& ctx, const std::string& command, const json& resolved,
                    const std::vector<std::string>& outputs) {
  json m{{"tool", "eslasso"},
         {"version", ESLASSO_VERSION},
         {"command", command},
         {"config", resolved},
         {"outputs", outputs},
         {"threads", ctx.threads},
         {"timestamp", utc_timestamp()}};
  write_json(ctx.out_dir / "manifest.json", m);
}

std::uint64_t seed_of(const Context& ctx, std::uint64_t fallback) { return ctx.opts.seed.value_or(fallback); }

TwoStageSettings cv_settings(const json& j, int threads) {
  TwoStageSettings s;
  allow_keys(j, "cv", {"folds", "nu_grid_size", "lambda_grid_size", "grid_ratio"});
  s.folds = get_or(j, "folds", s.folds);
  s.nu_grid_size = get_or(j, "nu_grid_size", s.nu_grid_size);
  s.lambda_grid_size = get_or(j, "lambda_grid_size", s.lambda_grid_size);
  s.grid_ratio = get_or(j, "grid_ratio", s.grid_ratio);
  if (s.folds < 2 || s.nu_grid_size < 1 || s.lambda_grid_size < 1 || !(s.grid_ratio > 0.0 && s.grid_ratio <= 1.0)) {
    throw ConfigError("cv settings need folds >= 2, grid sizes >= 1 and grid_ratio in (0, 1]");
  }
  s.threads = threads;
  return s;
}

json cv_settings_json(const TwoStageSettings& s) {
  return json{{"folds", s.folds},
              {"nu_grid_size", s.nu_grid_size},
              {"lambda_grid_size", s.lambda_grid_size},
              {"grid_ratio", s.grid_ratio}};
}

// ---------------------------------------------------------------- simulate

int cmd_simulate(Context& ctx) {
  const json& c = ctx.config;
  allow_keys(c, "simulate config", {"simulation", "reps", "estimators", "K", "tau", "sigma_nu", "T", "cv",
                                    "write_replications"});
  allow_keys(c.value("simulation", json::object()), "simulation",
             {"T", "d", "K", "s0", "tau", "sigma_nu", "rho", "theta", "seed"});
  SimulationConfig base = c.value("simulation", json::object()).get<SimulationConfig>();
  base.seed = seed_of(ctx, base.seed);
  const int reps = get_or(c, "reps", 100);
  if (reps < 1) throw ConfigError("reps must be at least 1");
  const auto estimators = get_or(c, "estimators", std::vector<std::string>{"penalized", "unpenalized"});
  const auto ks = get_or(c, "K", std::vector<int>{base.K});
  const auto taus = get_or(c, "tau", std::vector<double>{base.tau});
  const auto sigmas = get_or(c, "sigma_nu", std::vector<double>{base.sigma_nu});
  const auto ts = get_or(c, "T", std::vector<Index>{base.T});
  const bool write_reps = get_or(c, "write_replications", false);
  MonteCarloOptions mc;
  mc.threads = ctx.threads;
  mc.cv = cv_settings(c.value("cv", json::object()), 1);
  for (const std::string& e : estimators) {
    if (e != "penalized" && e != "unpenalized") throw ConfigError("estimators must be 'penalized' or 'unpenalized'");
  }

  std::vector<MonteCarloSummary> summaries;
  std::vector<std::string> outputs{"summary.csv"};
  for (double tau : taus) {
    for (int k : ks) {
      for (double sigma : sigmas) {
        for (Index t : ts) {
          for (const std::string& e : estimators) {
            SimulationConfig cfg = base;
            cfg.tau = tau;
            cfg.K = k;
            cfg.sigma_nu = sigma;
            cfg.T = t;
            cfg.validate();
            ctx.note("simulate: tau=" + format_number(tau) + " K=" + std::to_string(k) + " sigma_nu=" +
                     format_number(sigma) + " T=" + std::to_string(t) + " " + e);
            summaries.push_back(run_monte_carlo(cfg, reps, e == "penalized", mc));
            if (write_reps) {
              const std::string name = "replications_" + std::to_string(summaries.size()) + ".csv";
              write_replications_csv(ctx.out_dir / name, summaries.back());
              outputs.push_back(name);
            }
          }
        }
      }
    }
  }
  write_summary_csv(ctx.out_dir / "summary.csv", summaries);
  json resolved{{"simulation", base},  {"reps", reps}, {"estimators", estimators}, {"K", ks},
                {"tau", taus},         {"sigma_nu", sigmas}, {"T", ts}, {"cv", cv_settings_json(mc.cv)},
                {"write_replications", write_reps}};
  write_manifest(ctx, "simulate", resolved, outputs);
  int failures = 0;
  for (const auto& s : summaries) failures += s.failures;
  if (failures > 0) {
    *ctx.log << "simulate: " << failures << " replication(s) failed\n";
    return kExitNumerical;
  }
  return kExitOk;
}

// ---------------------------------------------------------------- fit / cv

struct RegressionData {
  DesignMatrix x;
  Eigen::VectorXd y;
  json design;
};

RegressionData load_regression(const Context& ctx, const json& c) {
  if (!c.contains("data")) throw ConfigError("config needs 'data' (CSV path)");
  const fs::path path = resolve_path(ctx, c.at("data").get<std::string>());
  const CsvTable table = read_csv(path);
  const std::string response = get_or(c, "response", std::string("y"));
  std::vector<std::string> regressors = get_or(c, "regressors", std::vector<std::string>{});
  if (regressors.empty()) {
    for (const std::string& h : table.header) {
      if (h != response) regressors.push_back(h);
    }
  }
  std::vector<std::string> cols{response};
  cols.insert(cols.end(), regressors.begin(), regressors.end());
  std::vector<std::size_t> idx;
  for (const std::string& name : cols) idx.push_back(table.require(name));
  const Index n = static_cast<Index>(table.rows.size());
  Eigen::MatrixXd m(n, static_cast<Index>(idx.size()));
  for (Index i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < idx.size(); ++j) {
      const auto v = parse_number(table.rows[static_cast<std::size_t>(i)][idx[j]]);
      if (!v) {
        throw DataError(path.string() + ": missing value in row " + std::to_string(i + 2) + ", column '" + cols[j] +
                        "'");
      }
      m(i, static_cast<Index>(j)) = *v;
    }
  }
  if (n < 2) throw DataError(path.string() + ": need at least two rows");
  RegressionData out;
  out.y = m.col(0);
  const Eigen::MatrixXd raw = m.rightCols(m.cols() - 1);
  const int degree = get_or(c, "degree", 0);
  if (degree > 0) {
    DictionaryFit fit = build_dictionary(raw, degree);
    out.x = std::move(fit.design);
    out.design = json{{"kind", "chebyshev"}, {"dictionary", fit.dictionary}, {"regressors", regressors}};
  } else {
    Eigen::MatrixXd x(n, raw.cols() + 1);
    x.col(0).setOnes();
    x.rightCols(raw.cols()) = raw;
    out.x = DesignMatrix(std::move(x), true);
    out.design = json{{"kind", "linear"}, {"regressors", regressors}};
  }
  return out;
}

// Number, "cv", or "max" (the smallest penalty giving the zero solution).
std::string penalty_kind(const json& v, const char* key) {
  if (v.is_number()) {
    if (!(v.get<double>() >= 0.0)) throw ConfigError(std::string(key) + " must be nonnegative");
    return "value";
  }
  if (v.is_string() && (v == "cv" || v == "max")) return v.get<std::string>();
  throw ConfigError(std::string(key) + " must be a number, \"cv\" or \"max\"");
}

std::vector<std::string> vector_to_fields(const Eigen::VectorXd& v, Index row) {
  return {std::to_string(row + 1), format_number(v(row))};
}

int cmd_fit(Context& ctx, const std::string& kind) {
  const json& c = ctx.config;
  allow_keys(c, "fit config", {"data", "response", "regressors", "degree", "tau", "penalty", "quantile_penalty", "cv",
                               "max_iterations", "max_sweeps"});
  const double tau = get_or(c, "tau", 0.1);
  if (!(tau > 0.0 && tau < 1.0)) throw ConfigError("tau must lie in (0, 1)");
  const RegressionData data = load_regression(ctx, c);
  TwoStageSettings cv = cv_settings(c.value("cv", json::object()), ctx.threads);
  cv.quantile_options.max_iterations = get_or(c, "max_iterations", cv.quantile_options.max_iterations);
  cv.es_options.max_sweeps = get_or(c, "max_sweeps", cv.es_options.max_sweeps);

  const auto select_nu = [&](const json& spec) {
    const std::string k = penalty_kind(spec, "quantile penalty");
    if (k == "value") return spec.get<double>();
    const double nu_max = quantile_penalty_max(data.x, data.y, tau);
    if (k == "max") return nu_max;
    const std::vector<double> grid = geometric_grid(nu_max, cv.grid_ratio, cv.nu_grid_size);
    return cross_validate(quantile_path_fitter(tau, cv.quantile_options), quantile_scorer(tau), data.x, data.y, grid,
                          blocked_folds(data.x.rows(), cv.folds), ctx.threads)
        .chosen;
  };

  json result{{"tau", tau}, {"design", data.design}, {"response_inf_norm", data.y.cwiseAbs().maxCoeff()}};
  std::vector<std::string> outputs{"fit.json", "predictions.csv"};
  std::vector<std::vector<std::string>> rows;
  if (kind == "quantile") {
    const json spec = c.value("penalty", json("cv"));
    const double nu = select_nu(spec);
    ctx.note("fit quantile: nu=" + format_number(nu));
    const QuantileFit fit = fit_penalized_quantile(data.x, data.y, tau, nu, cv.quantile_options);
    result["quantile"] = fit;
    const Eigen::VectorXd pred = predict_quantile(fit, data.x);
    for (Index t = 0; t < pred.size(); ++t) rows.push_back(vector_to_fields(pred, t));
    write_csv(ctx.out_dir / "predictions.csv", {"row", "quantile"}, rows);
  } else {
    const json qspec = c.value("quantile_penalty", json("cv"));
    const double nu = select_nu(qspec);
    const QuantileFit q = fit_penalized_quantile(data.x, data.y, tau, nu, cv.quantile_options);
    const AuxiliaryResponse aux = auxiliary_response(data.y, predict_quantile(q, data.x), tau);
    const json spec = c.value("penalty", json("cv"));
    const std::string k = penalty_kind(spec, "penalty");
    const double lambda_max = es_lambda_max(data.x, aux.values);
    double lambda = 0.0;
    if (k == "value") lambda = spec.get<double>();
    else if (k == "max") lambda = lambda_max;
    else {
      const std::vector<double> grid = geometric_grid(lambda_max, cv.grid_ratio, cv.lambda_grid_size);
      lambda = cross_validate(es_path_fitter(tau, nu, cv.quantile_options, cv.es_options), es_scorer(tau), data.x,
                              data.y, grid, blocked_folds(data.x.rows(), cv.folds), ctx.threads)
                   .chosen;
    }
    ctx.note("fit es: nu=" + format_number(nu) + " lambda=" + format_number(lambda));
    const ESFit fit = fit_es_lasso(data.x, aux, lambda, cv.es_options);
    result["quantile"] = q;
    result["es"] = fit;
    result["lambda_max"] = lambda_max;
    const Eigen::VectorXd qp = predict_quantile(q, data.x);
    const Eigen::VectorXd ep = predict_es(fit, data.x);
    for (Index t = 0; t < ep.size(); ++t) {
      rows.push_back({std::to_string(t + 1), format_number(qp(t)), format_number(aux.values(t)), format_number(ep(t))});
    }
    write_csv(ctx.out_dir / "predictions.csv", {"row", "quantile", "auxiliary", "es"}, rows);
    write_auxiliary_csv(ctx.out_dir / "auxiliary.csv", data.y, aux);
    outputs.push_back("auxiliary.csv");
  }
  write_json(ctx.out_dir / "fit.json", result);
  json resolved = c;
  resolved["cv"] = cv_settings_json(cv);
  write_manifest(ctx, "fit " + kind, resolved, outputs);
  return kExitOk;
}

int cmd_cv(Context& ctx) {
  const json& c = ctx.config;
  allow_keys(c, "cv config", {"data", "response", "regressors", "degree", "tau", "cv"});
  const double tau = get_or(c, "tau", 0.1);
  if (!(tau > 0.0 && tau < 1.0)) throw ConfigError("tau must lie in (0, 1)");
  const RegressionData data = load_regression(ctx, c);
  const TwoStageSettings cv = cv_settings(c.value("cv", json::object()), ctx.threads);
  const TwoStageResult r = two_stage_cv(data.x, data.y, tau, cv);
  write_loss_table(ctx.out_dir / "nu_losses.csv", r.nu_cv);
  write_loss_table(ctx.out_dir / "lambda_losses.csv", r.lambda_cv);
  json sel{{"tau", tau},
           {"nu", r.nu_cv.chosen},
           {"nu_index", r.nu_cv.chosen_index},
           {"lambda", r.lambda_cv.chosen},
           {"lambda_index", r.lambda_cv.chosen_index},
           {"quantile", r.quantile},
           {"es", r.es}};
  write_json(ctx.out_dir / "selection.json", sel);
  json resolved = c;
  resolved["cv"] = cv_settings_json(cv);
  write_manifest(ctx, "cv", resolved, {"nu_losses.csv", "lambda_losses.csv", "selection.json"});
  return kExitOk;
}

// ---------------------------------------------------------------- coes

int cmd_coes(Context& ctx) {
  const json& c = ctx.config;
  allow_keys(c, "coes config", {"data", "columns", "synthetic", "tau", "K", "train", "test", "penalties", "cv"});
  const double tau = get_or(c, "tau", 0.05);
  if (!(tau > 0.0 && tau <= 0.5)) throw ConfigError("tau must lie in (0, 0.5]");
  const std::vector<int> ks = get_or(c, "K", std::vector<int>{1, 3});
  if (ks.empty()) throw ConfigError("K list is empty");

  std::vector<std::pair<std::string, Panel>> panels;
  json resolved = c;
  if (c.contains("data")) {
    const json cols = c.value("columns", json::object());
    allow_keys(cols, "columns", {"date", "market", "industry", "state"});
    PanelColumns pc;
    pc.date = get_or(cols, "date", pc.date);
    pc.market = get_or(cols, "market", std::string());
    pc.industry = get_or(cols, "industry", std::string());
    pc.state = get_or(cols, "state", std::vector<std::string>{});
    Panel p = load_panel(resolve_path(ctx, c.at("data").get<std::string>()), pc);
    ctx.note("coes: " + std::to_string(p.rows()) + " rows, " + std::to_string(p.dropped_rows) + " dropped");
    panels.emplace_back("data", std::move(p));
  } else if (c.contains("synthetic")) {
    const json& s = c.at("synthetic");
    allow_keys(s, "synthetic", {"simulation", "count"});
    SimulationConfig cfg = s.value("simulation", json::object()).get<SimulationConfig>();
    cfg.seed = seed_of(ctx, cfg.seed);
    const int count = get_or(s, "count", 1);
    if (count < 1) throw ConfigError("synthetic count must be at least 1");
    for (int i = 0; i < count; ++i) {
      SimulationConfig ci = cfg;
      ci.seed = make_rng(cfg.seed, static_cast<std::uint64_t>(i) + 1)();
      panels.emplace_back("synthetic_" + std::to_string(i + 1), synthetic_panel(ci));
    }
    resolved["synthetic"]["simulation"] = cfg;
    resolved["synthetic"]["count"] = count;
  } else {
    throw ConfigError("coes config needs 'data' or 'synthetic'");
  }

  CoesPenalties pen;
  pen.cv = cv_settings(c.value("cv", json::object()), 1);
  const json pspec = c.value("penalties", json("cv"));
  if (pspec.is_string() && pspec == "cv") {
    pen.cross_validate = true;
  } else if (pspec.is_object()) {
    allow_keys(pspec, "penalties", {"nu_industry", "nu_median", "nu_market", "lambda_market"});
    pen.cross_validate = false;
    pen.nu_industry = get_or(pspec, "nu_industry", 0.0);
    pen.nu_median = get_or(pspec, "nu_median", 0.0);
    pen.nu_market = get_or(pspec, "nu_market", 0.0);
    pen.lambda_market = get_or(pspec, "lambda_market", 0.0);
  } else {
    throw ConfigError("penalties must be \"cv\" or an object of fixed values");
  }

  struct Job {
    std::size_t panel;
    int K;
  };
  std::vector<Job> jobs;
  for (std::size_t i = 0; i < panels.size(); ++i) {
    for (int k : ks) jobs.push_back({i, k});
  }
  std::vector<CoesReport> reports(jobs.size());
  std::vector<CoesPrediction> series(jobs.size());
  std::vector<Panel> tests(panels.size());
  std::vector<Index> train_sizes(panels.size());
  for (std::size_t i = 0; i < panels.size(); ++i) {
    const Index n = panels[i].second.rows();
    const Index train = get_or(c, "train", n / 2);
    const Index test = get_or(c, "test", n - train);
    if (train < 2 || test < 1 || train + test > n) {
      throw ConfigError("train/test sizes do not fit the panel (" + std::to_string(n) + " rows)");
    }
    train_sizes[i] = train;
    tests[i] = panels[i].second.slice(train, train + test);
  }
  parallel_for(jobs.size(), ctx.threads, [&](std::size_t j) {
    const Panel train = panels[jobs[j].panel].second.slice(0, train_sizes[jobs[j].panel]);
    const CoESModel model = fit_coes(train, tau, jobs[j].K, pen);
    reports[j] = evaluate_out_of_sample(model, tests[jobs[j].panel]);
    series[j] = coes_predict(model, tests[jobs[j].panel]);
  });
  std::vector<std::string> labels;
  std::vector<std::string> outputs{"report.csv"};
  for (std::size_t j = 0; j < jobs.size(); ++j) {
    labels.push_back(panels[jobs[j].panel].first);
    const std::string name = "series_" + panels[jobs[j].panel].first + "_K" + std::to_string(jobs[j].K) + ".csv";
    write_coes_series(ctx.out_dir / name, tests[jobs[j].panel], series[j]);
    outputs.push_back(name);
  }
  write_coes_report(ctx.out_dir / "report.csv", labels, reports);
  resolved["cv"] = cv_settings_json(pen.cv);
  write_manifest(ctx, "coes", resolved, outputs);
  return kExitOk;
}

// ---------------------------------------------------------------- tailbound

int cmd_tailbound(Context& ctx) {
  const json& c = ctx.config;
  allow_keys(c, "tailbound config", {"rho", "p", "T", "reps", "q", "mu_prime", "seed", "fit_grid", "check_grid",
                                     "margin_se"});
  TailExperimentSettings s;
  s.generator.rho = get_or(c, "rho", s.generator.rho);
  s.generator.p = get_or(c, "p", s.generator.p);
  s.generator.T = get_or(c, "T", s.generator.T);
  s.reps = get_or(c, "reps", s.reps);
  s.q = get_or(c, "q", s.q);
  s.mu_prime = get_or(c, "mu_prime", s.mu_prime);
  s.margin_se = get_or(c, "margin_se", s.margin_se);
  s.seed = seed_of(ctx, get_or(c, "seed", s.seed));
  s.fit_grid = get_or(c, "fit_grid", std::vector<double>{});
  s.check_grid = get_or(c, "check_grid", std::vector<double>{});
  s.threads = ctx.threads;
  if (s.fit_grid.empty() || s.check_grid.empty()) throw ConfigError("fit_grid and check_grid must be nonempty");
  if (s.reps < 1 || s.generator.p < 1 || s.generator.T < 2 || !(std::abs(s.generator.rho) < 1.0)) {
    throw ConfigError("tailbound needs reps >= 1, p >= 1, T >= 2 and |rho| < 1");
  }
  const TailExperimentResult r = empirical_tail_experiment(s);
  write_tail_csv(ctx.out_dir / "tail.csv", r);
  json rows = json::array();
  for (const TailRow& row : r.rows) {
    rows.push_back({{"u", row.u},
                    {"empirical", row.empirical},
                    {"standard_error", row.standard_error},
                    {"smoothed", row.smoothed},
                    {"bound", row.bound},
                    {"held_out", row.held_out},
                    {"low_count", row.low_count}});
  }
  write_json(ctx.out_dir / "tail.json", json{{"blocking", r.blocking},
                                             {"constants", r.constants},
                                             {"held_out_violations", r.held_out_violations},
                                             {"max_ratio", r.max_ratio},
                                             {"rows", rows}});
  json resolved{{"rho", s.generator.rho}, {"p", s.generator.p},      {"T", s.generator.T},
                {"reps", s.reps},         {"q", s.q},                {"mu_prime", s.mu_prime},
                {"seed", s.seed},         {"fit_grid", s.fit_grid},  {"check_grid", s.check_grid},
                {"margin_se", s.margin_se}};
  write_manifest(ctx, "tailbound", resolved, {"tail.csv", "tail.json"});
  return kExitOk;
}

void add_common(CLI::App* app, GlobalOptions& o) {
  app->add_option("--config", o.config, "JSON config file")->required();
  app->add_option("--out", o.out, "Output directory");
  app->add_option("--seed", o.seed, "Override the config seed");
  app->add_option("--threads", o.threads, "Worker threads (default: ESLASSO_THREADS or 1)")->check(CLI::PositiveNumber);
  app->add_flag("--verbose", o.verbose, "Progress messages on stderr");
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Penalized quantile and expected shortfall regression", "eslasso"};
  app.set_version_flag("--version", ESLASSO_VERSION);
  app.require_subcommand(1, 1);
  GlobalOptions opts;
  std::string fit_kind;
  CLI::App* simulate = app.add_subcommand("simulate", "Monte Carlo study of the estimators");
  CLI::App* fit = app.add_subcommand("fit", "Fit a quantile or ES model to a CSV");
  CLI::App* cv = app.add_subcommand("cv", "Two-stage cross-validation loss tables");
  CLI::App* coes = app.add_subcommand("coes", "CoES pipeline and out-of-sample report");
  CLI::App* tail = app.add_subcommand("tailbound", "Empirical tail study of the concentration bound");
  for (CLI::App* sub : {simulate, fit, cv, coes, tail}) add_common(sub, opts);
  fit->add_option("kind", fit_kind, "quantile or es")->required()->check(CLI::IsMember({"quantile", "es"}));

  std::vector<std::string> rest(args.size() > 1 ? args.begin() + 1 : args.end(), args.end());
  std::reverse(rest.begin(), rest.end());
  try {
    app.parse(rest);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForVersion& e) {
    out << ESLASSO_VERSION << '\n';
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      out << app.help();
      return kExitOk;
    }
    err << "eslasso: " << e.what() << '\n';
    return kExitUsage;
  }

  Context ctx;
  ctx.opts = opts;
  ctx.log = &err;
  try {
    ctx.config = load_config(opts.config);
    ctx.config_dir = fs::absolute(fs::path(opts.config)).parent_path();
    ctx.out_dir = opts.out;
    fs::create_directories(ctx.out_dir);
    ctx.threads = resolve_threads(opts.threads);
    if (simulate->parsed()) return cmd_simulate(ctx);
    if (fit->parsed()) return cmd_fit(ctx, fit_kind);
    if (cv->parsed()) return cmd_cv(ctx);
    if (coes->parsed()) return cmd_coes(ctx);
    return cmd_tailbound(ctx);
  } catch (const InvalidArgument& e) {
    err << "eslasso: " << e.what() << '\n';
    return kExitUsage;
  } catch (const DataError& e) {
    err << "eslasso: " << e.what() << '\n';
    return kExitUsage;
  } catch (const nlohmann::json::exception& e) {
    err << "eslasso: config error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const fs::filesystem_error& e) {
    err << "eslasso: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "eslasso: " << e.what() << '\n';
    return kExitNumerical;
  }
}

}  // namespace eslasso
