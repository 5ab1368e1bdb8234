#include "eslasso/coes.hpp"

#include "eslasso/csv.hpp"
#include "eslasso/errors.hpp"

#include <cmath>
#include <string>

namespace eslasso {

namespace {

// -1, 0, 1 as a < b, a == b, a > b
int compare_dates(const std::string& a, const std::string& b) {
  std::optional<double> x, y;
  try {
    x = parse_number(a);
    y = parse_number(b);
  } catch (const DataError&) {
    x.reset();
    y.reset();
  }
  if (x && y) return *x < *y ? -1 : (*x > *y ? 1 : 0);
  return a < b ? -1 : (a > b ? 1 : 0);
}

void check_dates(const std::vector<std::string>& dates) {
  for (std::size_t i = 1; i < dates.size(); ++i) {
    const int c = compare_dates(dates[i - 1], dates[i]);
    if (c == 0) throw DataError("duplicate date '" + dates[i] + "'");
    if (c > 0) throw DataError("dates are not increasing at '" + dates[i - 1] + "' -> '" + dates[i] + "'");
  }
}

Eigen::MatrixXd phi_raw(const Eigen::VectorXd& industry, const Eigen::MatrixXd& state) {
  Eigen::MatrixXd raw(state.rows(), state.cols() + 1);
  raw.col(0) = industry;
  raw.rightCols(state.cols()) = state;
  return raw;
}

template <typename F>
auto run_stage(const char* label, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const InvalidArgument& e) {
    throw InvalidArgument(std::string("stage ") + label + ": " + e.what());
  } catch (const DataError& e) {
    throw DataError(std::string("stage ") + label + ": " + e.what());
  } catch (const std::exception& e) {
    throw CoesStageError(std::string("stage ") + label + ": " + e.what());
  }
}

QuantileFit quantile_stage(const DesignMatrix& x, const Eigen::VectorXd& y, double tau, bool penalize, bool cv,
                           double fixed_nu, const TwoStageSettings& settings) {
  if (!penalize) return fit_penalized_quantile(x, y, tau, 0.0, settings.quantile_options);
  if (!cv) return fit_penalized_quantile(x, y, tau, fixed_nu, settings.quantile_options);
  const double nu_max = quantile_penalty_max(x, y, tau);
  const std::vector<double> grid = geometric_grid(nu_max, settings.grid_ratio, settings.nu_grid_size);
  const CVResult r = cross_validate(quantile_path_fitter(tau, settings.quantile_options), quantile_scorer(tau), x, y,
                                    grid, blocked_folds(x.rows(), settings.folds), settings.threads);
  return fit_penalized_quantile(x, y, tau, r.chosen, settings.quantile_options);
}

}  // namespace

Panel Panel::slice(Index begin, Index end) const {
  if (begin < 0 || end > rows() || begin >= end) throw InvalidArgument("panel slice out of range");
  Panel out;
  out.dates.assign(dates.begin() + begin, dates.begin() + end);
  out.market = market.segment(begin, end - begin);
  out.industry = industry.segment(begin, end - begin);
  out.state = state.middleRows(begin, end - begin);
  out.state_names = state_names;
  out.dropped_rows = dropped_rows;
  return out;
}

Panel make_panel(std::vector<std::string> dates, Eigen::VectorXd market, Eigen::VectorXd industry,
                 Eigen::MatrixXd lagged_state, std::vector<std::string> state_names) {
  const Index n = market.size();
  if (industry.size() != n || lagged_state.rows() != n || static_cast<Index>(dates.size()) != n) {
    throw DimensionError("panel series differ in length");
  }
  if (static_cast<Index>(state_names.size()) != lagged_state.cols()) {
    throw DimensionError("one name per state variable is required");
  }
  require_finite(market, "market return");
  require_finite(industry, "industry return");
  require_finite(lagged_state, "state variables");
  check_dates(dates);
  Panel p;
  p.dates = std::move(dates);
  p.market = std::move(market);
  p.industry = std::move(industry);
  p.state = std::move(lagged_state);
  p.state_names = std::move(state_names);
  return p;
}

Panel load_panel(const std::filesystem::path& path, const PanelColumns& columns) {
  if (columns.market.empty() || columns.industry.empty()) {
    throw DataError("the market and industry roles must be mapped to columns");
  }
  const CsvTable table = read_csv(path);
  const std::size_t date_col = table.require(columns.date);
  const std::size_t market_col = table.require(columns.market);
  const std::size_t industry_col = table.require(columns.industry);
  std::vector<std::size_t> state_cols;
  for (const std::string& s : columns.state) state_cols.push_back(table.require(s));

  std::vector<std::string> dates;
  std::vector<std::vector<double>> values;
  int dropped = 0;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    std::vector<double> v;
    bool complete = !row[date_col].empty();
    for (std::size_t c : std::vector<std::size_t>{market_col, industry_col}) {
      std::optional<double> x;
      try {
        x = parse_number(row[c]);
      } catch (const DataError& e) {
        throw DataError(path.string() + ": row " + std::to_string(r + 2) + ", column '" + table.header[c] +
                        "': " + e.what());
      }
      if (!x) complete = false;
      v.push_back(x.value_or(0.0));
    }
    for (std::size_t c : state_cols) {
      std::optional<double> x;
      try {
        x = parse_number(row[c]);
      } catch (const DataError& e) {
        throw DataError(path.string() + ": row " + std::to_string(r + 2) + ", column '" + table.header[c] +
                        "': " + e.what());
      }
      if (!x) complete = false;
      v.push_back(x.value_or(0.0));
    }
    if (!complete) {
      ++dropped;
      continue;
    }
    dates.push_back(row[date_col]);
    values.push_back(std::move(v));
  }
  check_dates(dates);
  if (values.size() < 51) {
    throw DataError(path.string() + ": " + std::to_string(values.size() > 0 ? values.size() - 1 : 0) +
                    " usable rows after lagging; at least 50 are required");
  }
  const Index n = static_cast<Index>(values.size()) - 1;
  const Index m = static_cast<Index>(state_cols.size());
  Panel p;
  p.market.resize(n);
  p.industry.resize(n);
  p.state.resize(n, m);
  for (Index t = 0; t < n; ++t) {
    const auto& now = values[static_cast<std::size_t>(t + 1)];
    const auto& before = values[static_cast<std::size_t>(t)];
    p.dates.push_back(dates[static_cast<std::size_t>(t + 1)]);
    p.market(t) = now[0];
    p.industry(t) = now[1];
    for (Index j = 0; j < m; ++j) p.state(t, j) = before[static_cast<std::size_t>(2 + j)];
  }
  p.state_names = columns.state;
  p.dropped_rows = dropped;
  return p;
}

Eigen::VectorXd rolling_volatility(const Eigen::VectorXd& r, int window) {
  if (window < 1) throw InvalidArgument("window must be at least 1");
  const Index n = r.size();
  Eigen::VectorXd v = Eigen::VectorXd::Constant(n, std::nan(""));
  // direct sums per window avoid drift from a running total
  for (Index t = window - 1; t < n; ++t) v(t) = r.segment(t - window + 1, window).squaredNorm() / window;
  return v;
}

CoESModel fit_coes(const Panel& train, double tau, int K, const CoesPenalties& penalties) {
  if (!(tau > 0.0 && tau <= 0.5)) throw InvalidArgument("tau must lie in (0, 0.5]");
  if (K < 1) throw InvalidArgument("K must be at least 1");
  if (train.rows() < 2) throw InvalidArgument("training window is too short");
  const bool penalize = K > 1;
  const bool cv = penalties.cross_validate;
  const TwoStageSettings& settings = penalties.cv;

  CoESModel m;
  m.tau = tau;
  m.K = K;
  const DictionaryFit psi = run_stage("dictionary psi", [&] { return build_dictionary(train.state, K); });
  const DictionaryFit phi =
      run_stage("dictionary phi", [&] { return build_dictionary(phi_raw(train.industry, train.state), K); });
  m.psi = psi.dictionary;
  m.phi = phi.dictionary;

  m.var_industry = run_stage("(i) industry VaR", [&] {
    return quantile_stage(psi.design, train.industry, tau, penalize, cv, penalties.nu_industry, settings);
  });
  m.median_industry = run_stage("(ii) industry median", [&] {
    return quantile_stage(psi.design, train.industry, 0.5, penalize, cv, penalties.nu_median, settings);
  });
  if (penalize && cv) {
    const TwoStageResult r = run_stage("(iii)-(iv) market VaR and ES", [&] {
      return two_stage_cv(phi.design, train.market, tau, settings);
    });
    m.var_market = r.quantile;
    m.es_market = r.es;
    m.es_response = r.auxiliary;
  } else {
    m.var_market = run_stage("(iii) market VaR", [&] {
      return fit_penalized_quantile(phi.design, train.market, tau, penalize ? penalties.nu_market : 0.0,
                                    settings.quantile_options);
    });
    m.es_response = auxiliary_response(train.market, predict_quantile(m.var_market, phi.design), tau);
    m.es_market = run_stage("(iv) market ES", [&] {
      return fit_es_lasso(phi.design, m.es_response, penalize ? penalties.lambda_market : 0.0, settings.es_options);
    });
  }
  return m;
}

CoesPrediction coes_predict(const CoESModel& model, const Panel& rows) {
  if (rows.state.cols() != model.psi.raw_dim() || rows.state.cols() + 1 != model.phi.raw_dim()) {
    throw DimensionError("panel state variables do not match the fitted dictionaries");
  }
  CoesPrediction out;
  const Eigen::MatrixXd psi = model.psi.transform_values(rows.state);
  out.var_industry = psi * model.var_industry.coefficients;
  out.median_industry = psi * model.median_industry.coefficients;
  const Eigen::MatrixXd phi_actual = model.phi.transform_values(phi_raw(rows.industry, rows.state));
  out.var_market = phi_actual * model.var_market.coefficients;
  out.es_market = phi_actual * model.es_market.coefficients;
  out.coes = model.phi.transform_values(phi_raw(out.var_industry, rows.state)) * model.es_market.coefficients;
  out.coes_median =
      model.phi.transform_values(phi_raw(out.median_industry, rows.state)) * model.es_market.coefficients;
  out.delta_coes = out.coes - out.coes_median;
  return out;
}

CoesReport evaluate_out_of_sample(const CoESModel& model, const Panel& test) {
  const CoesPrediction p = coes_predict(model, test);
  CoesReport r;
  r.tau = model.tau;
  r.K = model.K;
  r.test_rows = test.rows();
  r.mtl_var_industry = mean_tick_loss(test.industry, p.var_industry, model.tau);
  r.mtl_median_industry = mean_tick_loss(test.industry, p.median_industry, 0.5);
  r.mtl_var_market = mean_tick_loss(test.market, p.var_market, model.tau);
  r.es_mse = es_mse(test.market, p.var_market, p.es_market, model.tau);
  r.average_delta_coes = test.rows() > 0 ? p.delta_coes.mean() : 0.0;
  return r;
}

void write_coes_report(const std::filesystem::path& path, const std::vector<std::string>& labels,
                       const std::vector<CoesReport>& reports) {
  if (labels.size() != reports.size()) throw InvalidArgument("one label per report is required");
  std::vector<std::vector<std::string>> rows;
  for (std::size_t i = 0; i < reports.size(); ++i) {
    const CoesReport& r = reports[i];
    const std::string k = std::to_string(r.K);
    const std::string tau = format_number(r.tau);
    rows.push_back({labels[i], k, tau, "mtl_var_industry", format_number(r.mtl_var_industry)});
    rows.push_back({labels[i], k, "0.5", "mtl_median_industry", format_number(r.mtl_median_industry)});
    rows.push_back({labels[i], k, tau, "mtl_var_market", format_number(r.mtl_var_market)});
    rows.push_back({labels[i], k, tau, "es_mse", format_number(r.es_mse)});
    rows.push_back({labels[i], k, tau, "average_delta_coes", format_number(r.average_delta_coes)});
  }
  write_csv(path, {"panel", "K", "tau", "metric", "value"}, rows);
}

void write_coes_series(const std::filesystem::path& path, const Panel& panel, const CoesPrediction& p) {
  if (p.coes.size() != panel.rows()) throw DimensionError("prediction length does not match panel");
  std::vector<std::vector<std::string>> rows;
  for (Index t = 0; t < panel.rows(); ++t) {
    rows.push_back({panel.dates[static_cast<std::size_t>(t)], format_number(p.var_industry(t)),
                    format_number(p.median_industry(t)), format_number(p.var_market(t)), format_number(p.es_market(t)),
                    format_number(p.coes(t)), format_number(p.coes_median(t)), format_number(p.delta_coes(t))});
  }
  write_csv(path, {"date", "VaR_I", "Median_I", "VaR_M", "ES_M", "CoES", "CoES_median", "DeltaCoES"}, rows);
}

Panel synthetic_panel(const SimulationConfig& cfg) {
  const SimulatedSample s = simulate_dgp(cfg);
  const Index n = s.y.size();
  std::vector<std::string> dates;
  for (Index t = 0; t < n; ++t) dates.push_back(std::to_string(t + 1));
  std::vector<std::string> names;
  for (Index j = 1; j < cfg.d; ++j) names.push_back("z" + std::to_string(j));
  return make_panel(std::move(dates), s.y, s.factors.col(0), s.factors.rightCols(cfg.d - 1), std::move(names));
}

void to_json(nlohmann::json& j, const CoesReport& r) {
  j = nlohmann::json{{"tau", r.tau},
                     {"K", r.K},
                     {"test_rows", r.test_rows},
                     {"mtl_var_industry", r.mtl_var_industry},
                     {"mtl_median_industry", r.mtl_median_industry},
                     {"mtl_var_market", r.mtl_var_market},
                     {"es_mse", r.es_mse},
                     {"average_delta_coes", r.average_delta_coes}};
}

void to_json(nlohmann::json& j, const CoESModel& m) {
  j = nlohmann::json{{"tau", m.tau},
                     {"K", m.K},
                     {"psi", m.psi},
                     {"phi", m.phi},
                     {"var_industry", m.var_industry},
                     {"median_industry", m.median_industry},
                     {"var_market", m.var_market},
                     {"es_market", m.es_market}};
}

}  // namespace eslasso
