#pragma once

#include "eslasso/es.hpp"
#include "eslasso/features.hpp"
#include "eslasso/model_selection.hpp"
#include "eslasso/quantile.hpp"
#include "eslasso/simulation.hpp"

#include <json.hpp>

#include <filesystem>
#include <string>
#include <vector>

namespace eslasso {

/// Aligned observations: row t holds R^M_t, R^I_t and the state variables
/// dated t-1. Differencing of state variables is left to the caller.
struct Panel {
  std::vector<std::string> dates;
  Eigen::VectorXd market;
  Eigen::VectorXd industry;
  Eigen::MatrixXd state;
  std::vector<std::string> state_names;
  /// Rows dropped during ingestion because a required field was missing.
  int dropped_rows = 0;

  Index rows() const noexcept { return market.size(); }
  /// Rows [begin, end).
  Panel slice(Index begin, Index end) const;
};

/// Builds a panel from series that are already aligned (state already lagged).
/// Checks lengths, finiteness and strictly increasing dates.
Panel make_panel(std::vector<std::string> dates, Eigen::VectorXd market, Eigen::VectorXd industry,
                 Eigen::MatrixXd lagged_state, std::vector<std::string> state_names);

/// Role of each CSV column.
struct PanelColumns {
  std::string date = "date";
  std::string market;
  std::string industry;
  std::vector<std::string> state;
};

/// Reads a CSV, drops rows with a missing required value (counted in
/// dropped_rows) and lags the state variables by one row, which loses the
/// first row. Throws DataError on a missing column, duplicate or decreasing
/// dates, or fewer than 50 usable rows. Dates compare numerically when both
/// parse as numbers and as text otherwise (ISO dates sort correctly).
Panel load_panel(const std::filesystem::path& path, const PanelColumns& columns);

/// v_t = mean of r_s^2 over the last `window` entries; the first window-1
/// entries are NaN (unavailable).
Eigen::VectorXd rolling_volatility(const Eigen::VectorXd& daily_returns, int window = 22);

struct CoesPenalties {
  /// Select penalties by blocked cross-validation; otherwise use the fixed values.
  bool cross_validate = true;
  double nu_industry = 0.0;
  double nu_median = 0.0;
  double nu_market = 0.0;
  double lambda_market = 0.0;
  TwoStageSettings cv;
};

struct CoESModel {
  double tau = 0.05;
  int K = 1;
  /// psi(Z) and phi(R^I, Z), frozen on the training window.
  ChebyshevDictionary psi;
  ChebyshevDictionary phi;
  QuantileFit var_industry;
  QuantileFit median_industry;
  QuantileFit var_market;
  ESFit es_market;
  /// Auxiliary response of stage (iv), built from stage (iii)'s in-sample predictions.
  AuxiliaryResponse es_response;
};

/// Stage failures carry the stage label; the original category is kept.
class CoesStageError : public Error {
 public:
  using Error::Error;
};

/// Four fits on the training panel: (i) VaR^I at tau on psi(Z); (ii) median
/// of R^I on psi(Z); (iii) VaR^M at tau on phi(R^I, Z); (iv) ES of R^M on
/// phi(R^I, Z) from the auxiliary response of (iii). K = 1 is fitted without
/// penalties whatever `penalties` says.
CoESModel fit_coes(const Panel& train, double tau, int K, const CoesPenalties& penalties = {});

struct CoesPrediction {
  Eigen::VectorXd var_industry;
  Eigen::VectorXd median_industry;
  Eigen::VectorXd var_market;
  Eigen::VectorXd es_market;
  Eigen::VectorXd coes;
  Eigen::VectorXd coes_median;
  Eigen::VectorXd delta_coes;
};

/// CoES_t = phi(VaR^I_t, Z_{t-1})'gamma and CoES^median_t = phi(Median^I_t, Z_{t-1})'gamma,
/// with the training dictionaries (hyperbolic branches outside their intervals).
CoesPrediction coes_predict(const CoESModel& model, const Panel& rows);

struct CoesReport {
  double tau = 0.05;
  int K = 1;
  Index test_rows = 0;
  /// Out-of-sample sums.
  double mtl_var_industry = 0.0;
  double mtl_median_industry = 0.0;
  double mtl_var_market = 0.0;
  double es_mse = 0.0;
  double average_delta_coes = 0.0;
};

CoesReport evaluate_out_of_sample(const CoESModel& model, const Panel& test);

/// Long format: one row per (label, K, tau, metric).
void write_coes_report(const std::filesystem::path& path, const std::vector<std::string>& labels,
                       const std::vector<CoesReport>& reports);
/// date, VaR_I, Median_I, VaR_M, ES_M, CoES, CoES_median, DeltaCoES.
void write_coes_series(const std::filesystem::path& path, const Panel& rows, const CoesPrediction& prediction);

/// Panel built from the location-scale simulation: the market return is the
/// simulated response, the industry return is the first simulated factor and
/// the remaining d - 1 factors are the state variables, so the market model
/// is exactly a degree-cfg.K polynomial in (R^I, Z). Has 2 cfg.T rows.
Panel synthetic_panel(const SimulationConfig& cfg);

void to_json(nlohmann::json& j, const CoesReport& r);
void to_json(nlohmann::json& j, const CoESModel& m);

}  // namespace eslasso
