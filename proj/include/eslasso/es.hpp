#pragma once

#include "eslasso/design_matrix.hpp"
#include "eslasso/errors.hpp"

#include <json.hpp>

#include <filesystem>

#include <vector>

namespace eslasso {

/// Yhat_t = Qhat_t + (1/tau) 1{Y_t < Qhat_t} (Y_t - Qhat_t). Its conditional
/// mean at the true quantile is the expected shortfall.
struct AuxiliaryResponse {
  Eigen::VectorXd values;
  double tau = 0.5;
  Eigen::VectorXd source_quantiles;
};

AuxiliaryResponse auxiliary_response(const Eigen::VectorXd& y, const Eigen::VectorXd& q_hat, double tau);

/// sign(z) max(|z| - t, 0).
double soft_threshold(double z, double t);

struct EsOptions {
  int max_sweeps = 200000;
  /// Stop once the largest coordinate move is below coordinate_tolerance (1 + ||gamma||_inf) ...
  double coordinate_tolerance = 1e-8;
  /// ... and the KKT violation is below kkt_tolerance (1 + ||Yhat||_inf).
  double kkt_tolerance = 1e-6;
  /// Every this many sweeps, try to jump to the exact minimizer on the current
  /// active set and sign pattern (kept only if it does not raise the objective).
  int polish_every = 25;
  bool record_trace = false;
};

/// Solution of min_g (1/T) ||Yhat - X g||^2 + lambda ||g||_{1,T}.
struct ESFit {
  Eigen::VectorXd coefficients;
  double lambda = 0.0;
  double objective = 0.0;
  double kkt_violation = 0.0;
  std::vector<Index> active_set;
  int sweeps = 0;
  /// Objective after each full coordinate cycle.
  std::vector<double> objective_trace;
};

/// Cyclic coordinate descent from `warm_start` (zero when empty). Columns
/// that are identically zero keep a zero coefficient when lambda > 0 and
/// raise InvalidArgument when lambda == 0. Throws NotConverged<ESFit> with the
/// last iterate when the sweep budget is exhausted.
ESFit fit_es_lasso(const DesignMatrix& x, const AuxiliaryResponse& y_aux, double lambda,
                   const EsOptions& options = {}, const Eigen::VectorXd& warm_start = {});

double es_objective(const DesignMatrix& x, const Eigen::VectorXd& y_aux, double lambda,
                    const Eigen::VectorXd& coefficients);

/// max_i of |g_i + lambda s_i sign(gamma_i)| on the active set and
/// max(|g_i| - lambda s_i, 0) off it, with g = (2/T) X'(X gamma - Yhat).
double kkt_certificate(const Eigen::VectorXd& coefficients, double lambda, const DesignMatrix& x,
                       const Eigen::VectorXd& y_aux);
double kkt_certificate(const ESFit& fit, const DesignMatrix& x, const AuxiliaryResponse& y_aux);

/// max_i |(2/T) X_i' Yhat| / s_i over nonzero columns; gamma = 0 is optimal from here on.
double es_lambda_max(const DesignMatrix& x, const Eigen::VectorXd& y_aux);

/// n points from hi down to hi * ratio, equally spaced in logs.
std::vector<double> geometric_grid(double hi, double ratio, int n);

/// Fits along a decreasing penalty grid, warm starting each point from the previous one.
std::vector<ESFit> fit_es_path(const DesignMatrix& x, const AuxiliaryResponse& y_aux,
                               const std::vector<double>& lambdas, const EsOptions& options = {});

struct Lemma3Gap {
  double lhs = 0.0;
  double rhs = 0.0;
};

/// lhs = ||Yhat - Ytilde||^2 / T where Ytilde uses the true quantiles q and
/// Yhat the estimates q_hat; rhs = (1 + 1/tau)^2 ||q_hat - q||^2 / T.
Lemma3Gap lemma3_gap(const Eigen::VectorXd& y, const Eigen::VectorXd& q, const Eigen::VectorXd& q_hat,
                     double tau);

Eigen::VectorXd predict_es(const ESFit& fit, const DesignMatrix& x_new);

void to_json(nlohmann::json& j, const ESFit& fit);

/// Columns: row, y, quantile, auxiliary.
void write_auxiliary_csv(const std::filesystem::path& path, const Eigen::VectorXd& y, const AuxiliaryResponse& aux);

}  // namespace eslasso
