#pragma once

#include "eslasso/design_matrix.hpp"
#include "eslasso/errors.hpp"

#include <json.hpp>

#include <vector>

namespace eslasso {

/// rho_tau(r) = (tau - 1{r < 0}) r.
double check_loss(double tau, double residual);

struct QuantileOptions {
  /// Pivot budget of the vertex solver.
  int max_iterations = 10000;
  /// Convergence requires certificate <= certificate_tolerance * (1 + ||Y||_inf).
  double certificate_tolerance = 1e-6;
  /// Keep the objective value after every pivot.
  bool record_trace = false;
  /// Optional starting vertex (row indices of the augmented problem, as
  /// returned in QuantileFit::basis). Ignored if incompatible.
  std::vector<Index> initial_basis;
};

/// Solution of min_a sum_t rho_tau(Y_t - X_t'a) + nu ||a||_{1,T}.
struct QuantileFit {
  Eigen::VectorXd coefficients;
  double tau = 0.5;
  double nu = 0.0;
  double objective = 0.0;
  /// Distance from zero to the subdifferential at the solution, divided by T.
  double certificate = 0.0;
  int iterations = 0;
  /// Rows of the augmented problem with zero residual at the returned vertex.
  /// Indices >= T refer to penalty rows (one per penalized coordinate).
  std::vector<Index> basis;
  std::vector<double> objective_trace;
};

/// Penalized quantile regression. The penalty covers every column, intercept
/// included, with weights DesignMatrix::scales(). Identically zero columns
/// are pinned to zero when nu > 0 and rejected when nu == 0.
///
/// Solved exactly as a linear program by a vertex-descent (simplex-type)
/// method started at a = 0 (or at an unpenalized basis when nu == 0). Throws
/// NotConverged<QuantileFit> carrying the last vertex if the pivot budget runs
/// out or the final certificate misses the tolerance.
QuantileFit fit_penalized_quantile(const DesignMatrix& x, const Eigen::VectorXd& y, double tau,
                                   double nu, const QuantileOptions& options = {});

double quantile_objective(const DesignMatrix& x, const Eigen::VectorXd& y, double tau, double nu,
                          const Eigen::VectorXd& coefficients);

/// Optimality certificate of an arbitrary coefficient vector: the max-norm
/// distance from zero to the subdifferential of the objective, divided by T.
/// Residuals within 1e-9 (1 + ||Y||_inf) of zero use the interval subgradient.
/// The value is attained by an explicit feasible subgradient, so it is an
/// upper bound on the exact distance and is zero only at an optimum.
double quantile_certificate(const Eigen::VectorXd& coefficients, double tau, double nu,
                            const DesignMatrix& x, const Eigen::VectorXd& y);
double quantile_certificate(const QuantileFit& fit, const DesignMatrix& x, const Eigen::VectorXd& y);

/// Smallest penalty at which a = 0 satisfies the optimality conditions.
double quantile_penalty_max(const DesignMatrix& x, const Eigen::VectorXd& y, double tau);

Eigen::VectorXd predict_quantile(const QuantileFit& fit, const DesignMatrix& x_new);

void to_json(nlohmann::json& j, const QuantileFit& fit);

}  // namespace eslasso
