#pragma once

#include "eslasso/design_matrix.hpp"
#include "eslasso/errors.hpp"
#include "eslasso/es.hpp"
#include "eslasso/quantile.hpp"

#include <filesystem>
#include <functional>
#include <vector>

namespace eslasso {

/// Half-open row range [begin, end), 0-based.
struct RowRange {
  Index begin = 0;
  Index end = 0;
  Index size() const noexcept { return end - begin; }
};

/// Consecutive validation blocks in time order. Rows outside a fold are its
/// training split.
struct CVPlan {
  Index T = 0;
  int k = 0;
  std::vector<RowRange> folds;

  std::vector<Index> train_rows(int fold) const;
  std::vector<Index> test_rows(int fold) const;
};

/// k contiguous folds whose sizes differ by at most one; the T mod k extra
/// rows go to the earliest folds. Requires 2 <= k <= T.
CVPlan blocked_folds(Index T, int k);

/// Sum over t of rho_tau(Y_t - Qhat_t).
double mean_tick_loss(const Eigen::VectorXd& y, const Eigen::VectorXd& q_hat, double tau);

struct TickLoss {
  double sum = 0.0;
  double per_observation = 0.0;
};
TickLoss tick_loss_report(const Eigen::VectorXd& y, const Eigen::VectorXd& q_hat, double tau);

/// Sum over t of (Yhat_t - ES_t)^2 with Yhat the auxiliary response built from Qhat.
double es_mse(const Eigen::VectorXd& y, const Eigen::VectorXd& q_hat, const Eigen::VectorXd& es_hat, double tau);

/// Coefficients fitted on one training split at one grid point. `es` is
/// empty for pure quantile fits.
struct FoldModel {
  Eigen::VectorXd quantile;
  Eigen::VectorXd es;
};

/// Fits the whole grid on training rows only, returning one model per grid point.
using PathFitter = std::function<std::vector<FoldModel>(const DesignMatrix& x_train, const Eigen::VectorXd& y_train,
                                                        const std::vector<double>& grid)>;
/// Held-out loss of one model on one validation block, per observation.
using HeldOutScorer =
    std::function<double(const FoldModel& model, const DesignMatrix& x_test, const Eigen::VectorXd& y_test)>;

struct CVResult {
  std::vector<double> grid;
  /// grid.size() x k held-out losses.
  Eigen::MatrixXd fold_losses;
  Eigen::VectorXd mean_losses;
  Index chosen_index = 0;
  double chosen = 0.0;
};

/// Raised when a fold fit fails; the message names the fold and penalty.
class CrossValidationError : public Error {
 public:
  using Error::Error;
};

/// Averages held-out losses over folds and picks the minimizing penalty,
/// preferring the larger penalty on ties. The grid must be sorted in
/// decreasing order. Folds run on up to `threads` workers; the table does not
/// depend on the thread count.
CVResult cross_validate(const PathFitter& fitter, const HeldOutScorer& scorer, const DesignMatrix& x,
                        const Eigen::VectorXd& y, const std::vector<double>& grid, const CVPlan& plan,
                        int threads = 1);

/// Quantile path over a penalty grid, warm starting each fit from the previous vertex.
PathFitter quantile_path_fitter(double tau, const QuantileOptions& options = {});
/// Per-observation tick loss.
HeldOutScorer quantile_scorer(double tau);

/// Refits the quantile stage at penalty `nu` on the training split, builds the
/// auxiliary response from its in-sample predictions, then runs the ES path.
PathFitter es_path_fitter(double tau, double nu, const QuantileOptions& q_options = {},
                          const EsOptions& es_options = {});
/// Per-observation ES-MSE, with the auxiliary response built from the fold's quantile stage.
HeldOutScorer es_scorer(double tau);

struct TwoStageSettings {
  int folds = 5;
  int nu_grid_size = 50;
  int lambda_grid_size = 100;
  /// Smallest grid point as a fraction of the largest.
  double grid_ratio = 1e-4;
  int threads = 1;
  QuantileOptions quantile_options;
  EsOptions es_options;
};

struct TwoStageResult {
  CVResult nu_cv;
  CVResult lambda_cv;
  QuantileFit quantile;
  AuxiliaryResponse auxiliary;
  ESFit es;
};

/// Selects nu for the quantile stage, then lambda for the ES stage with the
/// quantile stage refit at the chosen nu inside each training split, and
/// returns the full-sample fits at the chosen penalties.
TwoStageResult two_stage_cv(const DesignMatrix& x, const Eigen::VectorXd& y, double tau,
                            const TwoStageSettings& settings = {});

/// Rows: penalties; columns: penalty, fold_1..fold_k, mean.
void write_loss_table(const std::filesystem::path& path, const CVResult& result);

}  // namespace eslasso
