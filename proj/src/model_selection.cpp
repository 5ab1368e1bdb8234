#include "eslasso/model_selection.hpp"

#include "eslasso/csv.hpp"
#include "eslasso/parallel.hpp"

#include <cmath>
#include <string>

namespace eslasso {

std::vector<Index> CVPlan::train_rows(int fold) const {
  const RowRange& r = folds.at(static_cast<std::size_t>(fold));
  std::vector<Index> out;
  out.reserve(static_cast<std::size_t>(T - r.size()));
  for (Index t = 0; t < T; ++t) {
    if (t < r.begin || t >= r.end) out.push_back(t);
  }
  return out;
}

std::vector<Index> CVPlan::test_rows(int fold) const {
  const RowRange& r = folds.at(static_cast<std::size_t>(fold));
  std::vector<Index> out;
  for (Index t = r.begin; t < r.end; ++t) out.push_back(t);
  return out;
}

CVPlan blocked_folds(Index T, int k) {
  if (k < 2) throw InvalidArgument("cross-validation needs at least 2 folds");
  if (static_cast<Index>(k) > T) throw InvalidArgument("more folds than observations");
  CVPlan plan;
  plan.T = T;
  plan.k = k;
  const Index base = T / k;
  const Index extra = T % k;
  Index start = 0;
  for (int j = 0; j < k; ++j) {
    const Index len = base + (static_cast<Index>(j) < extra ? 1 : 0);
    plan.folds.push_back({start, start + len});
    start += len;
  }
  return plan;
}

double mean_tick_loss(const Eigen::VectorXd& y, const Eigen::VectorXd& q_hat, double tau) {
  if (y.size() != q_hat.size()) throw DimensionError("response and prediction lengths differ");
  double s = 0.0;
  for (Index t = 0; t < y.size(); ++t) s += check_loss(tau, y(t) - q_hat(t));
  return s;
}

TickLoss tick_loss_report(const Eigen::VectorXd& y, const Eigen::VectorXd& q_hat, double tau) {
  TickLoss out;
  out.sum = mean_tick_loss(y, q_hat, tau);
  out.per_observation = y.size() > 0 ? out.sum / static_cast<double>(y.size()) : 0.0;
  return out;
}

double es_mse(const Eigen::VectorXd& y, const Eigen::VectorXd& q_hat, const Eigen::VectorXd& es_hat, double tau) {
  if (es_hat.size() != y.size()) throw DimensionError("response and ES prediction lengths differ");
  const AuxiliaryResponse aux = auxiliary_response(y, q_hat, tau);
  return (aux.values - es_hat).squaredNorm();
}

namespace {

std::string describe(double v) { return format_number(v); }

}  // namespace

CVResult cross_validate(const PathFitter& fitter, const HeldOutScorer& scorer, const DesignMatrix& x,
                        const Eigen::VectorXd& y, const std::vector<double>& grid, const CVPlan& plan,
                        int threads) {
  if (grid.empty()) throw InvalidArgument("penalty grid is empty");
  for (std::size_t i = 1; i < grid.size(); ++i) {
    if (!(grid[i] <= grid[i - 1])) throw InvalidArgument("penalty grid must be sorted in decreasing order");
  }
  if (plan.T != x.rows() || y.size() != x.rows()) throw DimensionError("plan, design and response disagree in length");

  const std::size_t g = grid.size();
  CVResult result;
  result.grid = grid;
  result.fold_losses.resize(static_cast<Index>(g), plan.k);
  parallel_for(static_cast<std::size_t>(plan.k), threads, [&](std::size_t j) {
    const int fold = static_cast<int>(j);
    const std::vector<Index> train = plan.train_rows(fold);
    const std::vector<Index> test = plan.test_rows(fold);
    const DesignMatrix x_train = x.select_rows(train);
    Eigen::VectorXd y_train(static_cast<Index>(train.size()));
    for (std::size_t i = 0; i < train.size(); ++i) y_train(static_cast<Index>(i)) = y(train[i]);
    std::vector<FoldModel> models;
    try {
      models = fitter(x_train, y_train, grid);
    } catch (const std::exception& e) {
      throw CrossValidationError("fold " + std::to_string(fold + 1) + " of " + std::to_string(plan.k) +
                                 ": fit failed on the penalty path starting at " + describe(grid.front()) + ": " +
                                 e.what());
    }
    if (models.size() != g) throw CrossValidationError("fitter returned the wrong number of models");
    const DesignMatrix x_test = x.select_rows(test);
    Eigen::VectorXd y_test(static_cast<Index>(test.size()));
    for (std::size_t i = 0; i < test.size(); ++i) y_test(static_cast<Index>(i)) = y(test[i]);
    for (std::size_t i = 0; i < g; ++i) {
      try {
        result.fold_losses(static_cast<Index>(i), fold) = scorer(models[i], x_test, y_test);
      } catch (const std::exception& e) {
        throw CrossValidationError("fold " + std::to_string(fold + 1) + ", penalty " + describe(grid[i]) + ": " +
                                   e.what());
      }
    }
  });
  result.mean_losses = result.fold_losses.rowwise().mean();
  // first index wins on ties, and the grid is decreasing
  Index best = 0;
  for (Index i = 1; i < static_cast<Index>(g); ++i) {
    if (result.mean_losses(i) < result.mean_losses(best)) best = i;
  }
  result.chosen_index = best;
  result.chosen = grid[static_cast<std::size_t>(best)];
  return result;
}

PathFitter quantile_path_fitter(double tau, const QuantileOptions& options) {
  return [tau, options](const DesignMatrix& x, const Eigen::VectorXd& y, const std::vector<double>& grid) {
    std::vector<FoldModel> out;
    out.reserve(grid.size());
    QuantileOptions opts = options;
    for (double nu : grid) {
      QuantileFit fit = fit_penalized_quantile(x, y, tau, nu, opts);
      opts.initial_basis = fit.basis;
      out.push_back({std::move(fit.coefficients), {}});
    }
    return out;
  };
}

HeldOutScorer quantile_scorer(double tau) {
  return [tau](const FoldModel& m, const DesignMatrix& x, const Eigen::VectorXd& y) {
    return mean_tick_loss(y, x.values() * m.quantile, tau) / static_cast<double>(y.size());
  };
}

PathFitter es_path_fitter(double tau, double nu, const QuantileOptions& q_options, const EsOptions& es_options) {
  return [=](const DesignMatrix& x, const Eigen::VectorXd& y, const std::vector<double>& grid) {
    const QuantileFit q = fit_penalized_quantile(x, y, tau, nu, q_options);
    const AuxiliaryResponse aux = auxiliary_response(y, predict_quantile(q, x), tau);
    const std::vector<ESFit> path = fit_es_path(x, aux, grid, es_options);
    std::vector<FoldModel> out;
    out.reserve(path.size());
    for (const ESFit& f : path) out.push_back({q.coefficients, f.coefficients});
    return out;
  };
}

HeldOutScorer es_scorer(double tau) {
  return [tau](const FoldModel& m, const DesignMatrix& x, const Eigen::VectorXd& y) {
    const Eigen::VectorXd q = x.values() * m.quantile;
    return es_mse(y, q, x.values() * m.es, tau) / static_cast<double>(y.size());
  };
}

TwoStageResult two_stage_cv(const DesignMatrix& x, const Eigen::VectorXd& y, double tau,
                            const TwoStageSettings& settings) {
  const CVPlan plan = blocked_folds(x.rows(), settings.folds);
  TwoStageResult out;

  const double nu_max = quantile_penalty_max(x, y, tau);
  if (!(nu_max > 0.0)) throw InvalidArgument("quantile penalty scale is zero");
  const std::vector<double> nu_grid = geometric_grid(nu_max, settings.grid_ratio, settings.nu_grid_size);
  out.nu_cv = cross_validate(quantile_path_fitter(tau, settings.quantile_options), quantile_scorer(tau), x, y,
                             nu_grid, plan, settings.threads);
  out.quantile = fit_penalized_quantile(x, y, tau, out.nu_cv.chosen, settings.quantile_options);
  out.auxiliary = auxiliary_response(y, predict_quantile(out.quantile, x), tau);

  const double lambda_max = es_lambda_max(x, out.auxiliary.values);
  if (!(lambda_max > 0.0)) throw InvalidArgument("ES penalty scale is zero");
  const std::vector<double> lambda_grid = geometric_grid(lambda_max, settings.grid_ratio, settings.lambda_grid_size);
  out.lambda_cv = cross_validate(
      es_path_fitter(tau, out.nu_cv.chosen, settings.quantile_options, settings.es_options), es_scorer(tau), x, y,
      lambda_grid, plan, settings.threads);
  // warm start along the grid down to the chosen point
  Eigen::VectorXd warm;
  for (Index i = 0; i <= out.lambda_cv.chosen_index; ++i) {
    out.es = fit_es_lasso(x, out.auxiliary, lambda_grid[static_cast<std::size_t>(i)], settings.es_options, warm);
    warm = out.es.coefficients;
  }
  return out;
}

void write_loss_table(const std::filesystem::path& path, const CVResult& result) {
  std::vector<std::string> header{"penalty"};
  for (Index j = 0; j < result.fold_losses.cols(); ++j) header.push_back("fold_" + std::to_string(j + 1));
  header.push_back("mean");
  std::vector<std::vector<std::string>> rows;
  for (std::size_t i = 0; i < result.grid.size(); ++i) {
    std::vector<std::string> r{format_number(result.grid[i])};
    for (Index j = 0; j < result.fold_losses.cols(); ++j) {
      r.push_back(format_number(result.fold_losses(static_cast<Index>(i), j)));
    }
    r.push_back(format_number(result.mean_losses(static_cast<Index>(i))));
    rows.push_back(std::move(r));
  }
  write_csv(path, header, rows);
}

}  // namespace eslasso
