#include "eslasso/es.hpp"

#include "eslasso/csv.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>

namespace eslasso {

AuxiliaryResponse auxiliary_response(const Eigen::VectorXd& y, const Eigen::VectorXd& q_hat, double tau) {
  if (!(tau > 0.0 && tau < 1.0)) throw InvalidArgument("quantile level must lie in (0, 1)");
  if (y.size() != q_hat.size()) throw DimensionError("response and quantile vectors differ in length");
  AuxiliaryResponse out;
  out.tau = tau;
  out.source_quantiles = q_hat;
  out.values.resize(y.size());
  for (Index t = 0; t < y.size(); ++t) {
    out.values(t) = y(t) < q_hat(t) ? q_hat(t) + (y(t) - q_hat(t)) / tau : q_hat(t);
  }
  return out;
}

double soft_threshold(double z, double t) {
  if (z > t) return z - t;
  if (z < -t) return z + t;
  return 0.0;
}

double es_objective(const DesignMatrix& x, const Eigen::VectorXd& y_aux, double lambda,
                    const Eigen::VectorXd& coefficients) {
  if (coefficients.size() != x.cols()) throw DimensionError("coefficient length does not match design");
  if (y_aux.size() != x.rows()) throw DimensionError("response length does not match design rows");
  const double n = static_cast<double>(x.rows());
  return (y_aux - x.values() * coefficients).squaredNorm() / n + lambda * x.weighted_l1(coefficients);
}

double kkt_certificate(const Eigen::VectorXd& coefficients, double lambda, const DesignMatrix& x,
                       const Eigen::VectorXd& y_aux) {
  if (coefficients.size() != x.cols()) throw DimensionError("coefficient length does not match design");
  if (y_aux.size() != x.rows()) throw DimensionError("response length does not match design rows");
  const double n = static_cast<double>(x.rows());
  const Eigen::VectorXd g = (2.0 / n) * (x.values().transpose() * (x.values() * coefficients - y_aux));
  double worst = 0.0;
  for (Index i = 0; i < g.size(); ++i) {
    const double w = lambda * x.scales()(i);
    double v;
    if (coefficients(i) > 0.0) v = std::abs(g(i) + w);
    else if (coefficients(i) < 0.0) v = std::abs(g(i) - w);
    else v = std::max(std::abs(g(i)) - w, 0.0);
    worst = std::max(worst, v);
  }
  return worst;
}

double kkt_certificate(const ESFit& fit, const DesignMatrix& x, const AuxiliaryResponse& y_aux) {
  return kkt_certificate(fit.coefficients, fit.lambda, x, y_aux.values);
}

double es_lambda_max(const DesignMatrix& x, const Eigen::VectorXd& y_aux) {
  if (y_aux.size() != x.rows()) throw DimensionError("response length does not match design rows");
  const double n = static_cast<double>(x.rows());
  const Eigen::VectorXd c = (2.0 / n) * (x.values().transpose() * y_aux);
  double out = 0.0;
  for (Index i = 0; i < c.size(); ++i) {
    if (x.scales()(i) > 0.0) out = std::max(out, std::abs(c(i)) / x.scales()(i));
  }
  return out;
}

std::vector<double> geometric_grid(double hi, double ratio, int n) {
  if (!(hi > 0.0) || !(ratio > 0.0 && ratio <= 1.0) || n < 1) {
    throw InvalidArgument("geometric grid needs hi > 0, ratio in (0, 1] and n >= 1");
  }
  std::vector<double> out(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const double frac = n == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(n - 1);
    out[static_cast<std::size_t>(i)] = hi * std::pow(ratio, frac);
  }
  return out;
}

namespace {

// Minimizer of the objective restricted to the current active set and sign
// pattern. If it leaves the orthant, the step toward it stops where the first
// coordinate reaches zero; the objective decreases along the whole segment.
// Nothing is returned when the restricted system is rank deficient.
std::optional<Eigen::VectorXd> polish(const DesignMatrix& x, const Eigen::VectorXd& y, double lambda,
                                      const Eigen::VectorXd& gamma) {
  std::vector<Index> active;
  for (Index i = 0; i < gamma.size(); ++i) {
    if (gamma(i) != 0.0) active.push_back(i);
  }
  const Index k = static_cast<Index>(active.size());
  if (k == 0 || k > x.rows()) return std::nullopt;
  Eigen::MatrixXd xa(x.rows(), k);
  Eigen::VectorXd w(k);
  const double n = static_cast<double>(x.rows());
  for (Index j = 0; j < k; ++j) {
    const Index i = active[static_cast<std::size_t>(j)];
    xa.col(j) = x.values().col(i);
    w(j) = 0.5 * n * lambda * x.scales()(i) * (gamma(i) > 0.0 ? 1.0 : -1.0);
  }
  // X_A'X_A g = X_A'y - w through X_A P = Q R: with h = P'g, R h = Q'y - R^{-T} P'w
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(xa);
  if (qr.rank() < k) return std::nullopt;
  const Eigen::VectorXd qty = (qr.householderQ().transpose() * y).head(k);
  const Eigen::MatrixXd r = qr.matrixR().topLeftCorner(k, k).triangularView<Eigen::Upper>();
  const auto& perm = qr.colsPermutation();
  const Eigen::VectorXd pw = perm.transpose() * w;
  const Eigen::VectorXd rinv_w = r.transpose().triangularView<Eigen::Lower>().solve(pw);
  const Eigen::VectorXd ga = perm * r.triangularView<Eigen::Upper>().solve(qty - rinv_w);
  if (!ga.allFinite()) return std::nullopt;

  double step = 1.0;
  Index blocking = -1;
  for (Index j = 0; j < k; ++j) {
    const double g0 = gamma(active[static_cast<std::size_t>(j)]);
    if (lambda > 0.0 && (ga(j) == 0.0 || (ga(j) > 0.0) != (g0 > 0.0))) {
      const double t = g0 / (g0 - ga(j));
      if (t < step) {
        step = t;
        blocking = j;
      }
    }
  }
  Eigen::VectorXd out = Eigen::VectorXd::Zero(gamma.size());
  for (Index j = 0; j < k; ++j) {
    const Index i = active[static_cast<std::size_t>(j)];
    out(i) = j == blocking ? 0.0 : gamma(i) + step * (ga(j) - gamma(i));
    if (lambda > 0.0 && out(i) != 0.0 && (out(i) > 0.0) != (gamma(i) > 0.0)) out(i) = 0.0;
  }
  return out;
}

}  // namespace

ESFit fit_es_lasso(const DesignMatrix& x, const AuxiliaryResponse& y_aux, double lambda, const EsOptions& options,
                   const Eigen::VectorXd& warm_start) {
  const Eigen::VectorXd& y = y_aux.values;
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw InvalidArgument("penalty must be finite and nonnegative");
  if (x.rows() != y.size()) throw DimensionError("response length does not match design rows");
  if (x.rows() < 1 || x.cols() < 1) throw InvalidArgument("empty design");
  require_finite(y, "auxiliary response");
  const Index p = x.cols();
  const double n = static_cast<double>(x.rows());
  const Eigen::VectorXd& scales = x.scales();
  for (Index i = 0; i < p; ++i) {
    if (scales(i) == 0.0 && lambda == 0.0) {
      throw InvalidArgument("design column " + std::to_string(i) +
                            " is identically zero; its coefficient is unidentified without a penalty");
    }
  }

  // Gram form: f(g) = const - 2 c'g + g'G g + lambda sum s_i |g_i|
  const Eigen::MatrixXd gram = x.values().transpose() * x.values() / n;
  const Eigen::VectorXd c = x.values().transpose() * y / n;
  Eigen::VectorXd gamma = Eigen::VectorXd::Zero(p);
  if (warm_start.size() == p) gamma = warm_start;
  for (Index i = 0; i < p; ++i) {
    if (scales(i) == 0.0) gamma(i) = 0.0;
  }
  Eigen::VectorXd g_gamma = gram * gamma;

  const double y_scale = 1.0 + y.cwiseAbs().maxCoeff();
  const double kkt_tol = options.kkt_tolerance * y_scale;
  const auto gram_kkt = [&]() {
    double worst = 0.0;
    for (Index i = 0; i < p; ++i) {
      const double gi = 2.0 * (g_gamma(i) - c(i));
      const double w = lambda * scales(i);
      double v;
      if (gamma(i) > 0.0) v = std::abs(gi + w);
      else if (gamma(i) < 0.0) v = std::abs(gi - w);
      else v = std::max(std::abs(gi) - w, 0.0);
      worst = std::max(worst, v);
    }
    return worst;
  };

  ESFit fit;
  fit.lambda = lambda;
  int sweep = 0;
  bool converged = false;
  while (sweep < options.max_sweeps) {
    ++sweep;
    double max_move = 0.0;
    for (Index i = 0; i < p; ++i) {
      const double gii = gram(i, i);
      if (gii == 0.0) continue;
      const double partial = c(i) - (g_gamma(i) - gii * gamma(i));
      const double updated = soft_threshold(2.0 * partial, lambda * scales(i)) / (2.0 * gii);
      const double move = updated - gamma(i);
      if (move != 0.0) {
        g_gamma.noalias() += move * gram.col(i);
        gamma(i) = updated;
        max_move = std::max(max_move, std::abs(move));
      }
    }
    if (options.polish_every > 0 && sweep % options.polish_every == 0) {
      if (auto candidate = polish(x, y, lambda, gamma)) {
        const double before = es_objective(x, y, lambda, gamma);
        if (es_objective(x, y, lambda, *candidate) <= before) {
          max_move = std::max(max_move, (*candidate - gamma).cwiseAbs().maxCoeff());
          gamma = *candidate;
          g_gamma = gram * gamma;
        }
      }
    }
    if (options.record_trace) fit.objective_trace.push_back(es_objective(x, y, lambda, gamma));
    const double coord_tol = options.coordinate_tolerance * (1.0 + gamma.cwiseAbs().maxCoeff());
    if (max_move < coord_tol && gram_kkt() < 0.5 * kkt_tol) {
      if (kkt_certificate(gamma, lambda, x, y) <= kkt_tol) {
        converged = true;
        break;
      }
      // roundoff in the Gram form; try the direct active-set solve
      if (auto candidate = polish(x, y, lambda, gamma)) {
        if (kkt_certificate(*candidate, lambda, x, y) <= kkt_tol) {
          gamma = *candidate;
          converged = true;
          break;
        }
      }
    }
  }
  fit.coefficients = gamma;
  fit.sweeps = sweep;
  fit.objective = es_objective(x, y, lambda, gamma);
  fit.kkt_violation = kkt_certificate(gamma, lambda, x, y);
  for (Index i = 0; i < p; ++i) {
    if (gamma(i) != 0.0) fit.active_set.push_back(i);
  }
  if (!converged) {
    throw NotConverged<ESFit>("ES coordinate descent exhausted its sweep budget", fit);
  }
  return fit;
}

std::vector<ESFit> fit_es_path(const DesignMatrix& x, const AuxiliaryResponse& y_aux,
                               const std::vector<double>& lambdas, const EsOptions& options) {
  std::vector<ESFit> out;
  out.reserve(lambdas.size());
  Eigen::VectorXd warm;
  for (double lambda : lambdas) {
    out.push_back(fit_es_lasso(x, y_aux, lambda, options, warm));
    warm = out.back().coefficients;
  }
  return out;
}

Lemma3Gap lemma3_gap(const Eigen::VectorXd& y, const Eigen::VectorXd& q, const Eigen::VectorXd& q_hat,
                     double tau) {
  if (y.size() != q.size() || y.size() != q_hat.size()) throw DimensionError("vectors differ in length");
  if (y.size() == 0) throw InvalidArgument("empty sample");
  const AuxiliaryResponse tilde = auxiliary_response(y, q, tau);
  const AuxiliaryResponse hat = auxiliary_response(y, q_hat, tau);
  const double n = static_cast<double>(y.size());
  const double factor = (1.0 + 1.0 / tau) * (1.0 + 1.0 / tau);
  return {(hat.values - tilde.values).squaredNorm() / n, factor * (q_hat - q).squaredNorm() / n};
}

Eigen::VectorXd predict_es(const ESFit& fit, const DesignMatrix& x_new) {
  if (x_new.cols() != fit.coefficients.size()) throw DimensionError("design width does not match fit");
  return x_new.values() * fit.coefficients;
}

void to_json(nlohmann::json& j, const ESFit& fit) {
  j = nlohmann::json{{"coefficients", std::vector<double>(fit.coefficients.data(),
                                                          fit.coefficients.data() + fit.coefficients.size())},
                     {"lambda", fit.lambda},
                     {"objective", fit.objective},
                     {"kkt_violation", fit.kkt_violation},
                     {"active_set", fit.active_set},
                     {"sweeps", fit.sweeps}};
}

void write_auxiliary_csv(const std::filesystem::path& path, const Eigen::VectorXd& y, const AuxiliaryResponse& aux) {
  if (y.size() != aux.values.size() || aux.source_quantiles.size() != y.size()) {
    throw DimensionError("response and auxiliary lengths differ");
  }
  std::vector<std::vector<std::string>> rows;
  for (Index t = 0; t < y.size(); ++t) {
    rows.push_back({std::to_string(t + 1), format_number(y(t)), format_number(aux.source_quantiles(t)),
                    format_number(aux.values(t))});
  }
  write_csv(path, {"row", "y", "quantile", "auxiliary"}, rows);
}

}  // namespace eslasso
