#include "eslasso/quantile.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <string>

namespace eslasso {

double check_loss(double tau, double residual) {
  return (tau - (residual < 0.0 ? 1.0 : 0.0)) * residual;
}

namespace {

void validate_problem(const DesignMatrix& x, const Eigen::VectorXd& y, double tau, double nu) {
  if (!(tau > 0.0 && tau < 1.0)) throw InvalidArgument("quantile level must lie in (0, 1)");
  if (!(nu >= 0.0) || !std::isfinite(nu)) throw InvalidArgument("penalty must be finite and nonnegative");
  if (x.rows() != y.size()) throw DimensionError("response length does not match design rows");
  if (x.rows() < 1 || x.cols() < 1) throw InvalidArgument("empty design");
  require_finite(y, "response");
}

double sign_of(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

// Vertex descent for min_a sum_i rho_{tau_i}(b_i - A_i a). A vertex is a set
// of m rows with zero residual (the basis). Each pivot moves along the edge
// that frees one basic row, with an exact line search over the piecewise
// linear objective; the row whose residual hits zero at the minimizer enters.
class VertexSolver {
 public:
  VertexSolver(Eigen::MatrixXd a, Eigen::VectorXd b, Eigen::VectorXd row_tau, Index data_rows,
               double residual_scale)
      : a_(std::move(a)), b_(std::move(b)), tau_(std::move(row_tau)), data_rows_(data_rows),
        eps_(1e-11 * residual_scale), in_basis_(static_cast<std::size_t>(a_.rows()), 0) {}

  Index rows() const { return a_.rows(); }
  Index cols() const { return a_.cols(); }

  bool set_basis(std::vector<Index> basis) {
    if (static_cast<Index>(basis.size()) != cols()) return false;
    std::vector<char> seen(static_cast<std::size_t>(rows()), 0);
    for (Index r : basis) {
      if (r < 0 || r >= rows() || seen[static_cast<std::size_t>(r)]) return false;
      seen[static_cast<std::size_t>(r)] = 1;
    }
    Eigen::MatrixXd ab(cols(), cols());
    for (Index k = 0; k < cols(); ++k) ab.row(k) = a_.row(basis[static_cast<std::size_t>(k)]);
    Eigen::FullPivLU<Eigen::MatrixXd> check(ab);
    if (check.rank() < cols()) return false;
    basis_ = std::move(basis);
    in_basis_ = std::move(seen);
    refresh();
    return true;
  }

  // Returns the number of pivots performed, or -1 if the budget ran out.
  int solve(int max_iterations, std::vector<double>* trace) {
    bool bland = false;
    for (int it = 0; it < max_iterations; ++it) {
      const auto pivot = choose_pivot(bland);
      if (!pivot) return it;
      const double before = objective_;
      const bool degenerate = apply(*pivot);
      bland = degenerate;
      if (objective_ > before + 1e-10 * (1.0 + std::abs(before))) {
        throw Error("quantile solver objective increased after a pivot");
      }
      if (trace) trace->push_back(objective_);
    }
    return -1;
  }

  const Eigen::VectorXd& solution() const { return alpha_; }
  const std::vector<Index>& basis() const { return basis_; }
  double objective() const { return objective_; }

 private:
  struct Pivot {
    Index position;  // position in basis_ of the leaving row
    double direction;
  };

  void refresh() {
    Eigen::MatrixXd ab(cols(), cols());
    Eigen::VectorXd bb(cols());
    for (Index k = 0; k < cols(); ++k) {
      ab.row(k) = a_.row(basis_[static_cast<std::size_t>(k)]);
      bb(k) = b_(basis_[static_cast<std::size_t>(k)]);
    }
    Eigen::PartialPivLU<Eigen::MatrixXd> lu(ab);
    alpha_ = lu.solve(bb);
    inverse_ = lu.inverse();
    // a basic penalty row pins its coordinate to exactly zero
    for (Index r : basis_) {
      if (r >= data_rows_) {
        const Index col = penalty_column(r);
        if (col >= 0) alpha_(col) = 0.0;
      }
    }
    residual_ = b_ - a_ * alpha_;
    for (Index r : basis_) residual_(r) = 0.0;
    objective_ = 0.0;
    for (Index i = 0; i < rows(); ++i) objective_ += check_loss(tau_(i), residual_(i));
  }

  Index penalty_column(Index row) const {
    Index found = -1;
    for (Index j = 0; j < cols(); ++j) {
      if (a_(row, j) != 0.0) {
        if (found >= 0) return -1;
        found = j;
      }
    }
    return found;
  }

  std::optional<Pivot> choose_pivot(bool bland) const {
    Eigen::VectorXd psi = Eigen::VectorXd::Zero(rows());
    for (Index i = 0; i < rows(); ++i) {
      if (in_basis_[static_cast<std::size_t>(i)]) continue;
      if (residual_(i) > eps_) psi(i) = tau_(i);
      else if (residual_(i) < -eps_) psi(i) = tau_(i) - 1.0;
    }
    const Eigen::VectorXd v = a_.transpose() * psi;
    const Eigen::VectorXd price = inverse_.transpose() * v;
    const double tol = 1e-10 * (1.0 + price.cwiseAbs().maxCoeff());
    std::optional<Pivot> best;
    double best_slope = -tol;
    Index best_row = rows();
    for (Index k = 0; k < cols(); ++k) {
      const Index row = basis_[static_cast<std::size_t>(k)];
      const double t = tau_(row);
      const double slopes[2] = {-price(k) + (1.0 - t), price(k) + t};
      for (int s = 0; s < 2; ++s) {
        if (!(slopes[s] < -tol)) continue;
        const bool take = bland ? (row < best_row) : (slopes[s] < best_slope);
        if (take) {
          best = Pivot{k, s == 0 ? 1.0 : -1.0};
          best_slope = slopes[s];
          best_row = row;
        }
      }
    }
    return best;
  }

  // Returns true when the step length was zero.
  bool apply(const Pivot& pivot) {
    const Eigen::VectorXd delta = pivot.direction * inverse_.col(pivot.position);
    Eigen::VectorXd z = a_ * delta;
    const Index leaving = basis_[static_cast<std::size_t>(pivot.position)];
    for (Index r : basis_) z(r) = 0.0;
    z(leaving) = pivot.direction;

    // slope just after t = 0 with every zero-residual row counted on its left branch
    double slope = 0.0;
    struct Kink {
      double t;
      double weight;
      Index row;
    };
    std::vector<Kink> kinks;
    kinks.reserve(static_cast<std::size_t>(rows()));
    for (Index i = 0; i < rows(); ++i) {
      const double zi = z(i);
      if (zi == 0.0) continue;
      const bool basic = in_basis_[static_cast<std::size_t>(i)] != 0;
      if (basic && i != leaving) continue;
      const double ti = tau_(i);
      const double ri = residual_(i);
      if (i == leaving) {
        slope += zi > 0.0 ? (1.0 - ti) * zi : -ti * zi;
      } else if (std::abs(ri) <= eps_) {
        const double right = zi > 0.0 ? (1.0 - ti) * zi : -ti * zi;
        slope += right - std::abs(zi);
        kinks.push_back({0.0, std::abs(zi), i});
      } else {
        const double psi = ri > 0.0 ? ti : ti - 1.0;
        slope -= psi * zi;
        const double tk = ri / zi;
        if (tk > 0.0) kinks.push_back({tk, std::abs(zi), i});
      }
    }
    std::sort(kinks.begin(), kinks.end(), [](const Kink& l, const Kink& r) {
      return l.t != r.t ? l.t < r.t : l.row < r.row;
    });
    const Kink* chosen = nullptr;
    for (const auto& k : kinks) {
      slope += k.weight;
      if (slope >= 0.0) {
        chosen = &k;
        break;
      }
    }
    if (!chosen) throw Error("quantile objective is unbounded along a search direction");
    const Index entering = chosen->row;
    in_basis_[static_cast<std::size_t>(leaving)] = 0;
    in_basis_[static_cast<std::size_t>(entering)] = 1;
    basis_[static_cast<std::size_t>(pivot.position)] = entering;
    const bool degenerate = chosen->t == 0.0;
    refresh();
    return degenerate;
  }

  Eigen::MatrixXd a_;
  Eigen::VectorXd b_;
  Eigen::VectorXd tau_;
  Index data_rows_;
  double eps_;
  std::vector<char> in_basis_;
  std::vector<Index> basis_;
  Eigen::MatrixXd inverse_;
  Eigen::VectorXd alpha_;
  Eigen::VectorXd residual_;
  double objective_ = 0.0;
};

}  // namespace

double quantile_objective(const DesignMatrix& x, const Eigen::VectorXd& y, double tau, double nu,
                          const Eigen::VectorXd& coefficients) {
  if (coefficients.size() != x.cols()) throw DimensionError("coefficient length does not match design");
  if (x.rows() != y.size()) throw DimensionError("response length does not match design rows");
  const Eigen::VectorXd r = y - x.values() * coefficients;
  double loss = 0.0;
  for (Index t = 0; t < r.size(); ++t) loss += check_loss(tau, r(t));
  return loss + nu * x.weighted_l1(coefficients);
}

QuantileFit fit_penalized_quantile(const DesignMatrix& x, const Eigen::VectorXd& y, double tau, double nu,
                                   const QuantileOptions& options) {
  validate_problem(x, y, tau, nu);
  const Index n_obs = x.rows();
  const Index p = x.cols();

  std::vector<Index> kept;
  for (Index j = 0; j < p; ++j) {
    if (x.scales()(j) > 0.0) kept.push_back(j);
    else if (nu == 0.0) {
      throw InvalidArgument("design column " + std::to_string(j) +
                            " is identically zero; its coefficient is unidentified without a penalty");
    }
  }
  const Index m = static_cast<Index>(kept.size());
  const double y_scale = 1.0 + (n_obs > 0 ? y.cwiseAbs().maxCoeff() : 0.0);

  QuantileFit fit;
  fit.tau = tau;
  fit.nu = nu;
  fit.coefficients = Eigen::VectorXd::Zero(p);
  if (m == 0) {
    fit.objective = quantile_objective(x, y, tau, nu, fit.coefficients);
    fit.certificate = quantile_certificate(fit, x, y);
    return fit;
  }

  const Index penalty_rows = nu > 0.0 ? m : 0;
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(n_obs + penalty_rows, m);
  Eigen::VectorXd b = Eigen::VectorXd::Zero(n_obs + penalty_rows);
  Eigen::VectorXd row_tau = Eigen::VectorXd::Constant(n_obs + penalty_rows, tau);
  for (Index k = 0; k < m; ++k) a.col(k).head(n_obs) = x.values().col(kept[static_cast<std::size_t>(k)]);
  b.head(n_obs) = y;
  for (Index k = 0; k < penalty_rows; ++k) {
    // rho_{1/2}(-2 w a_k) = w |a_k|
    a(n_obs + k, k) = 2.0 * nu * x.scales()(kept[static_cast<std::size_t>(k)]);
    row_tau(n_obs + k) = 0.5;
  }

  VertexSolver solver(std::move(a), std::move(b), std::move(row_tau), n_obs, y_scale);
  bool started = !options.initial_basis.empty() && solver.set_basis(options.initial_basis);
  if (!started && penalty_rows > 0) {
    std::vector<Index> basis(static_cast<std::size_t>(m));
    std::iota(basis.begin(), basis.end(), n_obs);
    started = solver.set_basis(std::move(basis));
  }
  if (!started) {
    Eigen::MatrixXd xt(m, n_obs);
    for (Index k = 0; k < m; ++k) xt.row(k) = x.values().col(kept[static_cast<std::size_t>(k)]).transpose();
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(xt);
    if (qr.rank() < m) {
      throw InvalidArgument("design has rank below its column count; unpenalized fit is unidentified");
    }
    std::vector<Index> basis(static_cast<std::size_t>(m));
    for (Index k = 0; k < m; ++k) basis[static_cast<std::size_t>(k)] = qr.colsPermutation().indices()(k);
    started = solver.set_basis(std::move(basis));
    if (!started) throw InvalidArgument("could not find a nonsingular starting vertex");
  }

  const int iterations =
      solver.solve(options.max_iterations, options.record_trace ? &fit.objective_trace : nullptr);
  for (Index k = 0; k < m; ++k) fit.coefficients(kept[static_cast<std::size_t>(k)]) = solver.solution()(k);
  fit.basis = solver.basis();
  fit.iterations = iterations < 0 ? options.max_iterations : iterations;
  fit.objective = quantile_objective(x, y, tau, nu, fit.coefficients);
  fit.certificate = quantile_certificate(fit, x, y);
  if (iterations < 0) {
    throw NotConverged<QuantileFit>("quantile solver exhausted its iteration budget", fit);
  }
  if (fit.certificate > options.certificate_tolerance * y_scale) {
    throw NotConverged<QuantileFit>(
        "quantile solution failed its optimality certificate (" + std::to_string(fit.certificate) + ")", fit);
  }
  return fit;
}

double quantile_certificate(const Eigen::VectorXd& coefficients, double tau, double nu, const DesignMatrix& x,
                            const Eigen::VectorXd& y) {
  validate_problem(x, y, tau, nu);
  if (coefficients.size() != x.cols()) throw DimensionError("coefficient length does not match design");
  const Index n_obs = x.rows();
  const Index p = x.cols();
  const Eigen::MatrixXd& xv = x.values();
  const Eigen::VectorXd r = y - xv * coefficients;
  const double zero_tol = 1e-9 * (1.0 + y.cwiseAbs().maxCoeff());

  std::vector<Index> zero_rows;
  Eigen::VectorXd base = Eigen::VectorXd::Zero(p);
  for (Index t = 0; t < n_obs; ++t) {
    if (std::abs(r(t)) <= zero_tol) {
      zero_rows.push_back(t);
    } else {
      const double psi = r(t) > 0.0 ? tau : tau - 1.0;
      base.noalias() -= psi * xv.row(t).transpose();
    }
  }
  const Eigen::VectorXd w = nu * x.scales();
  const auto violations = [&](const Eigen::VectorXd& v) {
    Eigen::VectorXd e(p);
    for (Index i = 0; i < p; ++i) {
      if (coefficients(i) != 0.0) {
        e(i) = v(i) + w(i) * sign_of(coefficients(i));
      } else {
        e(i) = sign_of(v(i)) * std::max(std::abs(v(i)) - w(i), 0.0);
      }
    }
    return e;
  };
  const Index nz = static_cast<Index>(zero_rows.size());
  if (nz == 0) return violations(base).cwiseAbs().maxCoeff() / static_cast<double>(n_obs);

  Eigen::MatrixXd xz(nz, p);
  for (Index k = 0; k < nz; ++k) xz.row(k) = xv.row(zero_rows[static_cast<std::size_t>(k)]);
  const double lo = tau - 1.0;
  const double hi = tau;

  // Stage 1: solve the equality part (active or unpenalized coordinates) by least squares.
  std::vector<Index> eq;
  for (Index i = 0; i < p; ++i) {
    if (coefficients(i) != 0.0 || w(i) == 0.0) eq.push_back(i);
  }
  Eigen::VectorXd g = Eigen::VectorXd::Zero(nz);
  if (!eq.empty()) {
    const Index ne = static_cast<Index>(eq.size());
    Eigen::MatrixXd lhs(ne, nz);
    Eigen::VectorXd rhs(ne);
    for (Index k = 0; k < ne; ++k) {
      const Index i = eq[static_cast<std::size_t>(k)];
      lhs.row(k) = xz.col(i).transpose();
      rhs(k) = base(i) + w(i) * sign_of(coefficients(i));
    }
    g = lhs.completeOrthogonalDecomposition().solve(rhs);
    g = g.cwiseMax(lo).cwiseMin(hi);
  }

  Eigen::VectorXd v = base - xz.transpose() * g;
  double best = violations(v).cwiseAbs().maxCoeff();
  const double target = 1e-14 * (1.0 + base.cwiseAbs().maxCoeff());
  if (best <= target) return best / static_cast<double>(n_obs);

  // Stage 2: projected coordinate descent on the squared violations.
  const auto derivative = [&](Index k, double shift) {
    double d = 0.0;
    for (Index i = 0; i < p; ++i) {
      const double vi = v(i) - xz(k, i) * shift;
      double e;
      if (coefficients(i) != 0.0) e = vi + w(i) * sign_of(coefficients(i));
      else e = sign_of(vi) * std::max(std::abs(vi) - w(i), 0.0);
      d -= 2.0 * e * xz(k, i);
    }
    return d;
  };
  double previous = violations(v).squaredNorm();
  for (int sweep = 0; sweep < 300; ++sweep) {
    for (Index k = 0; k < nz; ++k) {
      const double lo_shift = lo - g(k);
      const double hi_shift = hi - g(k);
      double shift;
      if (derivative(k, lo_shift) >= 0.0) shift = lo_shift;
      else if (derivative(k, hi_shift) <= 0.0) shift = hi_shift;
      else {
        double l = lo_shift, h = hi_shift;
        for (int it = 0; it < 60; ++it) {
          const double mid = 0.5 * (l + h);
          if (derivative(k, mid) > 0.0) h = mid;
          else l = mid;
        }
        shift = 0.5 * (l + h);
      }
      if (shift != 0.0) {
        g(k) += shift;
        v.noalias() -= shift * xz.row(k).transpose();
      }
    }
    const Eigen::VectorXd e = violations(v);
    best = std::min(best, e.cwiseAbs().maxCoeff());
    const double current = e.squaredNorm();
    if (best <= target || previous - current <= 1e-15 * previous) break;
    previous = current;
  }
  return best / static_cast<double>(n_obs);
}

double quantile_certificate(const QuantileFit& fit, const DesignMatrix& x, const Eigen::VectorXd& y) {
  return quantile_certificate(fit.coefficients, fit.tau, fit.nu, x, y);
}

double quantile_penalty_max(const DesignMatrix& x, const Eigen::VectorXd& y, double tau) {
  validate_problem(x, y, tau, 0.0);
  Eigen::VectorXd psi(y.size());
  for (Index t = 0; t < y.size(); ++t) psi(t) = y(t) > 0.0 ? tau : (y(t) < 0.0 ? tau - 1.0 : 0.0);
  const Eigen::VectorXd grad = x.values().transpose() * psi;
  double out = 0.0;
  for (Index j = 0; j < x.cols(); ++j) {
    if (x.scales()(j) > 0.0) out = std::max(out, std::abs(grad(j)) / x.scales()(j));
  }
  return out;
}

Eigen::VectorXd predict_quantile(const QuantileFit& fit, const DesignMatrix& x_new) {
  if (x_new.cols() != fit.coefficients.size()) throw DimensionError("design width does not match fit");
  return x_new.values() * fit.coefficients;
}

void to_json(nlohmann::json& j, const QuantileFit& fit) {
  j = nlohmann::json{{"coefficients", std::vector<double>(fit.coefficients.data(),
                                                          fit.coefficients.data() + fit.coefficients.size())},
                     {"tau", fit.tau},
                     {"nu", fit.nu},
                     {"objective", fit.objective},
                     {"certificate", fit.certificate},
                     {"iterations", fit.iterations}};
}

}  // namespace eslasso
