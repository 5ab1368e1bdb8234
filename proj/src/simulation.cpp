#include "eslasso/simulation.hpp"

#include "eslasso/csv.hpp"
#include "eslasso/errors.hpp"
#include "eslasso/es.hpp"
#include "eslasso/parallel.hpp"
#include "eslasso/quantile.hpp"

#include <boost/math/distributions/normal.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace eslasso {

void SimulationConfig::validate() const {
  if (T < 2) throw InvalidArgument("T must be at least 2");
  if (d < 3) throw InvalidArgument("d must be at least 3 (three regressors carry the signal)");
  if (K < 1) throw InvalidArgument("K must be at least 1");
  if (s0 < 1 || 2 * s0 > 3 * K) throw InvalidArgument("need 1 <= s0 and 2 s0 <= 3K");
  if (!(tau > 0.0 && tau < 1.0)) throw InvalidArgument("tau must lie in (0, 1)");
  if (!(sigma_nu > 0.0) || !std::isfinite(sigma_nu)) throw InvalidArgument("sigma_nu must be positive");
  if (!(std::abs(rho) < 1.0)) throw InvalidArgument("|rho| must be below 1");
  if (!(theta >= 0.0 && theta < 1.0)) throw InvalidArgument("theta must lie in [0, 1)");
}

Rng make_rng(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32), 0x5eedu};
  return Rng(seq);
}

Eigen::MatrixXd simulate_factors(const SimulationConfig& cfg, Index n, Rng& rng) {
  if (n < 1) throw InvalidArgument("need at least one period");
  if (cfg.d < 1) throw InvalidArgument("d must be positive");
  if (!(std::abs(cfg.rho) < 1.0)) throw InvalidArgument("|rho| must be below 1");
  if (!(cfg.theta >= 0.0 && cfg.theta < 1.0)) throw InvalidArgument("theta must lie in [0, 1)");
  std::normal_distribution<double> normal(0.0, 1.0);
  const double a = std::sqrt(cfg.theta);
  const double b = std::sqrt(1.0 - cfg.theta);
  const double innov = std::sqrt(1.0 - cfg.rho * cfg.rho);
  Eigen::MatrixXd z(n, cfg.d);
  Eigen::RowVectorXd prev(cfg.d);
  const double f0 = normal(rng);
  for (Index i = 0; i < cfg.d; ++i) prev(i) = a * f0 + b * normal(rng);
  for (Index t = 0; t < n; ++t) {
    const double f = innov * normal(rng);
    for (Index i = 0; i < cfg.d; ++i) {
      prev(i) = cfg.rho * prev(i) + a * f + b * innov * normal(rng);
    }
    z.row(t) = prev;
  }
  return z;
}

Eigen::MatrixXd simulate_factors(const SimulationConfig& cfg, Index n) {
  Rng rng = make_rng(cfg.seed, 0);
  return simulate_factors(cfg, n, rng);
}

double normal_quantile(double tau, double sigma) {
  if (!(tau > 0.0 && tau < 1.0)) throw InvalidArgument("tau must lie in (0, 1)");
  return sigma * boost::math::quantile(boost::math::normal_distribution<double>(), tau);
}

double truncated_normal_mean(double tau, double sigma) {
  const boost::math::normal_distribution<double> std_normal;
  const double z = boost::math::quantile(std_normal, tau);
  return -sigma * boost::math::pdf(std_normal, z) / tau;
}

SimulatedSample simulate_dgp(const SimulationConfig& cfg) {
  cfg.validate();
  const Index n = 2 * cfg.T;
  const Index p = cfg.p();
  SimulatedSample s;

  for (std::uint64_t attempt = 1;; ++attempt) {
    Rng rng = make_rng(cfg.seed, attempt);
    std::vector<Index> candidates(static_cast<std::size_t>(3 * cfg.K));
    std::iota(candidates.begin(), candidates.end(), Index{1});
    // sequential draws without replacement
    std::vector<Index> drawn;
    for (int i = 0; i < 2 * cfg.s0; ++i) {
      std::uniform_int_distribution<std::size_t> pick(0, candidates.size() - 1);
      const std::size_t k = pick(rng);
      drawn.push_back(candidates[k]);
      candidates.erase(candidates.begin() + static_cast<std::ptrdiff_t>(k));
    }
    s.support_xi.assign(drawn.begin(), drawn.begin() + cfg.s0);
    s.support_zeta.assign(drawn.begin() + cfg.s0, drawn.end());
    s.xi = Eigen::VectorXd::Zero(p);
    s.zeta = Eigen::VectorXd::Zero(p);
    for (int i = 0; i < cfg.s0; ++i) {
      s.xi(s.support_xi[static_cast<std::size_t>(i)]) = 1.0 / (2.0 + i);
      s.zeta(s.support_zeta[static_cast<std::size_t>(i)]) = 1.0 / (2.0 + i);
    }
    s.alpha0 = s.xi + s.zeta * normal_quantile(cfg.tau, cfg.sigma_nu);
    s.gamma0 = s.xi + s.zeta * truncated_normal_mean(cfg.tau, cfg.sigma_nu);

    Eigen::MatrixXd z = simulate_factors(cfg, n, rng);
    ShiftedDictionaryFit dict = simulation_dictionary(z, cfg.K);
    const Eigen::VectorXd scale = dict.design.values() * s.zeta;
    if (scale.minCoeff() <= 0.0) {
      ++s.retries;
      if (s.retries > 1000) throw Error("volatility process stayed nonpositive after 1000 regenerations");
      continue;
    }
    std::normal_distribution<double> nu(0.0, cfg.sigma_nu);
    s.y.resize(n);
    const Eigen::VectorXd mean = dict.design.values() * s.xi;
    for (Index t = 0; t < n; ++t) s.y(t) = mean(t) + scale(t) * nu(rng);
    s.factors = std::move(z);
    s.x = std::move(dict.design);
    s.dictionary = std::move(dict.dictionary);
    break;
  }
  return s;
}

namespace {

MetricSummary summarize(const std::vector<double>& v) {
  MetricSummary m;
  if (v.empty()) return {std::nan(""), std::nan("")};
  const double n = static_cast<double>(v.size());
  for (double x : v) m.mean += x;
  m.mean /= n;
  if (v.size() > 1) {
    double ss = 0.0;
    for (double x : v) ss += (x - m.mean) * (x - m.mean);
    m.se = std::sqrt(ss / (n - 1.0) / n);
  }
  return m;
}

ReplicationRecord run_replication(const SimulationConfig& base, int rep, bool penalized,
                                  const MonteCarloOptions& options) {
  ReplicationRecord r;
  r.rep = rep;
  SimulationConfig cfg = base;
  // replication streams are derived from (seed, rep)
  cfg.seed = make_rng(base.seed, static_cast<std::uint64_t>(rep) + 1)();
  const SimulatedSample s = simulate_dgp(cfg);
  r.retries = s.retries;
  const Index T = cfg.T;
  const DesignMatrix x_train = s.x.row_range(0, T);
  const DesignMatrix x_test = s.x.row_range(T, 2 * T);
  const Eigen::VectorXd y_train = s.y.head(T);
  const Eigen::VectorXd y_test = s.y.tail(T);

  Eigen::VectorXd alpha, gamma;
  if (penalized) {
    TwoStageSettings cv = options.cv;
    cv.threads = 1;
    const TwoStageResult fit = two_stage_cv(x_train, y_train, cfg.tau, cv);
    alpha = fit.quantile.coefficients;
    gamma = fit.es.coefficients;
    r.nu = fit.nu_cv.chosen;
    r.lambda = fit.lambda_cv.chosen;
  } else {
    const QuantileFit q = fit_penalized_quantile(x_train, y_train, cfg.tau, 0.0, options.cv.quantile_options);
    const AuxiliaryResponse aux = auxiliary_response(y_train, predict_quantile(q, x_train), cfg.tau);
    const ESFit e = fit_es_lasso(x_train, aux, 0.0, options.cv.es_options);
    alpha = q.coefficients;
    gamma = e.coefficients;
  }
  r.alpha_error = (alpha - s.alpha0).lpNorm<1>();
  r.gamma_error = (gamma - s.gamma0).lpNorm<1>();
  const Eigen::VectorXd q_test = x_test.values() * alpha;
  r.mtl = mean_tick_loss(y_test, q_test, cfg.tau);
  r.es_mse = es_mse(y_test, q_test, x_test.values() * gamma, cfg.tau);
  r.ok = true;
  return r;
}

}  // namespace

MonteCarloSummary run_monte_carlo(const SimulationConfig& cfg, int reps, bool penalized,
                                  const MonteCarloOptions& options) {
  cfg.validate();
  if (reps < 1) throw InvalidArgument("reps must be at least 1");
  MonteCarloSummary out;
  out.config = cfg;
  out.penalized = penalized;
  out.reps = reps;
  out.records.resize(static_cast<std::size_t>(reps));
  parallel_for(static_cast<std::size_t>(reps), options.threads, [&](std::size_t i) {
    const int rep = static_cast<int>(i);
    try {
      out.records[i] = run_replication(cfg, rep, penalized, options);
    } catch (const std::exception& e) {
      ReplicationRecord bad;
      bad.rep = rep;
      bad.error = e.what();
      out.records[i] = std::move(bad);
    }
  });
  std::vector<double> a, g, m, e;
  for (const ReplicationRecord& r : out.records) {
    out.retries += r.retries;
    if (!r.ok) {
      ++out.failures;
      continue;
    }
    a.push_back(r.alpha_error);
    g.push_back(r.gamma_error);
    m.push_back(r.mtl);
    e.push_back(r.es_mse);
  }
  out.alpha_error = summarize(a);
  out.gamma_error = summarize(g);
  out.mtl = summarize(m);
  out.es_mse = summarize(e);
  return out;
}

void write_summary_csv(const std::filesystem::path& path, const std::vector<MonteCarloSummary>& summaries) {
  const std::vector<std::string> header{"tau",           "K",        "sigma_nu",       "T",
                                        "estimator",     "reps",     "failures",       "alpha_error_mean",
                                        "alpha_error_se", "gamma_error_mean", "gamma_error_se", "mtl_mean",
                                        "mtl_se",        "es_mse_mean", "es_mse_se"};
  std::vector<std::vector<std::string>> rows;
  for (const MonteCarloSummary& s : summaries) {
    rows.push_back({format_number(s.config.tau), std::to_string(s.config.K), format_number(s.config.sigma_nu),
                    std::to_string(s.config.T), s.penalized ? "penalized" : "unpenalized", std::to_string(s.reps),
                    std::to_string(s.failures), format_number(s.alpha_error.mean), format_number(s.alpha_error.se),
                    format_number(s.gamma_error.mean), format_number(s.gamma_error.se), format_number(s.mtl.mean),
                    format_number(s.mtl.se), format_number(s.es_mse.mean), format_number(s.es_mse.se)});
  }
  write_csv(path, header, rows);
}

void write_replications_csv(const std::filesystem::path& path, const MonteCarloSummary& summary) {
  const std::vector<std::string> header{"rep", "ok",     "alpha_error", "gamma_error", "mtl",
                                        "es_mse", "nu", "lambda",      "retries",     "error"};
  std::vector<std::vector<std::string>> rows;
  for (const ReplicationRecord& r : summary.records) {
    rows.push_back({std::to_string(r.rep), r.ok ? "1" : "0", format_number(r.alpha_error),
                    format_number(r.gamma_error), format_number(r.mtl), format_number(r.es_mse), format_number(r.nu),
                    format_number(r.lambda), std::to_string(r.retries), r.error});
  }
  write_csv(path, header, rows);
}

void to_json(nlohmann::json& j, const SimulationConfig& cfg) {
  j = nlohmann::json{{"T", cfg.T},
                     {"d", cfg.d},
                     {"K", cfg.K},
                     {"s0", cfg.s0},
                     {"tau", cfg.tau},
                     {"sigma_nu", cfg.sigma_nu},
                     {"rho", cfg.rho},
                     {"theta", cfg.theta},
                     {"seed", cfg.seed}};
}

void from_json(const nlohmann::json& j, SimulationConfig& cfg) {
  SimulationConfig out;
  out.T = j.value("T", out.T);
  out.d = j.value("d", out.d);
  out.K = j.value("K", out.K);
  out.s0 = j.value("s0", out.s0);
  out.tau = j.value("tau", out.tau);
  out.sigma_nu = j.value("sigma_nu", out.sigma_nu);
  out.rho = j.value("rho", out.rho);
  out.theta = j.value("theta", out.theta);
  out.seed = j.value("seed", out.seed);
  cfg = out;
}

}  // namespace eslasso
