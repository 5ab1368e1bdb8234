#pragma once

#include "eslasso/design_matrix.hpp"
#include "eslasso/features.hpp"
#include "eslasso/model_selection.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <random>
#include <vector>

namespace eslasso {

struct SimulationConfig {
  /// Estimation sample size; 2T periods are drawn and the second half is held out.
  Index T = 500;
  Index d = 7;
  int K = 3;
  int s0 = 2;
  double tau = 0.1;
  double sigma_nu = 1.0;
  double rho = 0.5;
  double theta = 0.15;
  std::uint64_t seed = 1;

  Index p() const noexcept { return 1 + d * K; }
  /// Throws InvalidArgument unless 2 s0 <= 3K, d >= 3, theta in [0, 1), |rho| < 1,
  /// tau in (0, 1), sigma_nu > 0 and T >= 2.
  void validate() const;
};

using Rng = std::mt19937_64;

/// Engine seeded from (seed, stream) through std::seed_seq, so streams for
/// different replications are unrelated.
Rng make_rng(std::uint64_t seed, std::uint64_t stream);

/// n x d draws of Z_t = rho Z_{t-1} + sqrt(theta) F_t + sqrt(1 - theta) psi_t with
/// F, psi iid N(0, 1 - rho^2), started from the stationary law
/// (unit variance, cross-correlation theta).
Eigen::MatrixXd simulate_factors(const SimulationConfig& cfg, Index n, Rng& rng);
Eigen::MatrixXd simulate_factors(const SimulationConfig& cfg, Index n);

/// E[nu | nu <= Q(tau)] for nu ~ N(0, sigma^2), that is -sigma phi(z_tau) / tau.
double truncated_normal_mean(double tau, double sigma);
/// sigma z_tau.
double normal_quantile(double tau, double sigma);

struct SimulatedSample {
  Eigen::VectorXd y;
  /// 2T x p simulation dictionary; divisors come from all 2T rows.
  DesignMatrix x;
  ShiftedDictionary dictionary;
  Eigen::MatrixXd factors;
  Eigen::VectorXd xi;
  Eigen::VectorXd zeta;
  /// Column indices (0-based, intercept = 0) in draw order.
  std::vector<Index> support_xi;
  std::vector<Index> support_zeta;
  Eigen::VectorXd alpha0;
  Eigen::VectorXd gamma0;
  /// Paths discarded because min_t X_t'zeta <= 0.
  int retries = 0;
};

/// Draws 2T periods of Y_t = X_t'xi + (X_t'zeta) nu_t. The supports of xi and
/// zeta are 2 s0 distinct indices drawn in sequence from the transforms of
/// the first three raw regressors (columns 1..3K); the i-th draw of each gets
/// the value 1/(1+i).
SimulatedSample simulate_dgp(const SimulationConfig& cfg);

struct MonteCarloOptions {
  int threads = 1;
  TwoStageSettings cv;
};

struct ReplicationRecord {
  int rep = 0;
  bool ok = false;
  std::string error;
  double alpha_error = 0.0;
  double gamma_error = 0.0;
  /// Out-of-sample sums over the held-out half.
  double mtl = 0.0;
  double es_mse = 0.0;
  double nu = 0.0;
  double lambda = 0.0;
  int retries = 0;
};

struct MetricSummary {
  double mean = 0.0;
  double se = 0.0;
};

struct MonteCarloSummary {
  SimulationConfig config;
  bool penalized = true;
  int reps = 0;
  int failures = 0;
  int retries = 0;
  MetricSummary alpha_error;
  MetricSummary gamma_error;
  MetricSummary mtl;
  MetricSummary es_mse;
  std::vector<ReplicationRecord> records;
};

/// Replication r uses the stream make_rng(cfg.seed, r); results do not depend on
/// the thread count. Failed replications are recorded and excluded from the means.
MonteCarloSummary run_monte_carlo(const SimulationConfig& cfg, int reps, bool penalized,
                                  const MonteCarloOptions& options = {});

/// One row per summary: panel columns (tau, K, sigma_nu, T, estimator) followed by
/// means and standard errors of the four metrics.
void write_summary_csv(const std::filesystem::path& path, const std::vector<MonteCarloSummary>& summaries);
void write_replications_csv(const std::filesystem::path& path, const MonteCarloSummary& summary);

void to_json(nlohmann::json& j, const SimulationConfig& cfg);
void from_json(const nlohmann::json& j, SimulationConfig& cfg);

}  // namespace eslasso
