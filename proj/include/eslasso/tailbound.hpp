#pragma once

#include "eslasso/model_selection.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <vector>

namespace eslasso {

/// 2 d_T blocks of length a_T followed by a remainder of T - 2 a_T d_T periods.
struct BlockingStrategy {
  Index a = 1;
  Index d = 0;
  Index T = 0;
  /// Throws InvalidArgument unless a >= 1, d >= 0 and 2 a d <= T.
  void validate() const;
};

/// a_T = ceil(T^{1/(1+mu')}), d_T = floor(T / (2 a_T)). Requires T >= 2 and
/// mu' > 0. For very small T the result can have d_T = 0, leaving every period
/// in the remainder.
BlockingStrategy blocking_from_rate(Index T, double mu_prime);

/// Alternating blocks as 0-based half-open ranges: H_j = [2(j-1)a, (2j-1)a),
/// G_j = [(2j-1)a, 2ja), Q = [2da, T).
struct BlockPartition {
  std::vector<RowRange> H;
  std::vector<RowRange> G;
  RowRange Q;
};
BlockPartition block_indices(const BlockingStrategy& bs);

struct FukNagaevConstants {
  double C1 = 1.0;
  double C2 = 1.0;
  /// beta(a) <= c rho^a for the AR(1) generators.
  double c = 0.0;
};

/// 3 p a (C1 / (u^q d^{q-1}) + exp(-C2 u^2 d)) + 2 p d beta_a, uncapped.
/// Infinite when d = 0.
double fuk_nagaev_bound(double u, Index p, const BlockingStrategy& bs, double q, double C1, double C2,
                        double beta_a);
/// The same bound capped at 1.
double fuk_nagaev_probability(double u, Index p, const BlockingStrategy& bs, double q, double C1, double C2,
                              double beta_a);

/// How the polynomial and Gaussian regimes are combined in a rate.
enum class Combine { Min, Max };

/// u = C3 (p a / delta)^{1/q} / d^{(q-1)/q} combined with C4 sqrt(log(p a / delta)) / sqrt(d).
/// Defaults to the smaller of the two.
double tail_threshold(double delta, Index p, const BlockingStrategy& bs, double q, double C3, double C4,
                      Combine combine = Combine::Min);
/// lambda ~ (p a)^{2/q} / d^{(q-1)/q} combined with sqrt(log(p a)) / sqrt(d), up to constants.
/// Defaults to the larger of the two.
double penalty_rate(Index p, const BlockingStrategy& bs, double q, Combine combine = Combine::Max);

/// Centered stationary sequence with p independent coordinates, each an AR(1)
/// with coefficient rho and unit marginal variance (rho = 0 gives iid N(0, 1)).
struct TailGenerator {
  double rho = 0.5;
  Index p = 10;
  Index T = 2000;
  Eigen::MatrixXd draw(std::uint64_t seed, std::uint64_t rep) const;
};

/// max_i |(1/T) sum_t w_{t,i}| for each replication.
std::vector<double> simulate_max_abs_means(const TailGenerator& gen, int reps, std::uint64_t seed, int threads = 1);

/// Fraction of values strictly above u.
double exceedance(const std::vector<double>& sorted_values, double u);

/// Nonincreasing least-squares fit (pool adjacent violators).
std::vector<double> isotonic_nonincreasing(const std::vector<double>& v);

struct TailRow {
  double u = 0.0;
  double empirical = 0.0;
  double standard_error = 0.0;
  double smoothed = 0.0;
  double bound = 0.0;
  /// bound / empirical, infinite when empirical is 0.
  double ratio = 0.0;
  bool held_out = false;
  /// Fewer than 10 exceedances, so the empirical value is imprecise.
  bool low_count = false;
};

struct TailExperimentSettings {
  TailGenerator generator;
  double q = 2.0;
  double mu_prime = 1.0;
  int reps = 5000;
  std::uint64_t seed = 1;
  int threads = 1;
  /// Constants are fitted on fit_grid and checked on check_grid.
  std::vector<double> fit_grid;
  std::vector<double> check_grid;
  /// Fitted bounds must clear empirical + margin_se standard errors on the fit grid.
  double margin_se = 3.0;
};

struct TailExperimentResult {
  BlockingStrategy blocking;
  FukNagaevConstants constants;
  /// Rows for both grids, sorted by u.
  std::vector<TailRow> rows;
  /// Held-out points where the bound falls below the empirical probability.
  int held_out_violations = 0;
  /// Largest bound / empirical over fit-grid points with empirical > 0.
  double max_ratio = 0.0;
};

/// Runs the replications, fits (C1, C2, c) on the fit grid so the bound
/// dominates with the smallest worst-case ratio bound / empirical, then
/// evaluates the held-out grid.
TailExperimentResult empirical_tail_experiment(const TailExperimentSettings& settings);

/// Fits constants to (u, target) pairs. C1 is the smallest value making the
/// bound reach every target given C2 and c, which are searched on log grids.
FukNagaevConstants fit_fuk_nagaev_constants(const std::vector<double>& u, const std::vector<double>& target,
                                            const std::vector<double>& empirical, Index p,
                                            const BlockingStrategy& bs, double q, double rho);

/// Columns: u, empirical, bound, ratio.
void write_tail_csv(const std::filesystem::path& path, const TailExperimentResult& result);

void to_json(nlohmann::json& j, const BlockingStrategy& bs);
void to_json(nlohmann::json& j, const FukNagaevConstants& c);

}  // namespace eslasso
