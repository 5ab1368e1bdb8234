#include "eslasso/tailbound.hpp"

#include "eslasso/csv.hpp"
#include "eslasso/errors.hpp"
#include "eslasso/parallel.hpp"
#include "eslasso/simulation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace eslasso {

void BlockingStrategy::validate() const {
  if (a < 1 || d < 0 || T < 1) throw InvalidArgument("blocking needs a >= 1, d >= 0, T >= 1");
  if (2 * a * d > T) throw InvalidArgument("blocks exceed the sample: 2 a d > T");
}

BlockingStrategy blocking_from_rate(Index T, double mu_prime) {
  if (T < 2) throw InvalidArgument("blocking needs T >= 2");
  if (!(mu_prime > 0.0) || !std::isfinite(mu_prime)) throw InvalidArgument("mu' must be positive");
  const double e = 1.0 + mu_prime;
  const double tt = static_cast<double>(T);
  Index a = static_cast<Index>(std::ceil(std::pow(tt, 1.0 / e)));
  // pow can land a hair off an exact root; settle the ceiling on the integers
  while (a > 1 && std::pow(static_cast<double>(a - 1), e) >= tt) --a;
  while (std::pow(static_cast<double>(a), e) < tt) ++a;
  a = std::max<Index>(a, 1);
  BlockingStrategy bs{a, T / (2 * a), T};
  bs.validate();
  return bs;
}

BlockPartition block_indices(const BlockingStrategy& bs) {
  bs.validate();
  BlockPartition out;
  for (Index j = 1; j <= bs.d; ++j) {
    out.H.push_back({2 * (j - 1) * bs.a, (2 * j - 1) * bs.a});
    out.G.push_back({(2 * j - 1) * bs.a, 2 * j * bs.a});
  }
  out.Q = {2 * bs.d * bs.a, bs.T};
  return out;
}

double fuk_nagaev_bound(double u, Index p, const BlockingStrategy& bs, double q, double C1, double C2,
                        double beta_a) {
  if (!(u > 0.0) || p < 1 || !(q >= 2.0) || !(C1 > 0.0) || !(C2 > 0.0) || !(beta_a >= 0.0)) {
    throw InvalidArgument("bound needs u > 0, p >= 1, q >= 2, C1, C2 > 0 and beta >= 0");
  }
  if (bs.d == 0) return std::numeric_limits<double>::infinity();
  const double pa = static_cast<double>(p) * static_cast<double>(bs.a);
  const double d = static_cast<double>(bs.d);
  const double poly = C1 / (std::pow(u, q) * std::pow(d, q - 1.0));
  const double gauss = std::exp(-C2 * u * u * d);
  return 3.0 * pa * (poly + gauss) + 2.0 * static_cast<double>(p) * d * beta_a;
}

double fuk_nagaev_probability(double u, Index p, const BlockingStrategy& bs, double q, double C1, double C2,
                              double beta_a) {
  return std::min(1.0, fuk_nagaev_bound(u, p, bs, q, C1, C2, beta_a));
}

double tail_threshold(double delta, Index p, const BlockingStrategy& bs, double q, double C3, double C4,
                      Combine combine) {
  if (!(delta > 0.0 && delta < 1.0)) throw InvalidArgument("delta must lie in (0, 1)");
  if (bs.d < 1) throw InvalidArgument("threshold needs at least one block pair");
  const double x = static_cast<double>(p) * static_cast<double>(bs.a) / delta;
  const double d = static_cast<double>(bs.d);
  const double poly = C3 * std::pow(x, 1.0 / q) / std::pow(d, (q - 1.0) / q);
  const double gauss = C4 * std::sqrt(std::log(x)) / std::sqrt(d);
  return combine == Combine::Min ? std::min(poly, gauss) : std::max(poly, gauss);
}

double penalty_rate(Index p, const BlockingStrategy& bs, double q, Combine combine) {
  if (bs.d < 1) throw InvalidArgument("rate needs at least one block pair");
  const double pa = static_cast<double>(p) * static_cast<double>(bs.a);
  const double d = static_cast<double>(bs.d);
  const double poly = std::pow(pa, 2.0 / q) / std::pow(d, (q - 1.0) / q);
  const double gauss = std::sqrt(std::log(std::max(pa, 1.0))) / std::sqrt(d);
  return combine == Combine::Min ? std::min(poly, gauss) : std::max(poly, gauss);
}

Eigen::MatrixXd TailGenerator::draw(std::uint64_t seed, std::uint64_t rep) const {
  if (!(std::abs(rho) < 1.0) || p < 1 || T < 1) throw InvalidArgument("generator needs |rho| < 1, p >= 1, T >= 1");
  Rng rng = make_rng(seed, rep);
  std::normal_distribution<double> normal(0.0, 1.0);
  const double innov = std::sqrt(1.0 - rho * rho);
  Eigen::MatrixXd w(T, p);
  for (Index i = 0; i < p; ++i) {
    double prev = normal(rng);
    for (Index t = 0; t < T; ++t) {
      if (t > 0) prev = rho * prev + innov * normal(rng);
      w(t, i) = prev;
    }
  }
  return w;
}

std::vector<double> simulate_max_abs_means(const TailGenerator& gen, int reps, std::uint64_t seed, int threads) {
  if (reps < 1) throw InvalidArgument("reps must be at least 1");
  std::vector<double> out(static_cast<std::size_t>(reps));
  parallel_for(out.size(), threads, [&](std::size_t r) {
    const Eigen::MatrixXd w = gen.draw(seed, r);
    out[r] = w.colwise().mean().cwiseAbs().maxCoeff();
  });
  return out;
}

double exceedance(const std::vector<double>& sorted_values, double u) {
  if (sorted_values.empty()) return 0.0;
  const auto it = std::upper_bound(sorted_values.begin(), sorted_values.end(), u);
  return static_cast<double>(sorted_values.end() - it) / static_cast<double>(sorted_values.size());
}

std::vector<double> isotonic_nonincreasing(const std::vector<double>& v) {
  // blocks of (mean, weight); merge while a later block exceeds an earlier one
  std::vector<double> mean;
  std::vector<std::size_t> weight;
  for (double x : v) {
    mean.push_back(x);
    weight.push_back(1);
    while (mean.size() > 1 && mean[mean.size() - 1] > mean[mean.size() - 2]) {
      const std::size_t w1 = weight[weight.size() - 2], w2 = weight.back();
      const double m = (mean[mean.size() - 2] * static_cast<double>(w1) + mean.back() * static_cast<double>(w2)) /
                       static_cast<double>(w1 + w2);
      mean.pop_back();
      weight.pop_back();
      mean.back() = m;
      weight.back() = w1 + w2;
    }
  }
  std::vector<double> out;
  out.reserve(v.size());
  for (std::size_t b = 0; b < mean.size(); ++b) out.insert(out.end(), weight[b], mean[b]);
  return out;
}

FukNagaevConstants fit_fuk_nagaev_constants(const std::vector<double>& u, const std::vector<double>& target,
                                            const std::vector<double>& empirical, Index p,
                                            const BlockingStrategy& bs, double q, double rho) {
  if (u.empty() || u.size() != target.size() || u.size() != empirical.size()) {
    throw InvalidArgument("fit needs equally long, nonempty u, target and empirical grids");
  }
  if (bs.d < 1) throw InvalidArgument("fit needs at least one block pair");
  const double pa = static_cast<double>(p) * static_cast<double>(bs.a);
  const double d = static_cast<double>(bs.d);
  const double beta_unit = 2.0 * static_cast<double>(p) * d * std::pow(std::abs(rho), static_cast<double>(bs.a));

  std::vector<double> c2_grid, c_grid{0.0};
  for (int i = 0; i <= 240; ++i) c2_grid.push_back(std::pow(10.0, -4.0 + 8.0 * i / 240.0));
  if (beta_unit > 0.0) {
    for (int i = 0; i <= 60; ++i) c_grid.push_back(std::pow(10.0, -6.0 + 12.0 * i / 60.0));
  }

  FukNagaevConstants best;
  double best_ratio = std::numeric_limits<double>::infinity();
  for (double c2 : c2_grid) {
    for (double c : c_grid) {
      const double floor_term = c * beta_unit;
      double c1 = 1e-12;
      for (std::size_t i = 0; i < u.size(); ++i) {
        const double rest = target[i] - 3.0 * pa * std::exp(-c2 * u[i] * u[i] * d) - floor_term;
        if (rest > 0.0) c1 = std::max(c1, rest * std::pow(u[i], q) * std::pow(d, q - 1.0) / (3.0 * pa));
      }
      double ratio = 0.0;
      for (std::size_t i = 0; i < u.size(); ++i) {
        if (empirical[i] > 0.0) {
          ratio = std::max(ratio, fuk_nagaev_bound(u[i], p, bs, q, c1, c2, c * std::pow(std::abs(rho), bs.a)) /
                                      empirical[i]);
        }
      }
      if (ratio < best_ratio) {
        best_ratio = ratio;
        best = {c1, c2, c};
      }
    }
  }
  return best;
}

TailExperimentResult empirical_tail_experiment(const TailExperimentSettings& s) {
  if (s.fit_grid.empty() || s.check_grid.empty()) throw InvalidArgument("u-grids must be nonempty");
  for (double u : s.fit_grid) {
    if (!(u > 0.0)) throw InvalidArgument("u-grid values must be positive");
  }
  for (double u : s.check_grid) {
    if (!(u > 0.0)) throw InvalidArgument("u-grid values must be positive");
  }
  if (!(s.q >= 2.0)) throw InvalidArgument("q must be at least 2");
  TailExperimentResult out;
  out.blocking = blocking_from_rate(s.generator.T, s.mu_prime);
  if (out.blocking.d < 1) throw InvalidArgument("T too small for the blocking rate");

  std::vector<double> maxima = simulate_max_abs_means(s.generator, s.reps, s.seed, s.threads);
  std::sort(maxima.begin(), maxima.end());
  const double n = static_cast<double>(s.reps);

  struct Point {
    double u;
    bool held_out;
  };
  std::vector<Point> points;
  for (double u : s.fit_grid) points.push_back({u, false});
  for (double u : s.check_grid) points.push_back({u, true});
  std::stable_sort(points.begin(), points.end(), [](const Point& a, const Point& b) { return a.u < b.u; });

  std::vector<double> emp;
  for (const Point& pt : points) emp.push_back(exceedance(maxima, pt.u));
  const std::vector<double> smooth = isotonic_nonincreasing(emp);

  std::vector<double> fu, ftarget, femp;
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (points[i].held_out) continue;
    const double se = std::sqrt(std::max(emp[i] * (1.0 - emp[i]), 1.0 / n) / n);
    fu.push_back(points[i].u);
    ftarget.push_back(std::min(1.0, emp[i] + s.margin_se * se));
    femp.push_back(emp[i]);
  }
  out.constants = fit_fuk_nagaev_constants(fu, ftarget, femp, s.generator.p, out.blocking, s.q, s.generator.rho);
  const double beta_a = out.constants.c * std::pow(std::abs(s.generator.rho), static_cast<double>(out.blocking.a));

  for (std::size_t i = 0; i < points.size(); ++i) {
    TailRow row;
    row.u = points[i].u;
    row.empirical = emp[i];
    row.standard_error = std::sqrt(emp[i] * (1.0 - emp[i]) / n);
    row.smoothed = smooth[i];
    row.bound = fuk_nagaev_probability(row.u, s.generator.p, out.blocking, s.q, out.constants.C1, out.constants.C2,
                                       beta_a);
    row.ratio = emp[i] > 0.0 ? row.bound / emp[i] : std::numeric_limits<double>::infinity();
    row.held_out = points[i].held_out;
    row.low_count = emp[i] * n < 10.0;
    if (row.held_out && row.bound < row.empirical) ++out.held_out_violations;
    if (!row.held_out && emp[i] > 0.0) out.max_ratio = std::max(out.max_ratio, row.ratio);
    out.rows.push_back(row);
  }
  return out;
}

void write_tail_csv(const std::filesystem::path& path, const TailExperimentResult& result) {
  std::vector<std::vector<std::string>> rows;
  for (const TailRow& r : result.rows) {
    rows.push_back({format_number(r.u), format_number(r.empirical), format_number(r.bound), format_number(r.ratio)});
  }
  write_csv(path, {"u", "empirical", "bound", "ratio"}, rows);
}

void to_json(nlohmann::json& j, const BlockingStrategy& bs) {
  j = nlohmann::json{{"a_T", bs.a}, {"d_T", bs.d}, {"T", bs.T}};
}

void to_json(nlohmann::json& j, const FukNagaevConstants& c) {
  j = nlohmann::json{{"C1", c.C1}, {"C2", c.C2}, {"c_beta", c.c}};
}

}  // namespace eslasso
