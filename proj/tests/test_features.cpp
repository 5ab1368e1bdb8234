#include "eslasso/errors.hpp"
#include "eslasso/features.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

#include <doctest.h>

#include <random>

using namespace eslasso;
using doctest::Approx;

TEST_CASE("rescale_to_interval") {
  const ApproximationInterval iv{0.0, 4.0};
  CHECK(rescale_to_interval(0.0, iv) == -1.0);
  CHECK(rescale_to_interval(4.0, iv) == 1.0);
  CHECK(rescale_to_interval(2.0, iv) == 0.0);
  CHECK(rescale_to_interval(3.0, iv) == 0.5);
  CHECK(rescale_to_interval(1.0, {-3.0, 5.0}) == 0.0);
  CHECK_THROWS_AS(rescale_to_interval(1.0, {2.0, 2.0}), DegenerateIntervalError);
  CHECK_THROWS_AS(rescale_to_interval(1.0, {3.0, 2.0}), DegenerateIntervalError);
}

TEST_CASE("chebyshev_value small cases") {
  CHECK(chebyshev_value(0, 7.5) == 1.0);
  CHECK(chebyshev_value(1, 0.3) == Approx(0.3).epsilon(1e-15));
  CHECK(chebyshev_value(2, 0.5) == Approx(-0.5).epsilon(1e-14));
  CHECK(chebyshev_value(2, 1.5) == Approx(3.5).epsilon(1e-14));
  CHECK(chebyshev_value(3, -2.0) == Approx(4.0 * -8.0 - 3.0 * -2.0).epsilon(1e-13));
}

TEST_CASE("chebyshev_value agrees with the three-term recurrence") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> inside(-1.0, 1.0), wide(-3.0, 3.0);
  for (int i = 0; i < 2000; ++i) {
    const double s = inside(rng), w = wide(rng);
    for (int k = 0; k <= 10; ++k) {
      CHECK(std::abs(chebyshev_value(k, s) - oracle::chebyshev_recurrence(k, s)) <= 1e-10);
      const double r = oracle::chebyshev_recurrence(k, w);
      CHECK(std::abs(chebyshev_value(k, w) - r) <= 1e-8 * std::max(1.0, std::abs(r)));
    }
  }
}

TEST_CASE("build_dictionary column layout") {
  Eigen::MatrixXd raw(3, 1);
  raw << 0, 2, 4;
  auto fit = build_dictionary(raw, 1);
  REQUIRE(fit.design.cols() == 2);
  CHECK(fit.design.values().col(0) == Eigen::Vector3d(1, 1, 1));
  CHECK(fit.design.values().col(1) == Eigen::Vector3d(-1, 0, 1));
  CHECK(fit.design.has_intercept());

  fit = build_dictionary(raw, 2);
  REQUIRE(fit.design.cols() == 3);
  CHECK(fit.design.values().col(2).isApprox(Eigen::Vector3d(1, -1, 1)));

  std::mt19937_64 rng(5);
  const Eigen::MatrixXd two = testutil::gaussian(rng, 40, 2);
  const auto f2 = build_dictionary(two, 3);
  CHECK(f2.design.cols() == 7);
  CHECK(f2.dictionary.column_of(1, 2) == 5);
  // Column order: intercept, then T_1..T_K per regressor.
  const double s = rescale_to_interval(two(4, 1), f2.dictionary.intervals[1]);
  CHECK(f2.design.values()(4, 5) == Approx(oracle::chebyshev_recurrence(2, s)).epsilon(1e-12));
}

TEST_CASE("build_dictionary errors and out-of-interval rows") {
  Eigen::MatrixXd raw(4, 2);
  raw << 1, 3, 2, 3, 3, 3, 4, 3;
  CHECK_THROWS_AS(build_dictionary(raw, 2), DegenerateIntervalError);
  CHECK_THROWS_AS(build_dictionary(Eigen::MatrixXd::Zero(3, 1), 0), InvalidArgument);

  Eigen::MatrixXd ok(3, 1);
  ok << 0, 2, 4;
  const auto fit = build_dictionary(ok, 2);
  Eigen::MatrixXd outside(1, 1);
  outside << 6.0;  // maps to 2
  const Eigen::MatrixXd v = fit.dictionary.transform_values(outside);
  CHECK(v(0, 1) == Approx(2.0));
  CHECK(v(0, 2) == Approx(7.0));
}

TEST_CASE("simulation dictionary") {
  std::mt19937_64 rng(9);
  const Eigen::MatrixXd raw = testutil::gaussian(rng, 300, 7);
  const auto fit = simulation_dictionary(raw, 5);
  CHECK(fit.design.cols() == 36);
  CHECK(fit.design.values().col(0).isOnes());
  // Nonnegative in-interval entries, unit standard deviation per column.
  CHECK(fit.design.values().minCoeff() >= 0.0);
  for (Eigen::Index j = 1; j < 36; ++j) {
    const Eigen::VectorXd c = fit.design.values().col(j);
    const double mean = c.mean();
    const double var = (c.array() - mean).square().mean();
    CHECK(var == Approx(1.0).epsilon(1e-10));
  }
  // Symmetric raw column: the shifted T_1 column has mean 1 before standardization.
  Eigen::MatrixXd sym(4, 1);
  sym << -3, -1, 1, 3;
  const auto s1 = simulation_dictionary(sym, 1);
  CHECK((s1.design.values().col(1) * s1.dictionary.divisors(1)).mean() == Approx(1.0));
  // Same divisors reproduce the transform on new data.
  const auto again = fit.dictionary.transform(raw);
  CHECK(again.values() == fit.design.values());
}

TEST_CASE("simulation dictionary rejects a constant transformed column") {
  // Two-point symmetric raw column: T_2 is 1 at both endpoints.
  Eigen::MatrixXd raw(4, 1);
  raw << -1, 1, -1, 1;
  CHECK_THROWS_AS(simulation_dictionary(raw, 2), InvalidArgument);
}

TEST_CASE("dictionary JSON round trip") {
  std::mt19937_64 rng(2);
  const auto fit = build_dictionary(testutil::gaussian(rng, 20, 3), 4);
  nlohmann::json j = fit.dictionary;
  const auto back = j.get<ChebyshevDictionary>();
  CHECK(back.degree == 4);
  REQUIRE(back.intervals.size() == 3);
  CHECK(back.intervals[2].b == fit.dictionary.intervals[2].b);
  const Eigen::MatrixXd raw = testutil::gaussian(rng, 5, 3);
  CHECK(back.transform_values(raw) == fit.dictionary.transform_values(raw));
}
