#include "eslasso/coes.hpp"
#include "eslasso/csv.hpp"
#include "eslasso/errors.hpp"
#include "eslasso/simulation.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

#include <doctest.h>

#include <random>
#include <sstream>

using namespace eslasso;
using doctest::Approx;

namespace {

// Writes a panel CSV with columns date, mkt, ind, s1, s2.
std::filesystem::path write_panel(const std::filesystem::path& dir, int rows, std::uint64_t seed,
                                  const std::string& hole = "") {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  std::ostringstream s;
  s << "date,mkt,ind,s1,s2\n";
  for (int t = 0; t < rows; ++t) {
    s << 10000 + t << ',' << n(rng) << ',' << n(rng) << ',';
    if (t == 10 && !hole.empty()) s << hole;
    else s << n(rng);
    s << ',' << n(rng) << '\n';
  }
  const auto p = dir / "panel.csv";
  testutil::spit(p, s.str());
  return p;
}

PanelColumns roles() {
  PanelColumns c;
  c.market = "mkt";
  c.industry = "ind";
  c.state = {"s1", "s2"};
  return c;
}

// Industry returns load on the lagged state; the market loads on the industry.
Panel dependent_panel(Index T, std::uint64_t seed, double market_loading) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  Eigen::MatrixXd state(T, 1);
  Eigen::VectorXd ind(T), mkt(T);
  std::vector<std::string> dates;
  for (Index t = 0; t < T; ++t) {
    state(t, 0) = n(rng);
    ind(t) = 1.0 + 0.5 * state(t, 0) + n(rng);
    mkt(t) = market_loading * ind(t) + 0.5 * n(rng);
    dates.push_back(std::to_string(t + 1));
  }
  return make_panel(dates, mkt, ind, state, {"z"});
}

}  // namespace

TEST_CASE("panel ingestion") {
  const auto dir = testutil::scratch_dir("coes_load");
  const auto path = write_panel(dir, 1000, 1);
  const Panel p = load_panel(path, roles());
  CHECK(p.rows() == 999);
  CHECK(p.dropped_rows == 0);
  CHECK(p.state.cols() == 2);
  // State variables are lagged one row: row t holds the state dated t-1.
  const auto raw = read_csv(path);
  CHECK(p.dates[0] == raw.rows[1][0]);
  CHECK(p.market(0) == *parse_number(raw.rows[1][1]));
  CHECK(p.state(0, 0) == *parse_number(raw.rows[0][3]));

  const auto holed = load_panel(write_panel(dir, 300, 2, "NA"), roles());
  CHECK(holed.dropped_rows == 1);
  CHECK(holed.rows() == 298);

  PanelColumns bad = roles();
  bad.industry = "banks";
  try {
    load_panel(path, bad);
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("banks") != std::string::npos);
  }
  CHECK_THROWS_AS(load_panel(write_panel(dir, 40, 3), roles()), DataError);
  CHECK_THROWS_AS(load_panel(write_panel(dir, 300, 4, "oops"), roles()), DataError);

  testutil::spit(dir / "dup.csv", "date,mkt,ind,s1,s2\n" + [] {
    std::string s;
    for (int t = 0; t < 80; ++t) s += std::to_string(t == 40 ? 39 : t) + ",1,2,3,4\n";
    return s;
  }());
  CHECK_THROWS_AS(load_panel(dir / "dup.csv", roles()), DataError);
  testutil::spit(dir / "iso.csv", "date,mkt,ind,s1,s2\n" + [] {
    std::string s;
    for (int t = 0; t < 80; ++t) s += "2001-01-" + std::string(t < 10 ? "0" : "") + std::to_string(t) + ",1,2," +
                                      std::to_string(t) + ",4\n";
    return s;
  }());
  CHECK(load_panel(dir / "iso.csv", roles()).rows() == 79);
}

TEST_CASE("make_panel validation") {
  CHECK_THROWS_AS(make_panel({"1", "2"}, Eigen::VectorXd::Zero(2), Eigen::VectorXd::Zero(3), Eigen::MatrixXd::Zero(2, 1),
                             {"z"}),
                  InvalidArgument);
  CHECK_THROWS_AS(make_panel({"2", "1"}, Eigen::VectorXd::Zero(2), Eigen::VectorXd::Zero(2), Eigen::MatrixXd::Zero(2, 1),
                             {"z"}),
                  DataError);
  Eigen::VectorXd m = Eigen::VectorXd::Zero(2);
  m(1) = std::nan("");
  CHECK_THROWS_AS(make_panel({"1", "2"}, m, Eigen::VectorXd::Zero(2), Eigen::MatrixXd::Zero(2, 1), {"z"}),
                  InvalidArgument);
}

TEST_CASE("rolling volatility") {
  const Eigen::VectorXd c = Eigen::VectorXd::Constant(40, -0.3);
  const Eigen::VectorXd v = rolling_volatility(c, 22);
  for (Index t = 0; t < 21; ++t) CHECK(std::isnan(v(t)));
  for (Index t = 21; t < 40; ++t) CHECK(v(t) == Approx(0.09).epsilon(1e-14));
  std::mt19937_64 rng(61);
  const Eigen::VectorXd r = testutil::gaussian(rng, 200, 1).col(0);
  CHECK(rolling_volatility(r, 1) == r.cwiseProduct(r));
  const Eigen::VectorXd w = rolling_volatility(r, 22);
  for (Index t = 21; t < 200; ++t) {
    double s = 0.0;
    for (Index k = t - 21; k <= t; ++k) s += r(k) * r(k);
    CHECK(std::abs(w(t) - s / 22.0) <= 1e-12);
  }
  CHECK_THROWS_AS(rolling_volatility(r, 0), InvalidArgument);
}

TEST_CASE("K = 1 fits every stage without penalties") {
  const Panel p = dependent_panel(400, 7, 0.8);
  CoesPenalties pen;
  pen.nu_industry = pen.nu_median = pen.nu_market = pen.lambda_market = 5.0;
  pen.cross_validate = false;
  const auto m = fit_coes(p, 0.1, 1, pen);
  CHECK(m.var_industry.nu == 0.0);
  CHECK(m.median_industry.nu == 0.0);
  CHECK(m.var_market.nu == 0.0);
  CHECK(m.es_market.lambda == 0.0);
  CHECK(m.psi.output_dim() == 2);
  CHECK(m.phi.output_dim() == 3);
  // Stage (iv) uses stage (iii)'s in-sample predictions.
  const Eigen::MatrixXd phi = m.phi.transform_values((Eigen::MatrixXd(400, 2) << p.industry, p.state).finished());
  CHECK((m.es_response.source_quantiles - phi * m.var_market.coefficients).cwiseAbs().maxCoeff() < 1e-12);
  const Eigen::VectorXd expected = auxiliary_response(p.market, phi * m.var_market.coefficients, 0.1).values;
  CHECK((m.es_response.values - expected).cwiseAbs().maxCoeff() < 1e-12);
  // Unpenalized stage (iii) is plain quantile regression on phi.
  const auto direct = fit_penalized_quantile(DesignMatrix(phi, true), p.market, 0.1, 0.0);
  CHECK(m.var_market.objective == Approx(direct.objective));
}

TEST_CASE("stage (i) recovers a known quantile model") {
  const Index T = 5000;
  const Panel p = dependent_panel(T, 8, 0.8);
  const auto m = fit_coes(p, 0.1, 1);
  const auto& iv = m.psi.intervals[0];
  const double c = 0.5 * (iv.a + iv.b), h = 0.5 * (iv.b - iv.a);
  Eigen::Vector2d truth(1.0 + 0.5 * c + oracle::normal_quantile_bisect(0.1), 0.5 * h);
  CHECK((m.var_industry.coefficients - truth).cwiseAbs().sum() < 0.2);
  Eigen::Vector2d median(1.0 + 0.5 * c, 0.5 * h);
  CHECK((m.median_industry.coefficients - median).cwiseAbs().sum() < 0.2);
}

TEST_CASE("CoES identities") {
  const Panel p = dependent_panel(300, 9, 0.8);
  auto m = fit_coes(p, 0.1, 1);
  const auto base = coes_predict(m, p);
  CHECK((base.delta_coes - (base.coes - base.coes_median)).cwiseAbs().maxCoeff() == 0.0);

  auto flat = m;
  // Drop the industry terms from the ES model.
  for (int k = 1; k <= flat.K; ++k) flat.es_market.coefficients(flat.phi.column_of(0, k)) = 0.0;
  CHECK(coes_predict(flat, p).delta_coes.cwiseAbs().maxCoeff() < 1e-12);

  auto same = m;
  same.median_industry = same.var_industry;
  CHECK(coes_predict(same, p).delta_coes.cwiseAbs().maxCoeff() == 0.0);

  auto zero = m;
  zero.es_market.coefficients.setZero();
  const auto z = coes_predict(zero, p);
  CHECK(z.coes.cwiseAbs().maxCoeff() == 0.0);
  CHECK(z.delta_coes.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("positive tail dependence gives negative Delta CoES") {
  const Panel p = dependent_panel(1200, 10, 0.8);
  const auto m = fit_coes(p.slice(0, 800), 0.05, 1);
  const auto r = evaluate_out_of_sample(m, p.slice(800, 1200));
  CHECK(r.average_delta_coes < 0.0);
  CHECK(r.test_rows == 400);
  CHECK(r.es_mse > 0.0);
}

TEST_CASE("perfect foresight gives zero losses") {
  const Panel p = dependent_panel(200, 11, 0.0);
  auto m = fit_coes(p, 0.1, 1);
  // Industry outcomes set equal to the stage (i) predictions.
  const auto pred = coes_predict(m, p);
  Panel q = p;
  q.industry = pred.var_industry;
  const auto r = evaluate_out_of_sample(m, q);
  CHECK(r.mtl_var_industry == 0.0);
}

TEST_CASE("penalized K = 3 on a synthetic panel") {
  SimulationConfig cfg;
  cfg.T = 300;
  cfg.sigma_nu = 0.25;
  cfg.seed = 12;
  const Panel p = synthetic_panel(cfg);
  CHECK(p.rows() == 600);
  CHECK(p.state.cols() == 6);
  CoesPenalties pen;
  pen.cv.nu_grid_size = 10;
  pen.cv.lambda_grid_size = 20;
  const auto m = fit_coes(p.slice(0, 300), 0.1, 3, pen);
  CHECK(m.phi.output_dim() == 22);
  CHECK(m.psi.output_dim() == 19);
  CHECK(m.es_market.lambda > 0.0);
  CHECK(m.es_market.kkt_violation <= 1e-6 * (1.0 + m.es_response.values.cwiseAbs().maxCoeff()));
  CHECK(m.var_market.certificate <= 1e-6 * (1.0 + p.market.head(300).cwiseAbs().maxCoeff()));
  const Eigen::MatrixXd phi = m.phi.transform_values(
      (Eigen::MatrixXd(300, 7) << p.industry.head(300), p.state.topRows(300)).finished());
  CHECK((m.es_response.source_quantiles - phi * m.var_market.coefficients).cwiseAbs().maxCoeff() < 1e-12);

  pen.cross_validate = false;
  pen.nu_industry = pen.nu_median = pen.nu_market = 1.0;
  pen.lambda_market = 0.01;
  const auto fixed = fit_coes(p.slice(0, 300), 0.1, 3, pen);
  CHECK(fixed.var_market.nu == 1.0);
  CHECK(fixed.es_market.lambda == 0.01);

  const auto dir = testutil::scratch_dir("coes_out");
  const auto r1 = evaluate_out_of_sample(m, p.slice(300, 600));
  const auto r2 = evaluate_out_of_sample(fixed, p.slice(300, 600));
  write_coes_report(dir / "report.csv", {"syn", "syn"}, {r1, r2});
  const auto t = read_csv(dir / "report.csv");
  CHECK(t.header == std::vector<std::string>{"panel", "K", "tau", "metric", "value"});
  CHECK(t.rows.size() == 10);
  const auto test = p.slice(300, 600);
  write_coes_series(dir / "series.csv", test, coes_predict(m, test));
  const auto s = read_csv(dir / "series.csv");
  CHECK(s.rows.size() == 300);
  CHECK(s.header.size() == 8);
  CHECK(s.rows[0][0] == "301");
}

TEST_CASE("stage failures carry the stage label") {
  Panel p = dependent_panel(100, 13, 0.5);
  p.state.col(0).setConstant(2.0);
  try {
    fit_coes(p, 0.1, 1);
    FAIL("expected InvalidArgument");
  } catch (const InvalidArgument& e) {
    CHECK(std::string(e.what()).find("stage") != std::string::npos);
  }
  CHECK_THROWS_AS(fit_coes(dependent_panel(100, 13, 0.5), 0.7, 1), InvalidArgument);
}
