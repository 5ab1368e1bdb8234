#include "eslasso/features.hpp"

#include "eslasso/errors.hpp"

#include <cmath>
#include <string>

namespace eslasso {

void ApproximationInterval::validate() const {
  if (!std::isfinite(a) || !std::isfinite(b)) {
    throw InvalidArgument("approximation interval endpoints must be finite");
  }
  if (!(a < b)) {
    throw DegenerateIntervalError("approximation interval requires a < b (constant raw column?)");
  }
}

double rescale_to_interval(double s, const ApproximationInterval& interval) {
  interval.validate();
  return (2.0 * s - interval.a - interval.b) / (interval.b - interval.a);
}

double chebyshev_value(int k, double s_tilde) {
  if (k < 0) throw InvalidArgument("Chebyshev degree must be nonnegative");
  if (k == 0) return 1.0;
  if (k == 1) return s_tilde;
  const double kd = static_cast<double>(k);
  if (std::abs(s_tilde) <= 1.0) return std::cos(kd * std::acos(s_tilde));
  if (s_tilde > 1.0) return std::cosh(kd * std::acosh(s_tilde));
  const double magnitude = std::cosh(kd * std::acosh(-s_tilde));
  return (k % 2 == 0) ? magnitude : -magnitude;
}

Eigen::RowVectorXd ChebyshevDictionary::transform_row(
    const Eigen::Ref<const Eigen::RowVectorXd>& raw) const {
  if (raw.size() != raw_dim()) throw DimensionError("raw row width does not match dictionary");
  Eigen::RowVectorXd out(output_dim());
  out(0) = 1.0;
  for (Index i = 0; i < raw_dim(); ++i) {
    const double st = rescale_to_interval(raw(i), intervals[static_cast<std::size_t>(i)]);
    for (int k = 1; k <= degree; ++k) out(column_of(i, k)) = chebyshev_value(k, st);
  }
  return out;
}

Eigen::MatrixXd ChebyshevDictionary::transform_values(const Eigen::MatrixXd& raw) const {
  if (raw.cols() != raw_dim()) throw DimensionError("raw matrix width does not match dictionary");
  require_finite(raw, "raw regressors");
  Eigen::MatrixXd out(raw.rows(), output_dim());
  for (Index t = 0; t < raw.rows(); ++t) out.row(t) = transform_row(raw.row(t));
  return out;
}

DesignMatrix ChebyshevDictionary::transform(const Eigen::MatrixXd& raw) const {
  return DesignMatrix(transform_values(raw), true);
}

namespace {

std::vector<ApproximationInterval> resolve_intervals(
    const Eigen::MatrixXd& raw, std::optional<std::vector<ApproximationInterval>> intervals) {
  if (intervals) {
    if (static_cast<Index>(intervals->size()) != raw.cols()) {
      throw DimensionError("one approximation interval is required per raw column");
    }
    for (const auto& iv : *intervals) iv.validate();
    return std::move(*intervals);
  }
  std::vector<ApproximationInterval> out;
  out.reserve(static_cast<std::size_t>(raw.cols()));
  for (Index i = 0; i < raw.cols(); ++i) {
    ApproximationInterval iv{raw.col(i).minCoeff(), raw.col(i).maxCoeff()};
    if (!(iv.a < iv.b)) {
      throw DegenerateIntervalError("raw column " + std::to_string(i) + " is constant");
    }
    out.push_back(iv);
  }
  return out;
}

void check_dictionary_input(const Eigen::MatrixXd& raw, int degree) {
  if (degree < 1) throw InvalidArgument("Chebyshev degree K must be positive");
  if (raw.rows() < 2) throw InvalidArgument("at least two observations are required");
  if (raw.cols() < 1) throw InvalidArgument("at least one raw regressor is required");
  require_finite(raw, "raw regressors");
}

}  // namespace

DictionaryFit build_dictionary(const Eigen::MatrixXd& raw, int degree,
                               std::optional<std::vector<ApproximationInterval>> intervals) {
  check_dictionary_input(raw, degree);
  ChebyshevDictionary dict{degree, resolve_intervals(raw, std::move(intervals))};
  DesignMatrix design = dict.transform(raw);
  return {std::move(dict), std::move(design)};
}

DesignMatrix ShiftedDictionary::transform(const Eigen::MatrixXd& raw) const {
  Eigen::MatrixXd values = dictionary.transform_values(raw);
  if (divisors.size() != values.cols()) throw DimensionError("divisor count does not match dictionary");
  for (Index j = 1; j < values.cols(); ++j) {
    values.col(j) = (values.col(j).array() + 1.0) / divisors(j);
  }
  return DesignMatrix(std::move(values), true);
}

ShiftedDictionaryFit simulation_dictionary(const Eigen::MatrixXd& raw, int degree,
                                           std::optional<Eigen::VectorXd> divisors,
                                           std::optional<std::vector<ApproximationInterval>> intervals) {
  check_dictionary_input(raw, degree);
  ChebyshevDictionary dict{degree, resolve_intervals(raw, std::move(intervals))};
  const Eigen::MatrixXd cheb = dict.transform_values(raw);
  Eigen::VectorXd div;
  if (divisors) {
    div = std::move(*divisors);
    if (div.size() != cheb.cols()) throw DimensionError("divisor count does not match dictionary");
    for (Index j = 1; j < div.size(); ++j) {
      if (!(div(j) > 0.0)) throw InvalidArgument("divisors must be strictly positive");
    }
  } else {
    div = Eigen::VectorXd::Ones(cheb.cols());
    const double n = static_cast<double>(cheb.rows());
    for (Index j = 1; j < cheb.cols(); ++j) {
      // the +1 shift does not change the spread
      const double mean = cheb.col(j).mean();
      const double var = (cheb.col(j).array() - mean).square().sum() / n;
      const double sd = std::sqrt(var);
      if (!(sd > 1e-12 * (1.0 + std::abs(mean)))) {
        throw InvalidArgument("shifted Chebyshev column " + std::to_string(j) + " has zero variance");
      }
      div(j) = sd;
    }
  }
  div(0) = 1.0;
  ShiftedDictionary shifted{std::move(dict), std::move(div)};
  DesignMatrix design = shifted.transform(raw);
  return {std::move(shifted), std::move(design)};
}

void to_json(nlohmann::json& j, const ApproximationInterval& v) { j = nlohmann::json{{"a", v.a}, {"b", v.b}}; }

void from_json(const nlohmann::json& j, ApproximationInterval& v) {
  v.a = j.at("a").get<double>();
  v.b = j.at("b").get<double>();
  v.validate();
}

void to_json(nlohmann::json& j, const ChebyshevDictionary& v) {
  j = nlohmann::json{{"degree", v.degree},
                     {"intervals", v.intervals},
                     {"ordering", "intercept, then T_1..T_K for each raw regressor in input order"}};
}

void from_json(const nlohmann::json& j, ChebyshevDictionary& v) {
  v.degree = j.at("degree").get<int>();
  v.intervals = j.at("intervals").get<std::vector<ApproximationInterval>>();
  if (v.degree < 1) throw InvalidArgument("dictionary degree must be positive");
}

}  // namespace eslasso
