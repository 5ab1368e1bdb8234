#pragma once

#include "eslasso/design_matrix.hpp"

#include <json.hpp>

#include <optional>
#include <vector>

namespace eslasso {

/// Endpoints [a, b] of the interval mapped onto [-1, 1] before evaluating
/// Chebyshev polynomials. Requires a < b.
struct ApproximationInterval {
  double a = -1.0;
  double b = 1.0;

  void validate() const;
};

/// (2s - a - b) / (b - a). Throws DegenerateIntervalError when a >= b.
double rescale_to_interval(double s, const ApproximationInterval& interval);

/// Chebyshev polynomial T_k, extended outside [-1, 1] through the hyperbolic
/// branches: cosh(k arcosh s) for s > 1 and (-1)^k cosh(k arcosh(-s)) for s < -1.
double chebyshev_value(int k, double s_tilde);

/// Frozen Chebyshev feature map. Output columns are ordered as the intercept
/// followed by, for each raw regressor i in input order, T_1..T_K of that
/// regressor, so p = 1 + d K.
struct ChebyshevDictionary {
  int degree = 1;
  std::vector<ApproximationInterval> intervals;

  Index raw_dim() const noexcept { return static_cast<Index>(intervals.size()); }
  Index output_dim() const noexcept { return 1 + raw_dim() * degree; }

  /// Feature row for one raw observation.
  Eigen::RowVectorXd transform_row(const Eigen::Ref<const Eigen::RowVectorXd>& raw) const;
  /// Feature matrix; values outside the training intervals use the hyperbolic branches.
  Eigen::MatrixXd transform_values(const Eigen::MatrixXd& raw) const;
  DesignMatrix transform(const Eigen::MatrixXd& raw) const;

  /// Column index (0-based) of T_k applied to raw regressor i.
  Index column_of(Index raw_index, int k) const noexcept { return 1 + raw_index * degree + (k - 1); }
};

struct DictionaryFit {
  ChebyshevDictionary dictionary;
  DesignMatrix design;
};

/// Builds the dictionary from raw regressors (T x d). Without explicit
/// intervals each column's sample min and max are used.
DictionaryFit build_dictionary(const Eigen::MatrixXd& raw, int degree,
                               std::optional<std::vector<ApproximationInterval>> intervals = {});

/// Variant used by the location-scale simulation: each non-intercept column
/// is shifted by +1 and divided by its standard deviation, which keeps every
/// in-interval entry nonnegative.
struct ShiftedDictionary {
  ChebyshevDictionary dictionary;
  /// One divisor per output column; the intercept entry is 1.
  Eigen::VectorXd divisors;

  DesignMatrix transform(const Eigen::MatrixXd& raw) const;
};

struct ShiftedDictionaryFit {
  ShiftedDictionary dictionary;
  DesignMatrix design;
};

/// When divisors are omitted they are the population standard deviations of
/// the shifted columns of `raw`. Throws InvalidArgument on a zero-variance column.
ShiftedDictionaryFit simulation_dictionary(
    const Eigen::MatrixXd& raw, int degree, std::optional<Eigen::VectorXd> divisors = {},
    std::optional<std::vector<ApproximationInterval>> intervals = {});

void to_json(nlohmann::json& j, const ApproximationInterval& v);
void from_json(const nlohmann::json& j, ApproximationInterval& v);
void to_json(nlohmann::json& j, const ChebyshevDictionary& v);
void from_json(const nlohmann::json& j, ChebyshevDictionary& v);

}  // namespace eslasso
