#pragma once

#include <Eigen/Dense>

#include <span>

namespace eslasso {

using Index = Eigen::Index;

/// Regressor matrix (rows are periods) together with the per-column root mean
/// squares that weight the l1 penalty. Column 0 is the intercept when
/// has_intercept() is true.
class DesignMatrix {
 public:
  DesignMatrix() = default;
  DesignMatrix(Eigen::MatrixXd values, bool has_intercept);

  const Eigen::MatrixXd& values() const noexcept { return values_; }
  const Eigen::VectorXd& scales() const noexcept { return scales_; }
  bool has_intercept() const noexcept { return has_intercept_; }
  Index rows() const noexcept { return values_.rows(); }
  Index cols() const noexcept { return values_.cols(); }

  /// Rows in the given order; scales are recomputed on the subset.
  DesignMatrix select_rows(std::span<const Index> rows) const;
  /// Rows [begin, end); scales are recomputed on the subset.
  DesignMatrix row_range(Index begin, Index end) const;

  /// ||v||_{1,T} = sum_i scale_i |v_i|.
  double weighted_l1(const Eigen::VectorXd& v) const;

  /// Throws if any column is identically zero.
  void require_nonzero_columns() const;

 private:
  Eigen::MatrixXd values_;
  Eigen::VectorXd scales_;
  bool has_intercept_ = false;
};

/// sqrt(mean(x^2)) per column.
Eigen::VectorXd column_scales(const Eigen::MatrixXd& values);

/// Throws InvalidArgument if any entry is NaN or infinite.
void require_finite(const Eigen::Ref<const Eigen::MatrixXd>& m, const char* what);

}  // namespace eslasso
