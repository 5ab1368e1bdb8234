#include "eslasso/design_matrix.hpp"

#include "eslasso/errors.hpp"

#include <string>

namespace eslasso {

Eigen::VectorXd column_scales(const Eigen::MatrixXd& values) {
  Eigen::VectorXd s(values.cols());
  const double n = static_cast<double>(values.rows());
  for (Index j = 0; j < values.cols(); ++j) {
    s(j) = n > 0 ? std::sqrt(values.col(j).squaredNorm() / n) : 0.0;
  }
  return s;
}

void require_finite(const Eigen::Ref<const Eigen::MatrixXd>& m, const char* what) {
  if (!m.allFinite()) {
    throw InvalidArgument(std::string(what) + " contains NaN or infinite values");
  }
}

DesignMatrix::DesignMatrix(Eigen::MatrixXd values, bool has_intercept)
    : values_(std::move(values)), has_intercept_(has_intercept) {
  require_finite(values_, "design matrix");
  scales_ = column_scales(values_);
}

DesignMatrix DesignMatrix::select_rows(std::span<const Index> rows) const {
  Eigen::MatrixXd sub(static_cast<Index>(rows.size()), values_.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] < 0 || rows[i] >= values_.rows()) {
      throw InvalidArgument("row index out of range");
    }
    sub.row(static_cast<Index>(i)) = values_.row(rows[i]);
  }
  return DesignMatrix(std::move(sub), has_intercept_);
}

DesignMatrix DesignMatrix::row_range(Index begin, Index end) const {
  if (begin < 0 || end > values_.rows() || begin > end) {
    throw InvalidArgument("row range out of bounds");
  }
  return DesignMatrix(values_.middleRows(begin, end - begin), has_intercept_);
}

double DesignMatrix::weighted_l1(const Eigen::VectorXd& v) const {
  if (v.size() != cols()) throw DimensionError("coefficient length does not match design");
  return scales_.dot(v.cwiseAbs());
}

void DesignMatrix::require_nonzero_columns() const {
  for (Index j = 0; j < cols(); ++j) {
    if (scales_(j) == 0.0) {
      throw InvalidArgument("design column " + std::to_string(j) + " is identically zero");
    }
  }
}

}  // namespace eslasso
