#pragma once

#include <memory>
#include <string>
#include <vector>

#include "hmcperfect/targets.hpp"

namespace hmcperfect {

/// Design matrix and response read from a delimited text file. Predictor
/// columns are standardized to mean 0 and sample variance 1 at load time;
/// the constants applied are kept alongside.
struct RegressionData {
  Mat x;
  Vec y;
  std::vector<std::string> names;
  Vec column_means;
  Vec column_sds;

  int rows() const { return static_cast<int>(x.rows()); }
  int predictors() const { return static_cast<int>(x.cols()); }
};

/// Reads a header row and then numeric rows split on commas or whitespace.
/// The last column is the response. When expected_rows or expected_columns
/// is positive the file must match it exactly.
RegressionData load_regression_data(const std::string& path, int expected_rows = 0, int expected_columns = 0);

/// Builds the data set from raw arrays, standardizing the predictors.
RegressionData make_regression_data(const Mat& raw_x, const Vec& y, std::vector<std::string> names = {});

/// Default location of the diabetes file: $HMCPERFECT_DATA_DIR/diabetes.txt
/// when the variable is set, else the data directory of the source tree.
std::string diabetes_data_path();

RegressionData load_diabetes();

/// Bayesian Lasso posterior over theta = (beta_1..beta_J, beta_0, log sigma):
/// U = (n + J) s + S exp(-2 s) / 2 + lambda T exp(-s) - J log(lambda / 2),
/// with T = sum |beta_j| and S the residual sum of squares. The last term is
/// dropped when lambda = 0. U is shifted to vanish at the least-squares point.
class LassoModel final : public TargetDistribution {
 public:
  LassoModel(std::shared_ptr<const RegressionData> data, double lambda);
  using TargetDistribution::gradient;

  double potential(const Vec& theta) const override;
  void gradient(const Vec& theta, Vec& out) const override;
  Mat hessian(const Vec& theta) const override;
  Vec mode() const override { return ols_; }

  /// Sum of absolute regression coefficients (intercept excluded).
  double t_statistic(const Vec& theta) const;
  /// Residual sum of squares, through the Gram-matrix identity.
  double s_statistic(const Vec& theta) const;
  /// Residual sum of squares by direct loops over the data.
  double s_statistic_naive(const Vec& theta) const;
  static double t_statistic_naive(const Vec& theta, int predictors);

  /// Least-squares fit extended with log sigma-hat, sigma-hat^2 = S / (n + J).
  const Vec& ols_point() const { return ols_; }
  double ols_residual_ss() const { return s_ols_; }
  /// Hessian of U at the least-squares point for lambda = 0; the scaling used
  /// for every lambda.
  const Mat& ols_hessian() const { return ols_hessian_; }

  double lambda() const { return lambda_; }
  const RegressionData& data() const { return *data_; }

 private:
  double raw_potential(const Vec& theta) const;

  std::shared_ptr<const RegressionData> data_;
  double lambda_;
  int n_;
  int j_;
  Mat gram_;
  Vec ols_;
  double s_ols_;
  Mat ols_hessian_;
  double offset_;
};

/// The Lasso posterior in scaled coordinates around the least-squares fit.
/// Throws std::invalid_argument for lambda < 0 and std::domain_error for a
/// singular design.
std::shared_ptr<const ScaledTarget> make_lasso(std::shared_ptr<const RegressionData> data, double lambda);

}  // namespace hmcperfect
