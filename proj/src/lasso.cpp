#include "hmcperfect/lasso.hpp"

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>

#ifndef HMCPERFECT_SOURCE_DATA_DIR
#define HMCPERFECT_SOURCE_DATA_DIR "data"
#endif

namespace hmcperfect {

namespace {

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> fields;
  std::string current;
  for (char ch : line) {
    if (ch == ',' || ch == ' ' || ch == '\t' || ch == '\r') {
      if (!current.empty()) fields.push_back(current);
      current.clear();
      continue;
    }
    current.push_back(ch);
  }
  if (!current.empty()) fields.push_back(current);
  return fields;
}

double sign_of(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

}  // namespace

RegressionData make_regression_data(const Mat& raw_x, const Vec& y, std::vector<std::string> names) {
  const int n = static_cast<int>(raw_x.rows());
  const int j = static_cast<int>(raw_x.cols());
  if (n < 2 || y.size() != n) throw std::invalid_argument("regression data: response length does not match design");
  RegressionData data;
  data.column_means = raw_x.colwise().mean().transpose();
  data.column_sds.resize(j);
  data.x.resize(n, j);
  for (int c = 0; c < j; ++c) {
    const Vec centered = raw_x.col(c).array() - data.column_means[c];
    const double sd = std::sqrt(centered.squaredNorm() / (n - 1));
    if (!(sd > 0.0)) {
      throw std::domain_error("regression data: predictor column " + std::to_string(c) + " is constant");
    }
    data.column_sds[c] = sd;
    data.x.col(c) = centered / sd;
  }
  data.y = y;
  data.names = std::move(names);
  return data;
}

RegressionData load_regression_data(const std::string& path, int expected_rows, int expected_columns) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open data file " + path);
  std::string line;
  std::vector<std::string> header;
  while (header.empty() && std::getline(in, line)) header = split_fields(line);
  if (header.empty()) throw std::runtime_error(path + ": no header row");
  const int columns = static_cast<int>(header.size());
  if (expected_columns > 0 && columns != expected_columns) {
    throw std::runtime_error(path + ": expected " + std::to_string(expected_columns) + " columns, header has " +
                             std::to_string(columns));
  }
  if (columns < 2) throw std::runtime_error(path + ": need at least one predictor and a response");

  std::vector<std::vector<double>> rows;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    const auto fields = split_fields(line);
    if (fields.empty()) continue;
    if (static_cast<int>(fields.size()) != columns) {
      throw std::runtime_error(path + ":" + std::to_string(line_no) + ": expected " + std::to_string(columns) +
                               " fields, found " + std::to_string(fields.size()));
    }
    std::vector<double> values(columns);
    for (int c = 0; c < columns; ++c) {
      std::size_t used = 0;
      try {
        values[c] = std::stod(fields[c], &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != fields[c].size()) {
        throw std::runtime_error(path + ":" + std::to_string(line_no) + ": field '" + fields[c] + "' is not numeric");
      }
    }
    rows.push_back(std::move(values));
  }
  const int n = static_cast<int>(rows.size());
  if (expected_rows > 0 && n != expected_rows) {
    throw std::runtime_error(path + ": expected " + std::to_string(expected_rows) + " data rows, found " +
                             std::to_string(n));
  }
  Mat raw(n, columns - 1);
  Vec y(n);
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c + 1 < columns; ++c) raw(r, c) = rows[r][c];
    y[r] = rows[r][columns - 1];
  }
  header.pop_back();
  return make_regression_data(raw, y, std::move(header));
}

std::string diabetes_data_path() {
  if (const char* dir = std::getenv("HMCPERFECT_DATA_DIR"); dir != nullptr && *dir != '\0') {
    return std::string(dir) + "/diabetes.txt";
  }
  return std::string(HMCPERFECT_SOURCE_DATA_DIR) + "/diabetes.txt";
}

RegressionData load_diabetes() { return load_regression_data(diabetes_data_path(), 442, 11); }

LassoModel::LassoModel(std::shared_ptr<const RegressionData> data, double lambda)
    : TargetDistribution(data->predictors() + 2, 2.0, "lasso"),
      data_(std::move(data)),
      lambda_(lambda),
      n_(data_->rows()),
      j_(data_->predictors()),
      s_ols_(0.0),
      offset_(0.0) {
  if (!(lambda >= 0.0)) throw std::invalid_argument("lasso: lambda must be non-negative");
  const int p = j_ + 1;
  Mat design(n_, p);
  design.leftCols(j_) = data_->x;
  design.col(j_).setOnes();
  gram_ = design.transpose() * design;

  Eigen::ColPivHouseholderQR<Mat> qr(design);
  if (qr.rank() < p) throw std::domain_error("lasso: design matrix is singular");
  const Vec coef = qr.solve(data_->y);
  s_ols_ = (data_->y - design * coef).squaredNorm();

  ols_.resize(j_ + 2);
  ols_.head(p) = coef;
  const double sigma2 = s_ols_ / (n_ + j_);
  ols_[p] = 0.5 * std::log(sigma2);

  ols_hessian_ = Mat::Zero(j_ + 2, j_ + 2);
  ols_hessian_.topLeftCorner(p, p) = gram_ / sigma2;
  ols_hessian_(p, p) = 2.0 * (n_ + j_);

  offset_ = raw_potential(ols_);
}

double LassoModel::t_statistic(const Vec& theta) const { return theta.head(j_).lpNorm<1>(); }

double LassoModel::t_statistic_naive(const Vec& theta, int predictors) {
  double t = 0.0;
  for (int k = 0; k < predictors; ++k) t += std::fabs(theta[k]);
  return t;
}

double LassoModel::s_statistic(const Vec& theta) const {
  const Vec delta = theta.head(j_ + 1) - ols_.head(j_ + 1);
  return s_ols_ + delta.dot(gram_ * delta);
}

double LassoModel::s_statistic_naive(const Vec& theta) const {
  double s = 0.0;
  for (int i = 0; i < n_; ++i) {
    double fit = theta[j_];
    for (int k = 0; k < j_; ++k) fit += data_->x(i, k) * theta[k];
    const double r = data_->y[i] - fit;
    s += r * r;
  }
  return s;
}

double LassoModel::raw_potential(const Vec& theta) const {
  const double s = theta[j_ + 1];
  double u = (n_ + j_) * s + 0.5 * s_statistic(theta) * std::exp(-2.0 * s);
  if (lambda_ > 0.0) u += lambda_ * t_statistic(theta) * std::exp(-s) - j_ * std::log(0.5 * lambda_);
  return u;
}

double LassoModel::potential(const Vec& theta) const { return raw_potential(theta) - offset_; }

void LassoModel::gradient(const Vec& theta, Vec& out) const {
  const int p = j_ + 1;
  const double s = theta[p];
  const double e1 = std::exp(-s);
  const double e2 = e1 * e1;
  const Vec delta = theta.head(p) - ols_.head(p);
  const Vec a_delta = gram_ * delta;
  const double rss = s_ols_ + delta.dot(a_delta);
  out.resize(j_ + 2);
  out.head(p) = e2 * a_delta;
  double ds = (n_ + j_) - rss * e2;
  if (lambda_ > 0.0) {
    for (int k = 0; k < j_; ++k) out[k] += lambda_ * e1 * sign_of(theta[k]);
    ds -= lambda_ * t_statistic(theta) * e1;
  }
  out[p] = ds;
}

Mat LassoModel::hessian(const Vec& theta) const {
  const int p = j_ + 1;
  const double s = theta[p];
  const double e1 = std::exp(-s);
  const double e2 = e1 * e1;
  const Vec delta = theta.head(p) - ols_.head(p);
  const Vec a_delta = gram_ * delta;
  Mat h = Mat::Zero(j_ + 2, j_ + 2);
  h.topLeftCorner(p, p) = e2 * gram_;
  Vec cross = -2.0 * e2 * a_delta;
  double ss = 2.0 * (s_ols_ + delta.dot(a_delta)) * e2;
  if (lambda_ > 0.0) {
    for (int k = 0; k < j_; ++k) cross[k] -= lambda_ * e1 * sign_of(theta[k]);
    ss += lambda_ * t_statistic(theta) * e1;
  }
  h.block(0, p, p, 1) = cross;
  h.block(p, 0, 1, p) = cross.transpose();
  h(p, p) = ss;
  return h;
}

std::shared_ptr<const ScaledTarget> make_lasso(std::shared_ptr<const RegressionData> data, double lambda) {
  auto model = std::make_shared<const LassoModel>(std::move(data), lambda);
  return std::make_shared<ScaledTarget>(model, model->ols_point(), model->ols_hessian());
}

}  // namespace hmcperfect
