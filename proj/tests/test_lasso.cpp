#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>

#include "gradcheck.hpp"
#include "hmcperfect/lasso.hpp"

using namespace hmcperfect;

namespace {

std::shared_ptr<const RegressionData> diabetes() {
  static const auto data = std::make_shared<const RegressionData>(load_diabetes());
  return data;
}

// Least-squares fit of the standardized diabetes data, computed with numpy.
const double kOlsBeta[10] = {-0.4766602999909823, -11.41979255582972, 24.75456762164097, 15.446887881063041,
                             -37.72264945486813,  22.701858143107522, 4.811584187525435,  8.431582746254572,
                             35.774938074147805,  3.2203186754144775};
const double kOlsIntercept = 152.13348416289597;
const double kOlsRss = 1263985.7856333437;
const double kOlsT = 164.76083963984266;
const double kOlsLogSigma = 3.9680492141251182;

std::string write_temp(const std::string& name, const std::string& text) {
  const auto path = std::filesystem::temp_directory_path() / name;
  std::ofstream(path) << text;
  return path.string();
}

}  // namespace

TEST_CASE("diabetes data: 442 rows, 10 predictors, 12 parameters") {
  const auto data = diabetes();
  CHECK(data->rows() == 442);
  CHECK(data->predictors() == 10);
  CHECK(data->names.front() == "AGE");
  CHECK(data->names.back() == "S6");
  const auto model = make_lasso(data, 0.237);
  CHECK(model->dim() == 12);
}

TEST_CASE("predictors are standardized with the sample standard deviation") {
  const auto data = diabetes();
  for (int c = 0; c < data->predictors(); ++c) {
    const Vec col = data->x.col(c);
    const double mean = col.mean();
    const double var = (col.array() - mean).square().sum() / (data->rows() - 1);
    CHECK(std::abs(mean) < 1e-12);
    CHECK(var == doctest::Approx(1.0).epsilon(1e-12));
  }
  CHECK(data->column_means[0] == doctest::Approx(48.51809955).epsilon(1e-9));
  CHECK(data->column_sds[0] == doctest::Approx(13.10902782).epsilon(1e-9));
}

TEST_CASE("least-squares point matches the numpy fit") {
  const LassoModel model(diabetes(), 0.0);
  const Vec& ols = model.ols_point();
  for (int j = 0; j < 10; ++j) CHECK(ols[j] == doctest::Approx(kOlsBeta[j]).epsilon(1e-9));
  CHECK(ols[10] == doctest::Approx(kOlsIntercept).epsilon(1e-12));
  CHECK(ols[11] == doctest::Approx(kOlsLogSigma).epsilon(1e-12));
  CHECK(model.ols_residual_ss() == doctest::Approx(kOlsRss).epsilon(1e-10));
  CHECK(model.t_statistic(ols) == doctest::Approx(kOlsT).epsilon(1e-10));
  CHECK(model.potential(ols) == doctest::Approx(0.0));
}

TEST_CASE("lambda = 0: the least-squares point is stationary") {
  const LassoModel model(diabetes(), 0.0);
  const Vec g = model.gradient(model.ols_point());
  CHECK(g.norm() < 1e-6);
  const auto scaled = make_lasso(diabetes(), 0.0);
  CHECK(scaled->gradient(Vec::Zero(12)).norm() < 1e-8);
  CHECK(scaled->potential(Vec::Zero(12)) == doctest::Approx(0.0));
}

TEST_CASE("lambda = 0: beta gradient equals the normal-equations gradient") {
  const LassoModel model(diabetes(), 0.0);
  const auto& data = model.data();
  std::mt19937_64 rng(2);
  std::normal_distribution<double> n;
  for (int k = 0; k < 5; ++k) {
    Vec theta = model.ols_point();
    for (int i = 0; i < 12; ++i) theta[i] += (i == 11 ? 0.1 : 5.0) * n(rng);
    const Vec beta = theta.head(10);
    const Vec resid = data.y - data.x * beta - Vec::Constant(data.rows(), theta[10]);
    const double inv_var = std::exp(-2.0 * theta[11]);
    const Vec expected = -inv_var * (data.x.transpose() * resid);
    const Vec g = model.gradient(theta);
    CHECK((g.head(10) - expected).norm() <= 1e-9 * expected.norm());
    CHECK(g[10] == doctest::Approx(-inv_var * resid.sum()).epsilon(1e-9));
    CHECK(g[11] == doctest::Approx(452.0 - inv_var * resid.squaredNorm()).epsilon(1e-9));
  }
}

TEST_CASE("potential difference matches a direct evaluation") {
  const LassoModel model(diabetes(), 0.237);
  Vec delta(12);
  delta << 1, -2, 3, 0.5, -1, 2, 0, 1, -3, 2, 5, 0.1;
  // numpy evaluation of the unshifted posterior at ols + delta minus at ols.
  CHECK(model.potential(model.ols_point() + delta) - model.potential(model.ols_point()) ==
        doctest::Approx(7.311984293762407).epsilon(1e-9));
}

TEST_CASE("lambda = 0.237 smoke: finite U and DU at the scaled origin") {
  const auto scaled = make_lasso(diabetes(), 0.237);
  CHECK(std::isfinite(scaled->potential(Vec::Zero(12))));
  CHECK(scaled->gradient(Vec::Zero(12)).allFinite());
}

TEST_CASE("T and S agree with naive loops") {
  const LassoModel model(diabetes(), 1.0);
  std::mt19937_64 rng(4);
  std::normal_distribution<double> n;
  for (int k = 0; k < 20; ++k) {
    Vec theta = model.ols_point();
    for (int i = 0; i < 12; ++i) theta[i] += 10.0 * n(rng);
    CHECK(model.t_statistic(theta) == doctest::Approx(LassoModel::t_statistic_naive(theta, 10)).epsilon(1e-12));
    const double s = model.s_statistic(theta);
    CHECK(std::abs(s - model.s_statistic_naive(theta)) <= 1e-9 * s);
  }
}

TEST_CASE("sign(0) = 0 in the subgradient") {
  const LassoModel with(diabetes(), 5.0);
  const LassoModel without(diabetes(), 0.0);
  Vec theta = with.ols_point();
  theta[3] = 0.0;
  CHECK(with.gradient(theta)[3] == doctest::Approx(without.gradient(theta)[3]).epsilon(1e-14));
}

TEST_CASE("gradient check away from the kinks, model and scaled coordinates") {
  for (double lambda : {0.0, 0.237, 5.0}) {
    CAPTURE(lambda);
    const auto model = std::make_shared<const LassoModel>(diabetes(), lambda);
    const auto scaled = make_lasso(diabetes(), lambda);
    const auto away = [](const Vec& theta) {
      for (int j = 0; j < 10; ++j) {
        if (std::abs(theta[j]) < 1e-3) return false;
      }
      return true;
    };
    CHECK(gradcheck::max_relative_error(*scaled, 100, 1.0, 21,
                                        [&](const Vec& z) { return away(scaled->unscale(z)); }) <= 1e-5);
    // Model coordinates: perturb around the least-squares point on the data scale.
    std::mt19937_64 rng(8);
    std::normal_distribution<double> n;
    double worst = 0.0;
    for (int k = 0; k < 100;) {
      Vec theta = model->ols_point();
      for (int i = 0; i < 12; ++i) theta[i] += (i == 11 ? 0.05 : 3.0) * n(rng);
      if (!away(theta)) continue;
      ++k;
      const Vec g = model->gradient(theta);
      const Vec fd = gradcheck::finite_difference(*model, theta);
      worst = std::max(worst, (g - fd).lpNorm<Eigen::Infinity>() / std::max(1.0, g.lpNorm<Eigen::Infinity>()));
    }
    CHECK(worst <= 1e-5);
  }
}

TEST_CASE("analytic Hessian matches differences of the gradient") {
  const LassoModel model(diabetes(), 2.0);
  Vec theta = model.ols_point();
  theta[0] += 3.0;
  theta[11] += 0.1;
  const Mat h = model.hessian(theta);
  for (int i = 0; i < 12; ++i) {
    const double step = 1e-6 * std::max(1.0, std::abs(theta[i]));
    Vec a = theta, b = theta;
    a[i] += step;
    b[i] -= step;
    const Vec col = (model.gradient(a) - model.gradient(b)) / (2.0 * step);
    CHECK((col - h.col(i)).norm() <= 1e-5 * std::max(1.0, h.col(i).norm()));
  }
}

TEST_CASE("OLS Hessian is the lambda = 0 Hessian at the least-squares point") {
  const LassoModel model(diabetes(), 0.0);
  const Mat h = model.hessian(model.ols_point());
  CHECK((h - model.ols_hessian()).norm() <= 1e-8 * h.norm());
}

TEST_CASE("invalid inputs") {
  CHECK_THROWS_AS(LassoModel(diabetes(), -1.0), std::invalid_argument);
  Mat x(5, 2);
  x << 1, 2, 2, 4, 3, 6, 4, 8, 5, 10;
  Vec y(5);
  y << 1, 2, 3, 4, 6;
  const auto collinear = std::make_shared<const RegressionData>(make_regression_data(x, y));
  CHECK_THROWS_AS(make_lasso(collinear, 0.0), std::domain_error);
  Mat constant(4, 1);
  constant << 1, 1, 1, 1;
  CHECK_THROWS_AS(make_regression_data(constant, Vec::Ones(4)), std::domain_error);
}

TEST_CASE("loader: comma and whitespace formats, shape checks, line numbers") {
  const auto comma = write_temp("hmcp_comma.csv", "a,b,y\n1,2,3\n2,1,5\n3,5,4\n4,3,9\n");
  const auto data = load_regression_data(comma, 4, 3);
  CHECK(data.predictors() == 2);
  CHECK(data.names == std::vector<std::string>{"a", "b"});
  const auto spaces = write_temp("hmcp_spaces.txt", "a b y\n1 2 3\n2\t1 5\n3 5 4\n4 3 9\n");
  CHECK(load_regression_data(spaces).x == data.x);
  CHECK_THROWS_WITH(load_regression_data(comma, 5, 3), doctest::Contains("expected 5 data rows"));
  CHECK_THROWS_WITH(load_regression_data(comma, 4, 4), doctest::Contains("columns"));
  const auto bad = write_temp("hmcp_bad.csv", "a,b,y\n1,2,3\n2,x,5\n");
  CHECK_THROWS_WITH(load_regression_data(bad), doctest::Contains(":3:"));
  CHECK_THROWS(load_regression_data("/nonexistent/diabetes.txt"));
}

TEST_CASE("dataset directory override") {
  const char* old = std::getenv("HMCPERFECT_DATA_DIR");
  const std::string saved = old ? old : "";
  setenv("HMCPERFECT_DATA_DIR", "/some/where", 1);
  CHECK(diabetes_data_path() == "/some/where/diabetes.txt");
  if (old) {
    setenv("HMCPERFECT_DATA_DIR", saved.c_str(), 1);
  } else {
    unsetenv("HMCPERFECT_DATA_DIR");
  }
}
