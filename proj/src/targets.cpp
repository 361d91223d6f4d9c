#include "hmcperfect/targets.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "hmcperfect/random.hpp"

namespace hmcperfect {

TargetDistribution::TargetDistribution(int dim, double alpha, std::string label)
    : dim_(dim), alpha_(alpha), label_(std::move(label)) {
  if (dim < 1) throw std::invalid_argument("target dimension must be at least 1");
  if (!(alpha > 0.0)) throw std::invalid_argument("tail parameter alpha must be positive");
}

Vec TargetDistribution::gradient(const Vec& q) const {
  Vec out(dim_);
  gradient(q, out);
  return out;
}

Mat TargetDistribution::hessian(const Vec& q) const {
  const int d = dim_;
  Mat h(d, d);
  Vec up(d), down(d);
  for (int j = 0; j < d; ++j) {
    const double step = 1e-5 * std::max(1.0, std::fabs(q[j]));
    Vec qp = q, qm = q;
    qp[j] += step;
    qm[j] -= step;
    gradient(qp, up);
    gradient(qm, down);
    h.col(j) = (up - down) / (qp[j] - qm[j]);
  }
  return 0.5 * (h + h.transpose());
}

std::pair<double, double> TargetDistribution::extreme_range(int) const { return {-6.0, 6.0}; }

namespace {

class StandardNormal final : public TargetDistribution {
 public:
  explicit StandardNormal(int d) : TargetDistribution(d, 2.0, "standard_normal") {}

  double potential(const Vec& q) const override { return 0.5 * q.squaredNorm(); }
  void gradient(const Vec& q, Vec& out) const override { out = q; }
  Mat hessian(const Vec&) const override { return Mat::Identity(dim(), dim()); }
};

// Sigma = (1 - rho) I + rho 1 1^T; its inverse is
// (I - rho / (1 + (d - 1) rho) 1 1^T) / (1 - rho).
class CorrelatedNormal final : public TargetDistribution {
 public:
  explicit CorrelatedNormal(const CorrelatedNormalSpec& spec)
      : TargetDistribution(spec.d, 2.0, "correlated_normal"),
        inv_diag_(1.0 / (1.0 - spec.rho)),
        rank_one_(spec.rho / (1.0 + (spec.d - 1) * spec.rho)) {}

  double potential(const Vec& q) const override {
    const double s = q.sum();
    return 0.5 * inv_diag_ * (q.squaredNorm() - rank_one_ * s * s);
  }

  void gradient(const Vec& q, Vec& out) const override {
    const double shift = rank_one_ * q.sum();
    out = inv_diag_ * (q.array() - shift).matrix();
  }

  Mat hessian(const Vec&) const override {
    const int d = dim();
    return inv_diag_ * (Mat::Identity(d, d) - rank_one_ * Mat::Ones(d, d));
  }

 private:
  double inv_diag_;
  double rank_one_;
};

class StudentT final : public TargetDistribution {
 public:
  StudentT(int d, double nu, double alpha)
      : TargetDistribution(d, alpha, "t_distribution"), nu_(nu), half_total_(0.5 * (nu + d)) {}

  double potential(const Vec& q) const override { return half_total_ * std::log1p(q.squaredNorm() / nu_); }

  void gradient(const Vec& q, Vec& out) const override { out = (2.0 * half_total_ / (nu_ + q.squaredNorm())) * q; }

  Mat hessian(const Vec& q) const override {
    const double r2 = q.squaredNorm();
    const double denom = nu_ + r2;
    const double c = 2.0 * half_total_;
    return (c / denom) * Mat::Identity(dim(), dim()) - (2.0 * c / (denom * denom)) * (q * q.transpose());
  }

 private:
  double nu_;
  double half_total_;
};

// U(q) = -log(exp(-a) + exp(-b)) with a = |q|^2/2, b = |q - mu e1|^2/2. This is
// the equal mixture's negative log-likelihood shifted so that U(0) is
// -log1p(exp(-mu^2/2)), which is zero to within exp(-mu^2/2).
class NormalMixture final : public TargetDistribution {
 public:
  explicit NormalMixture(const MixtureSpec& spec) : TargetDistribution(spec.d, 2.0, "normal_mixture"), mu_(spec.mu) {}

  double potential(const Vec& q) const override {
    const double rest = q.tail(dim() - 1).squaredNorm();
    const double shifted = q[0] - mu_;
    const double a = 0.5 * (q[0] * q[0] + rest);
    const double b = 0.5 * (shifted * shifted + rest);
    return std::min(a, b) - std::log1p(std::exp(-std::fabs(a - b)));
  }

  void gradient(const Vec& q, Vec& out) const override {
    const double shifted = q[0] - mu_;
    // a - b depends on the first coordinate only.
    const double diff = 0.5 * (q[0] * q[0] - shifted * shifted);
    // Weight of the second component, 1 / (1 + exp(b - a)).
    const double wb = diff >= 0.0 ? 1.0 / (1.0 + std::exp(-diff)) : std::exp(diff) / (1.0 + std::exp(diff));
    out = q;
    out[0] = q[0] - wb * mu_;
  }

  std::pair<double, double> extreme_range(int i) const override {
    if (i == 0) return {-6.0, mu_ + 6.0};
    return {-6.0, 6.0};
  }

  std::vector<Vec> extra_start_points() const override {
    Vec second = Vec::Zero(dim());
    second[0] = mu_;
    return {second};
  }

 private:
  double mu_;
};

}  // namespace

TargetPtr make_standard_normal(int d) { return std::make_shared<StandardNormal>(d); }

TargetPtr make_correlated_normal(const CorrelatedNormalSpec& spec) {
  if (!(spec.rho >= 0.0 && spec.rho < 1.0)) {
    throw std::invalid_argument("correlation rho must lie in [0, 1)");
  }
  return std::make_shared<CorrelatedNormal>(spec);
}

TargetPtr make_t_distribution(int d, double nu, double alpha) {
  if (!(nu > 0.0)) throw std::invalid_argument("degrees of freedom must be positive");
  return std::make_shared<StudentT>(d, nu, alpha);
}

TargetPtr make_normal_mixture(const MixtureSpec& spec) {
  if (!(spec.mu > 0.0)) throw std::invalid_argument("mixture separation mu must be positive");
  return std::make_shared<NormalMixture>(spec);
}

double correlated_normal_potential_reference(const CorrelatedNormalSpec& spec, const Vec& q) {
  const int d = spec.d;
  Mat sigma = Mat::Constant(d, d, spec.rho);
  sigma.diagonal().setOnes();
  const Mat inverse = sigma.inverse();
  return 0.5 * q.dot(inverse * q);
}

ScaledTarget::ScaledTarget(TargetPtr base, Vec center, const Mat& hessian)
    : TargetDistribution(base->dim(), base->alpha(), base->label()),
      base_(std::move(base)),
      center_(std::move(center)),
      diagonal_(false) {
  const int d = dim();
  if (hessian.rows() != d || hessian.cols() != d || center_.size() != d) {
    throw std::invalid_argument("ScaledTarget: shape mismatch");
  }
  Eigen::LLT<Mat> llt(hessian);
  if (llt.info() != Eigen::Success) {
    Eigen::SelfAdjointEigenSolver<Mat> eig(hessian);
    std::ostringstream msg;
    msg << "Hessian at the mode is not positive definite (smallest eigenvalue " << eig.eigenvalues().minCoeff()
        << ")";
    throw std::domain_error(msg.str());
  }
  factor_ = llt.matrixL();
  const Mat off = factor_ - Mat(factor_.diagonal().asDiagonal());
  diagonal_ = off.cwiseAbs().maxCoeff() == 0.0;
  diag_ = factor_.diagonal();
}

Vec ScaledTarget::unscale(const Vec& z) const {
  if (diagonal_) return center_ + z.cwiseQuotient(diag_);
  return center_ + factor_.transpose().triangularView<Eigen::Upper>().solve(z);
}

Vec ScaledTarget::scale(const Vec& q) const {
  const Vec delta = q - center_;
  if (diagonal_) return delta.cwiseProduct(diag_);
  return factor_.transpose() * delta;
}

double ScaledTarget::potential(const Vec& z) const { return base_->potential(unscale(z)); }

void ScaledTarget::gradient(const Vec& z, Vec& out) const {
  Vec g(dim());
  base_->gradient(unscale(z), g);
  if (diagonal_) {
    out = g.cwiseQuotient(diag_);
  } else {
    out = factor_.triangularView<Eigen::Lower>().solve(g);
  }
}

Mat ScaledTarget::hessian(const Vec& z) const {
  const Mat h = base_->hessian(unscale(z));
  if (diagonal_) {
    const Vec inv = diag_.cwiseInverse();
    return inv.asDiagonal() * h * inv.asDiagonal();
  }
  const Mat left = factor_.triangularView<Eigen::Lower>().solve(h);
  return factor_.triangularView<Eigen::Lower>().solve(left.transpose()).transpose();
}

Vec ScaledTarget::to_model(const Vec& z) const { return base_->to_model(unscale(z)); }

std::shared_ptr<const ScaledTarget> scale_transform(const TargetPtr& target) {
  const Vec center = target->mode();
  return std::make_shared<ScaledTarget>(target, center, target->hessian(center));
}

StartPointSet cftp_start_points(const TargetDistribution& target, std::uint64_t seed) {
  const int d = target.dim();
  const int factorial_dims = std::min(d, 5);
  const int n_extreme = 1 << factorial_dims;
  StartPointSet set;
  set.points.reserve(static_cast<std::size_t>(n_extreme) + 2);
  for (int k = 0; k < n_extreme; ++k) {
    Vec point(d);
    for (int i = 0; i < d; ++i) {
      const auto [low, high] = target.extreme_range(i);
      bool high_side;
      if (i < factorial_dims) {
        high_side = ((k >> i) & 1) != 0;
      } else {
        const StreamKey key{seed, Stream::exploration, 0, 0, static_cast<std::uint64_t>(k),
                            static_cast<std::uint64_t>(i)};
        high_side = uniform(key) >= 0.5;
      }
      point[i] = high_side ? high : low;
    }
    set.points.push_back(std::move(point));
  }
  set.points.push_back(target.mode());
  for (auto& extra : target.extra_start_points()) set.points.push_back(std::move(extra));
  return set;
}

}  // namespace hmcperfect
