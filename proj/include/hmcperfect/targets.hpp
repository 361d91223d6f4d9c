#pragma once

#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "hmcperfect/types.hpp"

namespace hmcperfect {

/// A distribution to sample, described by its negative log-likelihood U and
/// gradient DU. Implementations are immutable and reentrant; evaluation keeps
/// no hidden state, so one instance can be shared across threads.
class TargetDistribution {
 public:
  virtual ~TargetDistribution() = default;

  int dim() const { return dim_; }
  /// Tail parameter used by the time-step formula (2 for short tails).
  double alpha() const { return alpha_; }
  const std::string& label() const { return label_; }

  virtual double potential(const Vec& q) const = 0;
  virtual void gradient(const Vec& q, Vec& out) const = 0;
  Vec gradient(const Vec& q) const;

  /// Maximum-likelihood point in this target's coordinates.
  virtual Vec mode() const { return Vec::Zero(dim_); }

  /// Hessian of U. The default is a central difference of the gradient.
  virtual Mat hessian(const Vec& q) const;

  /// Maps a point in this target's coordinates back to model coordinates.
  virtual Vec to_model(const Vec& q) const { return q; }

  /// Low and high extreme values of coordinate i for CFTP starting points.
  virtual std::pair<double, double> extreme_range(int i) const;

  /// Extra starting points beyond the extremes and the mode.
  virtual std::vector<Vec> extra_start_points() const { return {}; }

 protected:
  TargetDistribution(int dim, double alpha, std::string label);

 private:
  int dim_;
  double alpha_;
  std::string label_;
};

using TargetPtr = std::shared_ptr<const TargetDistribution>;

struct CorrelatedNormalSpec {
  int d = 2;
  double rho = 0.0;

  /// Ratio of the largest to smallest axis variance of the equicorrelation matrix.
  double aspect_ratio() const { return (1.0 + (d - 1) * rho) / (1.0 - rho); }
};

struct MixtureSpec {
  int d = 1;
  double mu = 4.0;
};

TargetPtr make_standard_normal(int d);
TargetPtr make_correlated_normal(const CorrelatedNormalSpec& spec);
TargetPtr make_t_distribution(int d, double nu, double alpha = 2.0);
TargetPtr make_normal_mixture(const MixtureSpec& spec);

/// Explicit-inverse form of the equicorrelated quadratic form, for tests.
double correlated_normal_potential_reference(const CorrelatedNormalSpec& spec, const Vec& q);

/// Wraps a target in coordinates z = L^T (q - center), where L L^T is the
/// Hessian of U at the mode. Diagonal Hessians are stored as a diagonal.
class ScaledTarget final : public TargetDistribution {
 public:
  ScaledTarget(TargetPtr base, Vec center, const Mat& hessian);
  using TargetDistribution::gradient;

  double potential(const Vec& z) const override;
  void gradient(const Vec& z, Vec& out) const override;
  Mat hessian(const Vec& z) const override;
  Vec mode() const override { return Vec::Zero(dim()); }
  Vec to_model(const Vec& z) const override;
  std::pair<double, double> extreme_range(int i) const override { return base_->extreme_range(i); }

  /// Model coordinates for a point in scaled coordinates.
  Vec unscale(const Vec& z) const;
  /// Scaled coordinates for a point in model coordinates.
  Vec scale(const Vec& q) const;

  const TargetDistribution& base() const { return *base_; }
  const Mat& cholesky_factor() const { return factor_; }
  bool diagonal() const { return diagonal_; }

 private:
  TargetPtr base_;
  Vec center_;
  Mat factor_;
  Vec diag_;
  bool diagonal_;
};

/// Scales by the square root (Cholesky factor) of the Hessian at the mode.
/// Throws std::domain_error naming the smallest eigenvalue when the Hessian
/// is not positive definite.
std::shared_ptr<const ScaledTarget> scale_transform(const TargetPtr& target);

struct StartPointSet {
  std::vector<Vec> points;
};

/// CFTP starting points: min(2^d, 32) extremes, the mode, then any extra
/// points the target declares. Coordinates beyond the fifth are set to a
/// random extreme drawn from the exploration stream of `seed`.
StartPointSet cftp_start_points(const TargetDistribution& target, std::uint64_t seed = 0);

}  // namespace hmcperfect
