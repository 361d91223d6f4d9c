#include "hmcperfect/dynamics.hpp"

#include <cmath>
#include <sstream>

#include "hmcperfect/special.hpp"

namespace hmcperfect {

void require_finite(const Vec& v, const char* what) {
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (!std::isfinite(v[i])) {
      std::ostringstream msg;
      msg << what << " coordinate " << i << " is not finite (" << v[i] << ")";
      throw NumericalError(msg.str());
    }
  }
}

void evaluate_gradient(const TargetDistribution& target, const Vec& q, Vec& out, EvalCounter& counter) {
  require_finite(q, "position");
  ++counter.du;
  target.gradient(q, out);
  require_finite(out, "gradient");
}

double evaluate_potential(const TargetDistribution& target, const Vec& q, EvalCounter& counter) {
  ++counter.u;
  return target.potential(q);
}

double KineticEnergy::energy(const Vec& p) const { return kinetic_energy(p, beta); }

void KineticEnergy::gradient(const Vec& p, Vec& out) const {
  if (beta == 2.0) {
    out = p;
    return;
  }
  const double norm = p.norm();
  if (norm == 0.0) {
    if (beta < 2.0) throw std::domain_error("kinetic gradient is singular at zero momentum for beta < 2");
    out.setZero(p.size());
    return;
  }
  out = std::pow(norm, beta - 2.0) * p;
}

double kinetic_energy(const Vec& p, double beta) {
  if (beta == 2.0) return 0.5 * p.squaredNorm();
  return std::pow(p.norm(), beta) / beta;
}

Vec kinetic_gradient(const Vec& p, double beta) {
  Vec out(p.size());
  KineticEnergy{beta}.gradient(p, out);
  return out;
}

void sample_momentum(std::span<const double> uniforms, double beta, Vec& p) {
  if (beta != 2.0) {
    throw UnsupportedConfiguration("momentum sampling is implemented for beta = 2 only");
  }
  p.resize(static_cast<Eigen::Index>(uniforms.size()));
  for (std::size_t i = 0; i < uniforms.size(); ++i) p[static_cast<Eigen::Index>(i)] = inverse_normal_cdf(uniforms[i]);
}

Vec sample_momentum(std::span<const double> uniforms, double beta) {
  Vec p;
  sample_momentum(uniforms, beta, p);
  return p;
}

double time_step(const TimeStepConfig& cfg) {
  const double a = cfg.alpha;
  const double b = cfg.beta;
  const double d = cfg.d;
  const double log_value = std::log(2.0 * cfg.h) + (1.0 / b - 1.0) * std::log(b) + std::log(a) / a +
                           log_gamma(d / b) - log_gamma((d - 1.0) / b + 1.0) +
                           log_gamma((d - 1.0) / b + d / a + 1.0) - log_gamma((d - 1.0) / b + (d - 1.0) / a + 1.0);
  return std::exp(log_value);
}

double conditional_time_step(const TimeStepConfig& cfg, double energy) {
  const double a = cfg.alpha;
  const double b = cfg.beta;
  const double d = cfg.d;
  const double log_value = std::log(2.0 * cfg.h) + std::log(a * energy) / a + (1.0 / b - 1.0) * std::log(b * energy) +
                           log_gamma(d / b) + log_gamma(d / b + d / a + 1.0 - 1.0 / b) -
                           log_gamma(d / b + 1.0 - 1.0 / b) - log_gamma(d / b + d / a);
  return std::exp(log_value);
}

void leapfrog_half_kick(PhaseState& state, const TargetDistribution& target, double dt, int direction,
                        EvalCounter& counter) {
  Vec grad(state.q.size());
  evaluate_gradient(target, state.q, grad, counter);
  state.p -= (direction * 0.5 * dt) * grad;
  require_finite(state.p, "momentum");
  state.time2 += direction;
}

void leapfrog_step(PhaseState& state, const TargetDistribution& target, const KineticEnergy& kinetic, double dt,
                   int direction, EvalCounter& counter) {
  Vec velocity(state.q.size());
  Vec grad(state.q.size());
  if (direction >= 0) {
    kinetic.gradient(state.p, velocity);
    state.q += dt * velocity;
    evaluate_gradient(target, state.q, grad, counter);
    state.p -= dt * grad;
    state.time2 += 2;
  } else {
    evaluate_gradient(target, state.q, grad, counter);
    state.p += dt * grad;
    kinetic.gradient(state.p, velocity);
    state.q -= dt * velocity;
    state.time2 -= 2;
  }
  require_finite(state.q, "position");
  require_finite(state.p, "momentum");
}

void verlet_step(Vec& q, Vec& p, Vec& grad, const TargetDistribution& target, const KineticEnergy& kinetic, double dt,
                 int direction, EvalCounter& counter) {
  const double step = direction * dt;
  Vec velocity(q.size());
  p -= (0.5 * step) * grad;
  kinetic.gradient(p, velocity);
  q += step * velocity;
  evaluate_gradient(target, q, grad, counter);
  p -= (0.5 * step) * grad;
  require_finite(p, "momentum");
}

}  // namespace hmcperfect
