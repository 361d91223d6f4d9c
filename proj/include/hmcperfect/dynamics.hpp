#pragma once

#include <cstdint>
#include <span>

#include "hmcperfect/targets.hpp"

namespace hmcperfect {

/// Derivative and likelihood evaluation counts owned by one chain.
struct EvalCounter {
  std::uint64_t du = 0;
  std::uint64_t u = 0;
};

/// DU(q) into out, counted. Throws NumericalError if q or the result is not finite.
void evaluate_gradient(const TargetDistribution& target, const Vec& q, Vec& out, EvalCounter& counter);
/// U(q), counted separately from gradients.
double evaluate_potential(const TargetDistribution& target, const Vec& q, EvalCounter& counter);

/// Throws NumericalError naming the first non-finite coordinate of v.
void require_finite(const Vec& v, const char* what);

/// K(p) = |p|^beta / beta.
struct KineticEnergy {
  double beta = 2.0;

  double energy(const Vec& p) const;
  /// DK(p) = |p|^(beta - 2) p.
  void gradient(const Vec& p, Vec& out) const;
};

double kinetic_energy(const Vec& p, double beta);
/// Throws std::domain_error for p = 0 with beta < 2.
Vec kinetic_gradient(const Vec& p, double beta);

/// Momentum from exactly p.size() uniforms by the inverse normal CDF. Only
/// beta = 2 is supported; other values throw UnsupportedConfiguration.
void sample_momentum(std::span<const double> uniforms, double beta, Vec& p);
Vec sample_momentum(std::span<const double> uniforms, double beta);

struct TimeStepConfig {
  double h = 0.05;
  double alpha = 2.0;
  double beta = 2.0;
  int d = 1;
};

/// Time step giving about 1/h points per trajectory for a unit-scaled target
/// with U ~ |q|^alpha / alpha. Computed through log-gamma.
double time_step(const TimeStepConfig& cfg);

/// The time step that suits total energy H. For alpha = beta = 2 it does not
/// depend on H and equals time_step(cfg).
double conditional_time_step(const TimeStepConfig& cfg, double energy);

/// Position and momentum. time2 is twice the time index, so odd values mark
/// momentum at integer-plus-a-half times.
struct PhaseState {
  Vec q;
  Vec p;
  int time2 = 0;
};

/// p += direction * dt/2 * (-DU(q)); one counted gradient.
void leapfrog_half_kick(PhaseState& state, const TargetDistribution& target, double dt, int direction,
                        EvalCounter& counter);

/// Forward (direction = +1): q += dt DK(p), then p += dt (-DU(q)).
/// Backward (direction = -1): the exact inverse, p -= dt (-DU(q)) then q -= dt DK(p).
void leapfrog_step(PhaseState& state, const TargetDistribution& target, const KineticEnergy& kinetic, double dt,
                   int direction, EvalCounter& counter);

/// Velocity Verlet between integer times. grad holds DU(q) on entry and is
/// updated to DU(q_new); one counted gradient.
void verlet_step(Vec& q, Vec& p, Vec& grad, const TargetDistribution& target, const KineticEnergy& kinetic, double dt,
                 int direction, EvalCounter& counter);

}  // namespace hmcperfect
