#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "hmcperfect/dynamics.hpp"
#include "hmcperfect/random.hpp"

namespace hmcperfect {

/// Column layout of one random row, shared by every sampler:
/// [0, d) momentum, [d, 2d) direction vector, [2d, 2d + 8) flop directions,
/// 2d + 8 destination selection, 2d + 9 Metropolis-Hastings test.
struct RowLayout {
  static constexpr int max_flops = 8;

  int d = 1;

  int momentum() const { return 0; }
  int direction() const { return d; }
  int flop(int i_flop) const { return 2 * d + i_flop - 1; }
  int destination() const { return 2 * d + max_flops; }
  int mh_test() const { return 2 * d + max_flops + 1; }
  int width() const { return 2 * d + max_flops + 2; }
};

/// One row of variates, read lazily from a RandomBlock or held explicitly.
class RandomRow {
 public:
  RandomRow(const RandomBlock& block, int row) : block_(&block), row_(row) {}
  explicit RandomRow(Vec values) : block_(nullptr), row_(0), values_(std::move(values)) {}

  double at(int column) const;
  void fill(int first_column, std::span<double> out) const;

 private:
  const RandomBlock* block_;
  int row_;
  Vec values_;
};

/// Points q and momenta p indexed from -capacity to +capacity, with a cache
/// of gradients already evaluated at stored points. Reused across calls.
class TrajectoryBuffer {
 public:
  void reset(int dim, int capacity_per_side);

  int capacity() const { return capacity_; }
  auto q(int i) { return q_.col(i + capacity_); }
  auto p(int i) { return p_.col(i + capacity_); }
  auto grad(int i) { return g_.col(i + capacity_); }
  auto q(int i) const { return q_.col(i + capacity_); }
  auto p(int i) const { return p_.col(i + capacity_); }
  auto grad(int i) const { return g_.col(i + capacity_); }
  bool has_grad(int i) const { return has_g_[static_cast<std::size_t>(i + capacity_)] != 0; }
  void set_has_grad(int i, bool v) { has_g_[static_cast<std::size_t>(i + capacity_)] = v ? 1 : 0; }

  /// Supplies DU at the next trajectory's origin, which the caller already
  /// holds from the previous trajectory. Consumed by the next start.
  void prime_origin(const Vec& grad) {
    primed_grad_ = grad;
    primed_ = true;
  }
  void clear_prime() { primed_ = false; }
  /// Stores the origin point and its gradient, evaluating DU only when no
  /// primed value is pending.
  void start(const Vec& q0, const Vec& p0, int capacity_per_side, const TargetDistribution& target,
             EvalCounter& counter);
  /// Whether the current trajectory's origin gradient came from prime_origin.
  bool origin_primed() const { return origin_primed_; }

 private:
  int dim_ = 0;
  int capacity_ = 0;
  Mat q_;
  Mat p_;
  Mat g_;
  std::vector<unsigned char> has_g_;
  Vec primed_grad_;
  bool primed_ = false;
  bool origin_primed_ = false;
};

enum class SamplerKind { raw, nuts, nuts4, fruts };

std::string to_string(SamplerKind kind);
SamplerKind parse_sampler(const std::string& name);

/// Which U-turn bookkeeping NUTS4 uses within its first 16 points.
/// literal: the flag is overwritten by each test batch, so only the last
/// batch of flop 4 decides, and the block of four points around the origin is
/// never tested on its own. symmetric: the block around the origin is tested
/// once flop 2 completes and the flag accumulates over flops 3 and 4, so
/// every pair of four-point segments in the first 16 points is tested
/// whatever the origin.
enum class Nuts4Variant { literal, symmetric };

struct SamplerConfig {
  SamplerKind kind = SamplerKind::nuts4;
  double dt = 0.1;
  KineticEnergy kinetic{};
  /// Points per side for raw HMC.
  int raw_side = 10;
  /// Points per side before the FRUTS limiting rule engages.
  int fruts_limit = 256;
  Nuts4Variant nuts4_variant = Nuts4Variant::symmetric;
  /// Record every retained point with its integer-time momentum.
  bool record_points = false;
};

struct TrajectoryResult {
  /// Destination, momentum at integer time.
  Vec q;
  Vec p;
  /// Destination index in time order (negative before the origin).
  int dest_index = 0;
  int i_minus = 0;
  int i_plus = 0;
  /// Points the destination was drawn from.
  int point_count = 0;
  std::uint64_t du_used = 0;
  std::uint64_t du_discarded = 0;
  bool uturn_terminated = false;
  /// Filled when SamplerConfig::record_points is set, in time order from i_minus.
  std::vector<Vec> points_q;
  std::vector<Vec> points_p;
};

/// q_span . p < 0 for either momentum; exact zero is not a U-turn.
bool is_uturn(const Vec& q_span, const Vec& p_start, const Vec& p_end);

TrajectoryResult raw_trajectory(const Vec& q0, const Vec& p0, const RandomRow& row, const TargetDistribution& target,
                                const SamplerConfig& cfg, TrajectoryBuffer& buf, EvalCounter& counter);
TrajectoryResult nuts_trajectory(const Vec& q0, const Vec& p0, const RandomRow& row, const TargetDistribution& target,
                                 const SamplerConfig& cfg, TrajectoryBuffer& buf, EvalCounter& counter);
TrajectoryResult nuts4_trajectory(const Vec& q0, const Vec& p0, const RandomRow& row, const TargetDistribution& target,
                                  const SamplerConfig& cfg, TrajectoryBuffer& buf, EvalCounter& counter);
TrajectoryResult fruts_trajectory(const Vec& q0, const Vec& p0, const RandomRow& row, const TargetDistribution& target,
                                  const SamplerConfig& cfg, TrajectoryBuffer& buf, EvalCounter& counter);

TrajectoryResult run_trajectory(const Vec& q0, const Vec& p0, const RandomRow& row, const TargetDistribution& target,
                                const SamplerConfig& cfg, TrajectoryBuffer& buf, EvalCounter& counter);

/// Unit vector from d uniforms: normalized inverse-CDF normals.
Vec unit_direction(std::span<const double> uniforms);

/// Extent of one FRUTS side: how many points it holds and whether its sign
/// change was reached within the steps computed.
struct FrutsSide {
  int points = 0;
  bool terminated = true;
};

/// Selection probabilities over the points of one FRUTS trajectory with per-side
/// limit n_limit. Indices run from -minus.points to plus.points in time
/// order; the returned vector has one entry per index (zeros for ineligible
/// points). Sides must have been computed far enough to decide the rule:
/// see fruts_trajectory.
std::vector<double> fruts_selection_probabilities(const FrutsSide& minus, const FrutsSide& plus, int n_limit);

/// Picks an index from the probabilities (indexed from -offset) by walking them
/// in ascending order when ascending is true, else descending.
int fruts_limited_select(const std::vector<double>& probs, int offset, bool ascending, double r);

}  // namespace hmcperfect
