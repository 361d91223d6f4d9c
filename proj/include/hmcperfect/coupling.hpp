#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "hmcperfect/metrics.hpp"
#include "hmcperfect/trajectories.hpp"

namespace hmcperfect {

/// Per-chain scratch space and counters. One per worker; never shared.
struct ChainWorkspace {
  TrajectoryBuffer buffer;
  EvalCounter counter;
  EvalMetrics metrics;
  std::vector<double> momentum_uniforms;
};

/// Runs every row of the block as one HMC trajectory with its M-H test,
/// starting from q. Returns the end position.
Vec hmc(const Vec& q_start, const RandomBlock& block, const TargetDistribution& target, const SamplerConfig& cfg,
        ChainWorkspace& ws);

/// Rounds q to the congruence w * (floor(q / w) + r_ro[0..d)) and accepts it
/// when r_ro[d] <= exp(U(q) - U(q_ro)). Returns whether it was accepted.
bool round_to_congruence(Vec& q, const Vec& r_ro, double w, const TargetDistribution& target, ChainWorkspace& ws);

/// HMC over the block followed by one rounding step with the block's
/// rounding variates.
Vec hmc_round(const Vec& q_start, const RandomBlock& block, double w, const TargetDistribution& target,
              const SamplerConfig& cfg, ChainWorkspace& ws);

struct CftpResult {
  std::vector<Vec> end_points;
  int n_coal = 0;
};

/// Runs each start through the last n_it rows of `block` (which has N_it
/// rows), so every run ends on the same final row. n_coal counts starts
/// whose outcome equals the previous start's, plus one.
CftpResult cftp(const std::vector<Vec>& starts, int n_it, const RandomBlock& block, double w,
                const TargetDistribution& target, const SamplerConfig& cfg, ChainWorkspace& ws);

class CoalescenceTimeout : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct RocftpConfig {
  int block_length = 10;
  int n_samples = 100;
  int max_blocks = 100000;
  double w = 0.01;
  std::uint64_t seed = 0;
};

struct RocftpResult {
  std::vector<Vec> samples;
  int blocks = 0;
  int coalesced_blocks = 0;
};

/// Read-once CFTP: forward blocks of fixed length; a block coalesces when all
/// tracked starts agree, and the carried chain's value on entry to every
/// coalesced block after the first is emitted. Throws CoalescenceTimeout
/// when max_blocks pass before n_samples are emitted.
RocftpResult rocftp(const std::vector<Vec>& starts, const RocftpConfig& rc, const TargetDistribution& target,
                    const SamplerConfig& cfg, ChainWorkspace& ws);

struct UnbiasedConfig {
  int n_sets = 1;
  int n_blocks = 14;
  int block_length = 10;
  double w = 0.01;
  std::uint64_t seed = 0;
  std::uint64_t first_set = 0;
  SamplerConfig sampler{};
};

/// Notification for each block pass of one sample set; `upper` tells which
/// triangle, `chains_run` how many chains executed HMC in that block.
struct BlockEvent {
  std::uint64_t sample_set = 0;
  int block = 0;
  bool upper = true;
  int chains_run = 0;
  std::uint64_t fingerprint = 0;
};
using BlockObserver = std::function<void(const BlockEvent&)>;

struct SampleSetResult {
  /// n_blocks final chain positions; row i is chain i's final point.
  std::vector<Vec> points;
  /// certified[i]: chain i coalesced with the chain after it (cyclically).
  std::vector<char> certified;
  bool error = false;
  std::string failure;
  EvalMetrics metrics;
  /// Blocks each chain ran before joining an earlier chain; 0 if it never did.
  std::vector<int> blocks_to_coalesce;
  int hmc_runs = 0;
};

/// The chain x block matrix for one sample set.
SampleSetResult run_sample_set(std::uint64_t sample_set, const UnbiasedConfig& uc, const TargetDistribution& target,
                               ChainWorkspace& ws, const BlockObserver& observer = {});

/// Start of chain `chain` in a sample set: each coordinate at the low or
/// high end of the target's extreme range with equal probability.
Vec unbiased_start_point(const TargetDistribution& target, std::uint64_t seed, std::uint64_t sample_set,
                         std::uint64_t chain);

struct UnbiasedResult {
  /// n_sets * n_blocks rows, sample set major.
  Mat samples;
  std::vector<char> certified;
  bool error = false;
  std::vector<std::string> failures;
  EvalMetrics metrics;

  std::uint64_t certified_count() const;
};

/// Serial reference implementation.
UnbiasedResult unbiased_perfect_serial(const UnbiasedConfig& uc, const TargetDistribution& target);
/// Sample sets spread over OpenMP threads; bitwise identical to the serial run.
UnbiasedResult unbiased_perfect_parallel(const UnbiasedConfig& uc, const TargetDistribution& target, int workers);
/// Parallel when workers > 1, otherwise serial.
UnbiasedResult unbiased_perfect(const UnbiasedConfig& uc, const TargetDistribution& target, int workers = 1);

struct UnbiasedString {
  std::vector<Vec> points;
  std::vector<int> weights;
  /// First i with X_i equal to Y_(i-1); -1 if not reached within the cap.
  int tau = -1;
};

/// Coupled chains X and Y where X_i -> X_(i+1) and Y_(i-1) -> Y_i share
/// block i. Emits (X_k, +1) and then (Y_j, -1), (X_(j+1), +1) for
/// j = k .. tau - 2.
UnbiasedString unbiased_string(const Vec& x0, const Vec& y0, int k, int max_blocks, const UnbiasedConfig& uc,
                               const TargetDistribution& target, std::uint64_t pair_index, ChainWorkspace& ws);

}  // namespace hmcperfect
