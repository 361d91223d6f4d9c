#pragma once

#include <cstdint>
#include <map>

#include <json.hpp>

namespace hmcperfect {

/// Counters for one chain, worker or run. All fields are sums, so merging is
/// componentwise addition.
struct EvalMetrics {
  std::uint64_t du_evals_used = 0;
  std::uint64_t du_evals_discarded = 0;
  std::uint64_t u_evals = 0;
  std::uint64_t trajectories = 0;
  std::uint64_t points_total = 0;
  std::uint64_t mh_accepts = 0;
  std::uint64_t mh_rejects = 0;
  std::uint64_t rounding_accepts = 0;
  std::uint64_t rounding_rejects = 0;
  std::uint64_t uturn_terminations = 0;
  std::uint64_t block_runs = 0;
  /// Number of chains that coalesced with their successor after k blocks.
  std::map<int, std::uint64_t> blocks_to_coalesce;

  std::uint64_t du_evals_total() const { return du_evals_used + du_evals_discarded; }
  int max_blocks_to_coalesce() const;
  void record_blocks_to_coalesce(int blocks, std::uint64_t count = 1) { blocks_to_coalesce[blocks] += count; }

  EvalMetrics& operator+=(const EvalMetrics& other);
  bool operator==(const EvalMetrics& other) const = default;
};

EvalMetrics merge(const EvalMetrics& a, const EvalMetrics& b);

/// Summary figures plus the raw counters. Derivative evaluations per
/// perfect-sample point divide the whole run's evaluations by the number of
/// certified points; with no certified points the report carries an error.
nlohmann::json report(const EvalMetrics& metrics, std::uint64_t certified_points);

nlohmann::json to_json(const EvalMetrics& metrics);

}  // namespace hmcperfect
