#include "hmcperfect/metrics.hpp"

#include <string>

namespace hmcperfect {

int EvalMetrics::max_blocks_to_coalesce() const {
  int best = 0;
  for (const auto& [blocks, count] : blocks_to_coalesce) {
    if (count > 0 && blocks > best) best = blocks;
  }
  return best;
}

EvalMetrics& EvalMetrics::operator+=(const EvalMetrics& other) {
  du_evals_used += other.du_evals_used;
  du_evals_discarded += other.du_evals_discarded;
  u_evals += other.u_evals;
  trajectories += other.trajectories;
  points_total += other.points_total;
  mh_accepts += other.mh_accepts;
  mh_rejects += other.mh_rejects;
  rounding_accepts += other.rounding_accepts;
  rounding_rejects += other.rounding_rejects;
  uturn_terminations += other.uturn_terminations;
  block_runs += other.block_runs;
  for (const auto& [blocks, count] : other.blocks_to_coalesce) blocks_to_coalesce[blocks] += count;
  return *this;
}

EvalMetrics merge(const EvalMetrics& a, const EvalMetrics& b) {
  EvalMetrics out = a;
  out += b;
  return out;
}

nlohmann::json to_json(const EvalMetrics& m) {
  nlohmann::json hist = nlohmann::json::object();
  for (const auto& [blocks, count] : m.blocks_to_coalesce) hist[std::to_string(blocks)] = count;
  return {
      {"du_evals_used", m.du_evals_used},
      {"du_evals_discarded", m.du_evals_discarded},
      {"du_evals_total", m.du_evals_total()},
      {"u_evals", m.u_evals},
      {"trajectories", m.trajectories},
      {"points_total", m.points_total},
      {"mh_accepts", m.mh_accepts},
      {"mh_rejects", m.mh_rejects},
      {"rounding_accepts", m.rounding_accepts},
      {"rounding_rejects", m.rounding_rejects},
      {"uturn_terminations", m.uturn_terminations},
      {"block_runs", m.block_runs},
      {"blocks_to_coalesce", hist},
  };
}

nlohmann::json report(const EvalMetrics& m, std::uint64_t certified_points) {
  nlohmann::json out;
  out["counters"] = to_json(m);
  out["certified_points"] = certified_points;
  const double traj = static_cast<double>(m.trajectories);
  out["mean_points_per_trajectory"] = m.trajectories ? static_cast<double>(m.points_total) / traj : 0.0;
  out["mean_du_used_per_trajectory"] = m.trajectories ? static_cast<double>(m.du_evals_used) / traj : 0.0;
  out["mean_du_discarded_per_trajectory"] = m.trajectories ? static_cast<double>(m.du_evals_discarded) / traj : 0.0;
  const std::uint64_t mh = m.mh_accepts + m.mh_rejects;
  out["mh_acceptance_rate"] = mh ? static_cast<double>(m.mh_accepts) / static_cast<double>(mh) : 0.0;
  out["max_blocks_to_coalesce"] = m.max_blocks_to_coalesce();
  std::uint64_t chains = 0;
  std::uint64_t chain_blocks = 0;
  for (const auto& [blocks, count] : m.blocks_to_coalesce) {
    chains += count;
    chain_blocks += static_cast<std::uint64_t>(blocks) * count;
  }
  const double mean_blocks = chains ? static_cast<double>(chain_blocks) / static_cast<double>(chains) : 0.0;
  const double per_block_run =
      m.block_runs ? static_cast<double>(m.du_evals_total()) / static_cast<double>(m.block_runs) : 0.0;
  out["mean_blocks_to_coalesce"] = mean_blocks;
  out["du_per_block_run"] = per_block_run;
  // Cost of one chain's own blocks up to its first join, without the runs of
  // chains it is copied from.
  out["du_per_chain_to_coalescence"] = per_block_run * mean_blocks;
  if (certified_points == 0) {
    out["du_per_perfect_point"] = nullptr;
    out["error"] = "no certified sample points";
  } else {
    out["du_per_perfect_point"] = static_cast<double>(m.du_evals_total()) / static_cast<double>(certified_points);
  }
  return out;
}

}  // namespace hmcperfect
