#include "hmcperfect/coupling.hpp"

#include <cmath>
#include <sstream>

#include <omp.h>

namespace hmcperfect {

namespace {

void record_trajectory(EvalMetrics& m, const TrajectoryResult& t) {
  m.du_evals_used += t.du_used;
  m.du_evals_discarded += t.du_discarded;
  m.trajectories += 1;
  m.points_total += static_cast<std::uint64_t>(t.point_count);
  if (t.uturn_terminated) m.uturn_terminations += 1;
}

}  // namespace

Vec hmc(const Vec& q_start, const RandomBlock& block, const TargetDistribution& target, const SamplerConfig& cfg,
        ChainWorkspace& ws) {
  const int d = target.dim();
  const RowLayout layout{d};
  Vec q = q_start;
  Vec p0(d);
  ws.momentum_uniforms.resize(static_cast<std::size_t>(d));
  double u_current = evaluate_potential(target, q, ws.counter);
  ws.metrics.u_evals += 1;
  ws.buffer.clear_prime();
  for (int i = 0; i < block.rows(); ++i) {
    const RandomRow row(block, i);
    row.fill(layout.momentum(), ws.momentum_uniforms);
    sample_momentum(ws.momentum_uniforms, cfg.kinetic.beta, p0);
    const double h0 = u_current + cfg.kinetic.energy(p0);
    const TrajectoryResult t = run_trajectory(q, p0, row, target, cfg, ws.buffer, ws.counter);
    record_trajectory(ws.metrics, t);
    const double u_dest = evaluate_potential(target, t.q, ws.counter);
    ws.metrics.u_evals += 1;
    const double h = u_dest + cfg.kinetic.energy(t.p);
    const bool accept = std::isfinite(h) && row.at(layout.mh_test()) <= std::exp(h0 - h);
    if (accept) {
      q = t.q;
      u_current = u_dest;
      ws.metrics.mh_accepts += 1;
    } else {
      ws.metrics.mh_rejects += 1;
    }
    // DU at the next origin is already in the buffer.
    if (i + 1 < block.rows()) ws.buffer.prime_origin(ws.buffer.grad(accept ? t.dest_index : 0));
  }
  return q;
}

bool round_to_congruence(Vec& q, const Vec& r_ro, double w, const TargetDistribution& target, ChainWorkspace& ws) {
  const int d = static_cast<int>(q.size());
  Vec q_ro(d);
  for (int i = 0; i < d; ++i) q_ro[i] = w * (std::floor(q[i] / w) + r_ro[i]);
  const double u = evaluate_potential(target, q, ws.counter);
  const double u_ro = evaluate_potential(target, q_ro, ws.counter);
  ws.metrics.u_evals += 2;
  if (std::isfinite(u_ro) && r_ro[d] <= std::exp(u - u_ro)) {
    q = q_ro;
    ws.metrics.rounding_accepts += 1;
    return true;
  }
  ws.metrics.rounding_rejects += 1;
  return false;
}

Vec hmc_round(const Vec& q_start, const RandomBlock& block, double w, const TargetDistribution& target,
              const SamplerConfig& cfg, ChainWorkspace& ws) {
  if (!(w > 0.0)) throw std::invalid_argument("rounding width w must be positive");
  Vec q = hmc(q_start, block, target, cfg, ws);
  round_to_congruence(q, block.rounding(), w, target, ws);
  ws.metrics.block_runs += 1;
  return q;
}

CftpResult cftp(const std::vector<Vec>& starts, int n_it, const RandomBlock& block, double w,
                const TargetDistribution& target, const SamplerConfig& cfg, ChainWorkspace& ws) {
  if (n_it < 0 || n_it > block.rows()) {
    throw std::invalid_argument("cftp: n_it = " + std::to_string(n_it) + " exceeds N_it = " +
                                std::to_string(block.rows()));
  }
  const RandomBlock tail = block.suffix(n_it);
  CftpResult res;
  res.n_coal = starts.empty() ? 0 : 1;
  for (std::size_t s = 0; s < starts.size(); ++s) {
    res.end_points.push_back(hmc_round(starts[s], tail, w, target, cfg, ws));
    if (s >= 1 && same_point(res.end_points[s], res.end_points[s - 1])) res.n_coal += 1;
  }
  return res;
}

RocftpResult rocftp(const std::vector<Vec>& starts, const RocftpConfig& rc, const TargetDistribution& target,
                    const SamplerConfig& cfg, ChainWorkspace& ws) {
  if (starts.empty()) throw std::invalid_argument("rocftp: no starting points");
  const int d = target.dim();
  const RowLayout layout{d};
  RocftpResult res;
  Vec carried = starts.back();
  bool seen_coalescence = false;
  while (static_cast<int>(res.samples.size()) < rc.n_samples) {
    if (res.blocks >= rc.max_blocks) {
      std::ostringstream msg;
      msg << "ROCFTP: " << res.samples.size() << " of " << rc.n_samples << " samples after " << res.blocks
          << " blocks (" << res.coalesced_blocks << " coalesced)";
      throw CoalescenceTimeout(msg.str());
    }
    const Vec entry = carried;
    const RandomBlock block(rc.seed, Stream::rocftp, 0, static_cast<std::uint64_t>(res.blocks), rc.block_length,
                            layout.width(), d);
    ++res.blocks;
    bool coalesced = true;
    Vec previous;
    for (std::size_t s = 0; s < starts.size(); ++s) {
      Vec out = hmc_round(starts[s], block, rc.w, target, cfg, ws);
      if (s >= 1 && !same_point(out, previous)) coalesced = false;
      previous = std::move(out);
    }
    carried = hmc_round(carried, block, rc.w, target, cfg, ws);
    if (coalesced) {
      ++res.coalesced_blocks;
      if (seen_coalescence) res.samples.push_back(entry);
      seen_coalescence = true;
    }
  }
  return res;
}

Vec unbiased_start_point(const TargetDistribution& target, std::uint64_t seed, std::uint64_t sample_set,
                         std::uint64_t chain) {
  const int d = target.dim();
  Vec q(d);
  for (int i = 0; i < d; ++i) {
    const StreamKey key{seed, Stream::start, sample_set, 0, chain, static_cast<std::uint64_t>(i)};
    const auto [low, high] = target.extreme_range(i);
    q[i] = uniform(key) >= 0.5 ? high : low;
  }
  return q;
}

SampleSetResult run_sample_set(std::uint64_t sample_set, const UnbiasedConfig& uc, const TargetDistribution& target,
                               ChainWorkspace& ws, const BlockObserver& observer) {
  const int nb = uc.n_blocks;
  if (nb < 2) throw std::invalid_argument("n_blocks must be at least 2");
  if (uc.block_length < 1) throw std::invalid_argument("block_length must be at least 1");
  const int d = target.dim();
  const RowLayout layout{d};
  const EvalMetrics metrics_before = ws.metrics;
  ws.metrics = EvalMetrics{};

  std::vector<Vec> q0(static_cast<std::size_t>(nb));
  std::vector<Vec> q(static_cast<std::size_t>(nb));
  for (int b = 0; b < nb; ++b) {
    q0[static_cast<std::size_t>(b)] = unbiased_start_point(target, uc.seed, sample_set, static_cast<std::uint64_t>(b));
  }
  // c[i] = -1 while chain i runs; otherwise the chain it has merged into.
  std::vector<int> c(static_cast<std::size_t>(nb), -1);
  std::vector<int> blocks_run(static_cast<std::size_t>(nb), 0);

  SampleSetResult res;
  res.points.assign(static_cast<std::size_t>(nb), Vec());
  res.certified.assign(static_cast<std::size_t>(nb), 0);
  res.blocks_to_coalesce.assign(static_cast<std::size_t>(nb), 0);

  auto make_block = [&](int b) {
    return RandomBlock(uc.seed, Stream::hmc, sample_set, static_cast<std::uint64_t>(b), uc.block_length,
                       layout.width(), d);
  };
  auto step_chain = [&](int ic, const RandomBlock& block, int& chains_run) {
    auto& qi = q[static_cast<std::size_t>(ic)];
    auto& ci = c[static_cast<std::size_t>(ic)];
    if (ci >= 0) {
      qi = q[static_cast<std::size_t>(ci)];
    } else {
      qi = hmc_round(qi, block, uc.w, target, uc.sampler, ws);
      ++chains_run;
    }
    ++blocks_run[static_cast<std::size_t>(ic)];
  };
  auto try_join = [&](int ic, int jc) {
    if (c[static_cast<std::size_t>(jc)] == -1 && same_point(q[static_cast<std::size_t>(ic)], q[static_cast<std::size_t>(jc)])) {
      c[static_cast<std::size_t>(ic)] = jc;
      if (res.blocks_to_coalesce[static_cast<std::size_t>(ic)] == 0) {
        res.blocks_to_coalesce[static_cast<std::size_t>(ic)] = blocks_run[static_cast<std::size_t>(ic)];
      }
      return true;
    }
    return false;
  };

  try {
    for (int b = 0; b < nb; ++b) {
      const RandomBlock block = make_block(b);
      q[static_cast<std::size_t>(b)] = q0[static_cast<std::size_t>(b)];
      int chains_run = 0;
      for (int ic = 0; ic <= b; ++ic) {
        const bool was_active = c[static_cast<std::size_t>(ic)] == -1;
        step_chain(ic, block, chains_run);
        if (was_active) {
          for (int jc = 0; jc < ic; ++jc) {
            if (try_join(ic, jc)) break;
          }
        }
      }
      q0[static_cast<std::size_t>(b)] = q[0];
      res.hmc_runs += chains_run;
      if (observer) observer({sample_set, b, true, chains_run, block.fingerprint()});
    }
    res.points[0] = q[0];

    for (int b = 0; b + 1 < nb; ++b) {
      res.certified[static_cast<std::size_t>(b)] =
          same_point(q[static_cast<std::size_t>(b)], q[static_cast<std::size_t>(b + 1)]) ? 1 : 0;
      if (b >= 1) {
        // Chain b retires: nothing may point at it any more.
        const int target_of_b = c[static_cast<std::size_t>(b)];
        int reactivated = -1;
        for (int ic = b + 1; ic < nb; ++ic) {
          if (c[static_cast<std::size_t>(ic)] != b) continue;
          if (target_of_b >= 0) {
            c[static_cast<std::size_t>(ic)] = target_of_b;
          } else if (reactivated < 0) {
            c[static_cast<std::size_t>(ic)] = -1;
            reactivated = ic;
          } else {
            c[static_cast<std::size_t>(ic)] = reactivated;
          }
        }
      }
      const RandomBlock block = make_block(b);
      q[0] = q0[static_cast<std::size_t>(b)];
      int chains_run = 0;
      for (int ic = b + 1; ic < nb; ++ic) {
        const bool was_active = c[static_cast<std::size_t>(ic)] == -1;
        step_chain(ic, block, chains_run);
        if (was_active) {
          if (!try_join(ic, 0)) {
            for (int jc = b + 1; jc < ic; ++jc) {
              if (try_join(ic, jc)) break;
            }
          }
        }
      }
      res.hmc_runs += chains_run;
      res.points[static_cast<std::size_t>(b + 1)] = q[static_cast<std::size_t>(b + 1)];
      if (observer) observer({sample_set, b, false, chains_run, block.fingerprint()});
    }
    res.certified[static_cast<std::size_t>(nb - 1)] =
        same_point(q[static_cast<std::size_t>(nb - 1)], q[0]) ? 1 : 0;
  } catch (const std::exception& e) {
    res.failure = e.what();
    for (auto& pt : res.points) {
      if (pt.size() != d) pt = Vec::Constant(d, std::nan(""));
    }
    std::fill(res.certified.begin(), res.certified.end(), 0);
  }

  for (int ic = 0; ic < nb; ++ic) {
    if (!res.certified[static_cast<std::size_t>(ic)]) res.error = true;
  }
  if (res.error && res.failure.empty()) {
    std::ostringstream msg;
    msg << "sample set " << sample_set << ": chains without coalescence:";
    for (int ic = 0; ic < nb; ++ic) {
      if (!res.certified[static_cast<std::size_t>(ic)]) msg << ' ' << ic;
    }
    res.failure = msg.str();
  }
  for (int ic = 1; ic < nb; ++ic) {
    const int k = res.blocks_to_coalesce[static_cast<std::size_t>(ic)];
    if (k > 0) ws.metrics.record_blocks_to_coalesce(k);
  }
  res.metrics = ws.metrics;
  ws.metrics = merge(metrics_before, res.metrics);
  return res;
}

std::uint64_t UnbiasedResult::certified_count() const {
  std::uint64_t n = 0;
  for (char v : certified) n += v ? 1 : 0;
  return n;
}

namespace {

UnbiasedResult assemble(const UnbiasedConfig& uc, const TargetDistribution& target,
                        const std::vector<SampleSetResult>& sets) {
  const int d = target.dim();
  const int nb = uc.n_blocks;
  UnbiasedResult out;
  out.samples.resize(static_cast<Eigen::Index>(sets.size()) * nb, d);
  out.certified.reserve(sets.size() * static_cast<std::size_t>(nb));
  for (std::size_t s = 0; s < sets.size(); ++s) {
    const auto& set = sets[s];
    for (int b = 0; b < nb; ++b) {
      out.samples.row(static_cast<Eigen::Index>(s) * nb + b) = set.points[static_cast<std::size_t>(b)].transpose();
      out.certified.push_back(set.certified[static_cast<std::size_t>(b)]);
    }
    if (set.error) {
      out.error = true;
      out.failures.push_back(set.failure);
    }
    out.metrics += set.metrics;
  }
  return out;
}

}  // namespace

UnbiasedResult unbiased_perfect_serial(const UnbiasedConfig& uc, const TargetDistribution& target) {
  std::vector<SampleSetResult> sets(static_cast<std::size_t>(uc.n_sets));
  ChainWorkspace ws;
  for (int s = 0; s < uc.n_sets; ++s) {
    sets[static_cast<std::size_t>(s)] = run_sample_set(uc.first_set + static_cast<std::uint64_t>(s), uc, target, ws);
  }
  return assemble(uc, target, sets);
}

UnbiasedResult unbiased_perfect_parallel(const UnbiasedConfig& uc, const TargetDistribution& target, int workers) {
  std::vector<SampleSetResult> sets(static_cast<std::size_t>(uc.n_sets));
  const int threads = workers > 0 ? workers : omp_get_max_threads();
#pragma omp parallel num_threads(threads)
  {
    ChainWorkspace ws;
#pragma omp for schedule(dynamic)
    for (int s = 0; s < uc.n_sets; ++s) {
      sets[static_cast<std::size_t>(s)] = run_sample_set(uc.first_set + static_cast<std::uint64_t>(s), uc, target, ws);
    }
  }
  return assemble(uc, target, sets);
}

UnbiasedResult unbiased_perfect(const UnbiasedConfig& uc, const TargetDistribution& target, int workers) {
  if (workers > 1) return unbiased_perfect_parallel(uc, target, workers);
  return unbiased_perfect_serial(uc, target);
}

UnbiasedString unbiased_string(const Vec& x0, const Vec& y0, int k, int max_blocks, const UnbiasedConfig& uc,
                               const TargetDistribution& target, std::uint64_t pair_index, ChainWorkspace& ws) {
  const int d = target.dim();
  const RowLayout layout{d};
  auto block = [&](int i) {
    return RandomBlock(uc.seed, Stream::coupled, pair_index, static_cast<std::uint64_t>(i), uc.block_length,
                       layout.width(), d);
  };
  // xs[i] = X_i, ys[i] = Y_i.
  std::vector<Vec> xs{x0};
  std::vector<Vec> ys{y0};
  UnbiasedString out;
  const int horizon = std::max(k, max_blocks);
  for (int i = 1; i <= horizon; ++i) {
    const RandomBlock bi = block(i - 1);
    xs.push_back(hmc_round(xs.back(), bi, uc.w, target, uc.sampler, ws));
    if (out.tau < 0 && same_point(xs[static_cast<std::size_t>(i)], ys[static_cast<std::size_t>(i - 1)])) {
      out.tau = i;
    }
    if (out.tau >= 0 && i >= k) break;
    const RandomBlock bnext = block(i);
    ys.push_back(hmc_round(ys.back(), bnext, uc.w, target, uc.sampler, ws));
  }
  if (static_cast<int>(xs.size()) <= k) return out;
  out.points.push_back(xs[static_cast<std::size_t>(k)]);
  out.weights.push_back(1);
  const int last = out.tau >= 0 ? out.tau - 2 : static_cast<int>(ys.size()) - 2;
  for (int j = k; j <= last; ++j) {
    out.points.push_back(ys[static_cast<std::size_t>(j)]);
    out.weights.push_back(-1);
    out.points.push_back(xs[static_cast<std::size_t>(j + 1)]);
    out.weights.push_back(1);
  }
  return out;
}

}  // namespace hmcperfect
