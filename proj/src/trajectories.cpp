#include "hmcperfect/trajectories.hpp"

#include <cmath>
#include <stdexcept>

#include "hmcperfect/special.hpp"

namespace hmcperfect {

double RandomRow::at(int column) const {
  if (block_ == nullptr) return values_[column];
  double v = 0.0;
  block_->fill_row(row_, column, std::span<double>(&v, 1));
  return v;
}

void RandomRow::fill(int first_column, std::span<double> out) const {
  if (block_ == nullptr) {
    for (std::size_t j = 0; j < out.size(); ++j) out[j] = values_[first_column + static_cast<Eigen::Index>(j)];
    return;
  }
  block_->fill_row(row_, first_column, out);
}

void TrajectoryBuffer::reset(int dim, int capacity_per_side) {
  if (dim != dim_ || capacity_per_side > capacity_) {
    dim_ = dim;
    capacity_ = std::max(capacity_per_side, capacity_);
    const int n = 2 * capacity_ + 1;
    q_.resize(dim, n);
    p_.resize(dim, n);
    g_.resize(dim, n);
    has_g_.assign(static_cast<std::size_t>(n), 0);
  } else {
    std::fill(has_g_.begin(), has_g_.end(), 0);
  }
}

void TrajectoryBuffer::start(const Vec& q0, const Vec& p0, int capacity_per_side, const TargetDistribution& target,
                             EvalCounter& counter) {
  reset(static_cast<int>(q0.size()), capacity_per_side);
  q(0) = q0;
  p(0) = p0;
  origin_primed_ = primed_;
  if (primed_) {
    grad(0) = primed_grad_;
    primed_ = false;
  } else {
    Vec g(q0.size());
    evaluate_gradient(target, q0, g, counter);
    grad(0) = g;
  }
  set_has_grad(0, true);
}

std::string to_string(SamplerKind kind) {
  switch (kind) {
    case SamplerKind::raw:
      return "raw";
    case SamplerKind::nuts:
      return "nuts";
    case SamplerKind::nuts4:
      return "nuts4";
    case SamplerKind::fruts:
      return "fruts";
  }
  return "unknown";
}

SamplerKind parse_sampler(const std::string& name) {
  if (name == "raw") return SamplerKind::raw;
  if (name == "nuts") return SamplerKind::nuts;
  if (name == "nuts4") return SamplerKind::nuts4;
  if (name == "fruts") return SamplerKind::fruts;
  throw std::invalid_argument("unknown sampler '" + name + "' (expected raw, nuts, nuts4 or fruts)");
}

bool is_uturn(const Vec& q_span, const Vec& p_start, const Vec& p_end) {
  return q_span.dot(p_start) < 0.0 || q_span.dot(p_end) < 0.0;
}

Vec unit_direction(std::span<const double> uniforms) {
  Vec b(static_cast<Eigen::Index>(uniforms.size()));
  for (std::size_t i = 0; i < uniforms.size(); ++i) b[static_cast<Eigen::Index>(i)] = inverse_normal_cdf(uniforms[i]);
  const double norm = b.norm();
  if (norm == 0.0) {
    b.setZero();
    b[0] = 1.0;
    return b;
  }
  return b / norm;
}

namespace {

bool forward_flop(const RandomRow& row, const RowLayout& layout, int i_flop) {
  return row.at(layout.flop(i_flop)) >= 0.5;
}

int uniform_index(int n, double r) {
  int k = static_cast<int>(std::floor(n * r));
  return k >= n ? n - 1 : k;
}

// Momentum between points t and t + 1 in the half-step storage convention,
// where p(0) holds the integer-time origin momentum.
auto half_momentum(const TrajectoryBuffer& buf, int t) { return t >= 0 ? buf.p(t + 1) : buf.p(t); }

void ensure_grad(TrajectoryBuffer& buf, int i, const TargetDistribution& target, EvalCounter& counter) {
  if (buf.has_grad(i)) return;
  Vec g(buf.q(i).size());
  evaluate_gradient(target, buf.q(i), g, counter);
  buf.grad(i) = g;
  buf.set_has_grad(i, true);
}

// Integer-time momentum at point i from half-step storage.
Vec integer_momentum(const TrajectoryBuffer& buf, int i, double dt, const Vec& g) {
  if (i == 0) return buf.p(0);
  if (i > 0) return buf.p(i) - (0.5 * dt) * g;
  return buf.p(i) + (0.5 * dt) * g;
}

std::uint64_t cached_grads(const TrajectoryBuffer& buf, int lo, int hi) {
  std::uint64_t n = 0;
  for (int i = lo; i <= hi; ++i) n += buf.has_grad(i) ? 1 : 0;
  return n;
}

// Destination and bookkeeping shared by the half-step samplers (raw, NUTS4).
void finish_half_step(TrajectoryResult& res, TrajectoryBuffer& buf, const TargetDistribution& target,
                      const SamplerConfig& cfg, const RandomRow& row, const RowLayout& layout, EvalCounter& counter,
                      std::uint64_t du_before) {
  const int n = res.i_plus - res.i_minus + 1;
  res.point_count = n;
  res.dest_index = res.i_minus + uniform_index(n, row.at(layout.destination()));
  const int i = res.dest_index;
  res.q = buf.q(i);
  if (i == 0) {
    res.p = buf.p(0);
  } else {
    ensure_grad(buf, i, target, counter);
    res.p = integer_momentum(buf, i, cfg.dt, buf.grad(i));
  }
  const std::uint64_t total = counter.du - du_before;
  res.du_used = cached_grads(buf, res.i_minus, res.i_plus) - (buf.origin_primed() ? 1 : 0);
  res.du_discarded = total - res.du_used;
  if (cfg.record_points) {
    Vec g(buf.q(0).size());
    for (int k = res.i_minus; k <= res.i_plus; ++k) {
      res.points_q.emplace_back(buf.q(k));
      if (buf.has_grad(k)) {
        g = buf.grad(k);
      } else {
        target.gradient(buf.q(k), g);
      }
      res.points_p.push_back(integer_momentum(buf, k, cfg.dt, g));
    }
  }
}

}  // namespace

TrajectoryResult raw_trajectory(const Vec& q0, const Vec& p0, const RandomRow& row, const TargetDistribution& target,
                                const SamplerConfig& cfg, TrajectoryBuffer& buf, EvalCounter& counter) {
  const RowLayout layout{static_cast<int>(q0.size())};
  const std::uint64_t du_before = counter.du;
  const int side = cfg.raw_side;
  buf.start(q0, p0, side, target, counter);
  const double dt = cfg.dt;
  Vec velocity(q0.size());
  for (int dir : {1, -1}) {
    Vec q = q0;
    Vec p = p0 - (dir * 0.5 * dt) * Vec(buf.grad(0));
    for (int k = 1; k <= side; ++k) {
      const int i = dir * k;
      if (k > 1) {
        const int prev = i - dir;
        ensure_grad(buf, prev, target, counter);
        p -= (dir * dt) * Vec(buf.grad(prev));
      }
      cfg.kinetic.gradient(p, velocity);
      q += (dir * dt) * velocity;
      require_finite(q, "position");
      buf.q(i) = q;
      buf.p(i) = p;
    }
  }
  TrajectoryResult res;
  res.i_minus = -side;
  res.i_plus = side;
  finish_half_step(res, buf, target, cfg, row, layout, counter, du_before);
  return res;
}

TrajectoryResult nuts4_trajectory(const Vec& q0, const Vec& p0, const RandomRow& row, const TargetDistribution& target,
                                  const SamplerConfig& cfg, TrajectoryBuffer& buf, EvalCounter& counter) {
  const int d = static_cast<int>(q0.size());
  const RowLayout layout{d};
  const std::uint64_t du_before = counter.du;
  const int max_points = 1 << RowLayout::max_flops;
  buf.start(q0, p0, max_points, target, counter);
  const double dt = cfg.dt;
  const bool symmetric = cfg.nuts4_variant == Nuts4Variant::symmetric;

  Vec q_plus = q0;
  Vec q_minus = q0;
  Vec p_plus = p0 - (0.5 * dt) * Vec(buf.grad(0));
  Vec p_minus = p0 + (0.5 * dt) * Vec(buf.grad(0));
  Vec velocity(d);
  Vec span(d);
  int i_plus = 0;
  int i_minus = 0;
  bool uturn = false;
  bool terminated = false;

  auto record = [&](bool u, int i_flop) {
    if (symmetric && i_flop <= 4) {
      uturn = uturn || u;
    } else {
      uturn = u;
    }
  };

  for (int i_flop = 1; i_flop <= RowLayout::max_flops; ++i_flop) {
    const int size = 1 << (i_flop - 1);
    if (forward_flop(row, layout, i_flop)) {
      const int i_new = i_plus + size;
      for (int i = i_plus + 1; i <= i_new; ++i) {
        if (i > 1) {
          ensure_grad(buf, i - 1, target, counter);
          p_plus -= dt * Vec(buf.grad(i - 1));
        }
        cfg.kinetic.gradient(p_plus, velocity);
        q_plus += dt * velocity;
        require_finite(q_plus, "position");
        buf.q(i) = q_plus;
        buf.p(i) = p_plus;
        if ((i - i_plus) % 4 == 0) {
          for (int i_test = i_minus; i_test <= i - 3; i_test += 4) {
            span = q_plus - buf.q(i_test);
            const bool u = is_uturn(span, half_momentum(buf, i_test), p_plus);
            record(u, i_flop);
            if (u) break;
          }
        }
        if (uturn && i_flop > 4) break;
      }
      if (uturn && i_flop > 4) {
        terminated = true;
        break;
      }
      i_plus = i_new;
    } else {
      const int i_new = i_minus - size;
      for (int i = i_minus - 1; i >= i_new; --i) {
        if (i < -1) {
          ensure_grad(buf, i + 1, target, counter);
          p_minus += dt * Vec(buf.grad(i + 1));
        }
        cfg.kinetic.gradient(p_minus, velocity);
        q_minus -= dt * velocity;
        require_finite(q_minus, "position");
        buf.q(i) = q_minus;
        buf.p(i) = p_minus;
        if ((i_minus - i) % 4 == 0) {
          for (int i_test = i_plus; i_test >= i + 3; i_test -= 4) {
            span = buf.q(i_test) - q_minus;
            const bool u = is_uturn(span, p_minus, half_momentum(buf, i_test - 1));
            record(u, i_flop);
            if (u) break;
          }
        }
        if (uturn && i_flop > 4) break;
      }
      if (uturn && i_flop > 4) {
        terminated = true;
        break;
      }
      i_minus = i_new;
    }
    if (symmetric && i_flop == 2) {
      span = buf.q(i_plus) - buf.q(i_minus);
      record(is_uturn(span, half_momentum(buf, i_minus), half_momentum(buf, i_plus - 1)), i_flop);
    }
    if (uturn && i_flop == 4) {
      terminated = true;
      break;
    }
  }

  TrajectoryResult res;
  res.i_minus = i_minus;
  res.i_plus = i_plus;
  res.uturn_terminated = terminated;
  finish_half_step(res, buf, target, cfg, row, layout, counter, du_before);
  return res;
}

TrajectoryResult nuts_trajectory(const Vec& q0, const Vec& p0, const RandomRow& row, const TargetDistribution& target,
                                 const SamplerConfig& cfg, TrajectoryBuffer& buf, EvalCounter& counter) {
  const int d = static_cast<int>(q0.size());
  const RowLayout layout{d};
  const std::uint64_t du_before = counter.du;
  const int max_points = 1 << RowLayout::max_flops;
  buf.start(q0, p0, max_points, target, counter);

  int i_plus = 0;
  int i_minus = 0;
  bool terminated = false;
  Vec q(d), p(d), g(d), span(d);
  for (int i_flop = 1; i_flop <= RowLayout::max_flops && !terminated; ++i_flop) {
    const int size = 1 << (i_flop - 1);
    const int dir = forward_flop(row, layout, i_flop) ? 1 : -1;
    const int start = dir > 0 ? i_plus : i_minus;
    q = buf.q(start);
    p = buf.p(start);
    g = buf.grad(start);
    bool valid = true;
    for (int k = 1; k <= size && valid; ++k) {
      const int idx = start + dir * k;
      verlet_step(q, p, g, target, cfg.kinetic, cfg.dt, dir, counter);
      require_finite(q, "position");
      buf.q(idx) = q;
      buf.p(idx) = p;
      buf.grad(idx) = g;
      for (int level = 1; k % (1 << level) == 0; ++level) {
        const int other = idx - dir * ((1 << level) - 1);
        const int lo = std::min(other, idx);
        const int hi = std::max(other, idx);
        span = buf.q(hi) - buf.q(lo);
        if (is_uturn(span, buf.p(lo), buf.p(hi))) {
          valid = false;
          break;
        }
      }
    }
    if (!valid) {
      terminated = true;
      break;
    }
    for (int k = 1; k <= size; ++k) buf.set_has_grad(start + dir * k, true);
    if (dir > 0) {
      i_plus += size;
    } else {
      i_minus -= size;
    }
    span = buf.q(i_plus) - buf.q(i_minus);
    if (is_uturn(span, buf.p(i_minus), buf.p(i_plus))) terminated = true;
  }

  TrajectoryResult res;
  res.i_minus = i_minus;
  res.i_plus = i_plus;
  res.uturn_terminated = terminated;
  res.point_count = i_plus - i_minus + 1;
  res.dest_index = i_minus + uniform_index(res.point_count, row.at(layout.destination()));
  res.q = buf.q(res.dest_index);
  res.p = buf.p(res.dest_index);
  const std::uint64_t total = counter.du - du_before;
  res.du_used = static_cast<std::uint64_t>(res.point_count) - (buf.origin_primed() ? 1 : 0);
  res.du_discarded = total - res.du_used;
  if (cfg.record_points) {
    for (int k = i_minus; k <= i_plus; ++k) {
      res.points_q.emplace_back(buf.q(k));
      res.points_p.emplace_back(buf.p(k));
    }
  }
  return res;
}

namespace {

enum class FrutsCase { uniform, window, limited };

bool side_fits(const FrutsSide& s, int limit) { return s.terminated && s.points <= limit; }

FrutsCase fruts_case(const FrutsSide& minus, const FrutsSide& plus, int n) {
  const bool fm = side_fits(minus, n);
  const bool fp = side_fits(plus, n);
  if (fm && fp) return FrutsCase::uniform;
  if (!fm && !fp) return FrutsCase::window;
  const FrutsSide& short_side = fm ? minus : plus;
  const FrutsSide& long_side = fm ? plus : minus;
  return side_fits(long_side, 2 * n - short_side.points) ? FrutsCase::uniform : FrutsCase::limited;
}

int sign_of(double x) { return (x > 0.0) - (x < 0.0); }

}  // namespace

std::vector<double> fruts_selection_probabilities(const FrutsSide& minus, const FrutsSide& plus, int n_limit) {
  const int total = minus.points + plus.points + 1;
  std::vector<double> probs(static_cast<std::size_t>(total), 0.0);
  const int origin = minus.points;
  switch (fruts_case(minus, plus, n_limit)) {
    case FrutsCase::uniform:
      for (auto& v : probs) v = 1.0 / total;
      break;
    case FrutsCase::window:
      for (int k = -n_limit; k <= n_limit; ++k) probs[static_cast<std::size_t>(origin + k)] = 1.0 / (2 * n_limit + 1);
      break;
    case FrutsCase::limited: {
      const bool minus_short = side_fits(minus, n_limit);
      const int lo = minus_short ? -minus.points : -n_limit;
      const int hi = minus_short ? n_limit : plus.points;
      const double each = 1.0 / (2 * n_limit + 1);
      for (int k = lo; k <= hi; ++k) {
        if (k != 0) probs[static_cast<std::size_t>(origin + k)] = each;
      }
      probs[static_cast<std::size_t>(origin)] = 1.0 - (hi - lo) * each;
      break;
    }
  }
  return probs;
}

int fruts_limited_select(const std::vector<double>& probs, int offset, bool ascending, double r) {
  const int n = static_cast<int>(probs.size());
  double cumulative = 0.0;
  int last = -1;
  for (int j = 0; j < n; ++j) {
    const int k = ascending ? j : n - 1 - j;
    if (probs[static_cast<std::size_t>(k)] <= 0.0) continue;
    cumulative += probs[static_cast<std::size_t>(k)];
    last = k;
    if (r < cumulative) return k - offset;
  }
  return last - offset;
}

TrajectoryResult fruts_trajectory(const Vec& q0, const Vec& p0, const RandomRow& row, const TargetDistribution& target,
                                  const SamplerConfig& cfg, TrajectoryBuffer& buf, EvalCounter& counter) {
  const int d = static_cast<int>(q0.size());
  const RowLayout layout{d};
  const std::uint64_t du_before = counter.du;
  const int n_limit = cfg.fruts_limit;
  const double dt = cfg.dt;
  buf.start(q0, p0, 2 * n_limit + 2, target, counter);

  std::vector<double> dir_uniforms(static_cast<std::size_t>(d));
  row.fill(layout.direction(), dir_uniforms);
  const Vec b = unit_direction(dir_uniforms);

  const Vec g0 = buf.grad(0);
  const Vec p0_plus = p0 - (0.5 * dt) * g0;
  const Vec p0_minus = p0 + (0.5 * dt) * g0;
  const int s0 = sign_of(b.dot(p0));
  const int s_plus = sign_of(b.dot(p0_plus));
  const int s_minus = sign_of(b.dot(p0_minus));

  struct Side {
    int dir;
    int sign;
    Vec q;
    Vec p;
    int steps = 0;
    FrutsSide state{};
  };
  Side plus{1, s_plus, q0, p0_plus};
  Side minus{-1, s_minus, q0, p0_minus};
  plus.state.terminated = !(s_plus == s_minus || s_plus == s0);
  minus.state.terminated = !(s_minus == s_plus || s_minus == s0);

  Vec velocity(d), g(d), retarded(d);
  auto advance = [&](Side& side, int max_steps) {
    while (!side.state.terminated && side.steps < max_steps) {
      cfg.kinetic.gradient(side.p, velocity);
      side.q += (side.dir * dt) * velocity;
      evaluate_gradient(target, side.q, g, counter);
      side.p -= (side.dir * dt) * g;
      require_finite(side.p, "momentum");
      ++side.steps;
      retarded = side.p + (side.dir * 0.5 * dt) * g;
      const bool keeps = sign_of(b.dot(side.p)) == side.sign;
      if (keeps || sign_of(b.dot(retarded)) == side.sign) {
        ++side.state.points;
        const int i = side.dir * side.state.points;
        buf.q(i) = side.q;
        buf.p(i) = retarded;
        buf.grad(i) = g;
        buf.set_has_grad(i, true);
      }
      if (!keeps) side.state.terminated = true;
    }
  };

  advance(plus, n_limit + 1);
  advance(minus, n_limit + 1);
  const bool fits_plus = side_fits(plus.state, n_limit);
  const bool fits_minus = side_fits(minus.state, n_limit);
  if (fits_plus != fits_minus) {
    Side& short_side = fits_plus ? plus : minus;
    Side& long_side = fits_plus ? minus : plus;
    advance(long_side, 2 * n_limit - short_side.state.points + 1);
  }

  const FrutsCase which = fruts_case(minus.state, plus.state, n_limit);
  const std::vector<double> probs = fruts_selection_probabilities(minus.state, plus.state, n_limit);
  const int offset = minus.state.points;
  int lo = -offset;
  int hi = plus.state.points;
  while (probs[static_cast<std::size_t>(lo + offset)] <= 0.0) ++lo;
  while (probs[static_cast<std::size_t>(hi + offset)] <= 0.0) --hi;
  const bool ascending = b.dot(buf.q(lo)) <= b.dot(buf.q(hi));
  const double r = row.at(layout.destination());

  TrajectoryResult res;
  res.i_minus = lo;
  res.i_plus = hi;
  res.point_count = hi - lo + 1;
  res.uturn_terminated = plus.state.terminated && minus.state.terminated;
  if (which == FrutsCase::limited) {
    res.dest_index = fruts_limited_select(probs, offset, ascending, r);
  } else {
    const int k = uniform_index(res.point_count, r);
    res.dest_index = ascending ? lo + k : hi - k;
  }
  res.q = buf.q(res.dest_index);
  res.p = buf.p(res.dest_index);
  const std::uint64_t total = counter.du - du_before;
  res.du_used = static_cast<std::uint64_t>(res.point_count) - (buf.origin_primed() ? 1 : 0);
  res.du_discarded = total - res.du_used;
  if (cfg.record_points) {
    for (int k = -minus.state.points; k <= plus.state.points; ++k) {
      res.points_q.emplace_back(buf.q(k));
      res.points_p.emplace_back(buf.p(k));
    }
  }
  return res;
}

TrajectoryResult run_trajectory(const Vec& q0, const Vec& p0, const RandomRow& row, const TargetDistribution& target,
                                const SamplerConfig& cfg, TrajectoryBuffer& buf, EvalCounter& counter) {
  switch (cfg.kind) {
    case SamplerKind::raw:
      return raw_trajectory(q0, p0, row, target, cfg, buf, counter);
    case SamplerKind::nuts:
      return nuts_trajectory(q0, p0, row, target, cfg, buf, counter);
    case SamplerKind::nuts4:
      return nuts4_trajectory(q0, p0, row, target, cfg, buf, counter);
    case SamplerKind::fruts:
      return fruts_trajectory(q0, p0, row, target, cfg, buf, counter);
  }
  throw std::invalid_argument("unknown sampler kind");
}

}  // namespace hmcperfect
