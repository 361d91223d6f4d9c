#include <doctest.h>

#include "hmcperfect/metrics.hpp"

using namespace hmcperfect;

namespace {

EvalMetrics sample(std::uint64_t k) {
  EvalMetrics m;
  m.du_evals_used = 10 * k;
  m.du_evals_discarded = 3 * k;
  m.u_evals = k + 1;
  m.trajectories = k;
  m.points_total = 16 * k;
  m.mh_accepts = k;
  m.mh_rejects = 1;
  m.rounding_accepts = 2;
  m.block_runs = 2 * k;
  m.record_blocks_to_coalesce(1, k);
  m.record_blocks_to_coalesce(static_cast<int>(k % 3) + 2);
  return m;
}

}  // namespace

TEST_CASE("merge with zero is the identity") {
  const EvalMetrics x = sample(4);
  CHECK(merge(x, EvalMetrics{}) == x);
  CHECK(merge(EvalMetrics{}, x) == x);
}

TEST_CASE("merge is commutative and associative") {
  const EvalMetrics a = sample(1), b = sample(5), c = sample(7);
  CHECK(merge(a, b) == merge(b, a));
  CHECK(merge(merge(a, b), c) == merge(a, merge(b, c)));
  const EvalMetrics ab = merge(a, b);
  CHECK(ab.du_evals_used == a.du_evals_used + b.du_evals_used);
  CHECK(ab.blocks_to_coalesce.at(1) == 6);
}

TEST_CASE("du per perfect point counts every evaluation over certified points") {
  EvalMetrics m;
  m.du_evals_used = 700;
  m.du_evals_discarded = 300;
  m.trajectories = 50;
  m.points_total = 900;
  const auto r = report(m, 4);
  CHECK(r["du_per_perfect_point"].get<double>() == doctest::Approx(250.0));
  CHECK(r["mean_points_per_trajectory"].get<double>() == doctest::Approx(18.0));
  CHECK(r["mean_du_used_per_trajectory"].get<double>() == doctest::Approx(14.0));
  CHECK(r["mean_du_discarded_per_trajectory"].get<double>() == doctest::Approx(6.0));
}

TEST_CASE("no certified points gives an error field and a null ratio") {
  const auto r = report(sample(2), 0);
  CHECK(r["du_per_perfect_point"].is_null());
  CHECK(r.contains("error"));
}

TEST_CASE("max blocks to coalesce reads the histogram") {
  EvalMetrics m;
  CHECK(m.max_blocks_to_coalesce() == 0);
  m.record_blocks_to_coalesce(1, 30);
  m.record_blocks_to_coalesce(4);
  CHECK(m.max_blocks_to_coalesce() == 4);
  CHECK(report(m, 1)["max_blocks_to_coalesce"] == 4);
  CHECK(report(m, 1)["mean_blocks_to_coalesce"].get<double>() == doctest::Approx(34.0 / 31.0));
}

TEST_CASE("json counters round-trip the fields") {
  const EvalMetrics m = sample(3);
  const auto j = to_json(m);
  CHECK(j["du_evals_total"] == m.du_evals_total());
  CHECK(j["blocks_to_coalesce"]["1"] == 3);
  CHECK(j["block_runs"] == 6);
}
