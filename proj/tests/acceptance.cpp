// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fail.
//
//   acceptance [--workers N] [--seed S] [--out DIR]

#include <chrono>
#include <deque>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "gradcheck.hpp"
#include "hmcperfect/experiment.hpp"
#include "stats.hpp"
#include "trajectory_checks.hpp"

using namespace hmcperfect;
namespace fs = std::filesystem;

namespace {

struct Run {
  std::string name;
  RunConfig cfg;
  RunOutcome outcome;
  double seconds = 0.0;
  Mat model;

  const nlohmann::json& metrics() const {
    static const nlohmann::json empty = nlohmann::json::object();
    return outcome.report.contains("metrics") ? outcome.report["metrics"] : empty;
  }
  double du_per_point() const {
    const auto it = metrics().find("du_per_perfect_point");
    return it == metrics().end() || it->is_null() ? NAN : it->get<double>();
  }
  int max_blocks() const { return metrics().value("max_blocks_to_coalesce", 0); }
  bool error() const { return outcome.report.value("error", true); }
};

class Acceptance {
 public:
  Acceptance(int workers, std::uint64_t seed, fs::path out) : workers_(workers), seed_(seed), out_(std::move(out)) {}

  Run& run(const std::string& name, RunConfig cfg) {
    cfg.seed = seed_;
    cfg.out = (out_ / name).string();
    Run r{name, cfg, {}, 0.0, {}};
    const auto t0 = std::chrono::steady_clock::now();
    r.outcome = run_experiment(cfg, workers_);
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (fs::exists(fs::path(cfg.out) / "samples.csv")) r.model = read_samples((fs::path(cfg.out) / "samples.csv").string());
    const int n_T = r.outcome.report.at("config").at("n_T").get<int>();
    std::printf("  run %-22s n_T=%-3d du/point=%-8.1f max_blocks=%d points/traj=%.2f used/traj=%.2f %s %.1fs\n",
                name.c_str(), n_T, r.du_per_point(), r.max_blocks(),
                r.metrics().value("mean_points_per_trajectory", 0.0), r.metrics().value("mean_du_used_per_trajectory", 0.0),
                r.error() ? "ERROR" : "ok", r.seconds);
    std::fflush(stdout);
    runs_.push_back(std::move(r));
    return runs_.back();
  }

  void verdict(int id, bool pass, const std::string& detail) {
    std::printf("%s %2d: %s\n", pass ? "PASS" : "FAIL", id, detail.c_str());
    std::fflush(stdout);
    failures_ += pass ? 0 : 1;
  }

  const std::deque<Run>& runs() const { return runs_; }
  int failures() const { return failures_; }
  int workers() const { return workers_; }
  const fs::path& out() const { return out_; }

 private:
  int workers_;
  std::uint64_t seed_;
  fs::path out_;
  std::deque<Run> runs_;
  int failures_ = 0;
};

bool within(double value, double expected, double rel) { return std::abs(value - expected) <= rel * expected; }

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c);
  return buf;
}

RunConfig normal(int d, const std::string& sampler, int n_sets) {
  RunConfig c;
  c.target = "standard_normal";
  c.d = d;
  c.sampler = sampler;
  c.n_sets = n_sets;
  return c;
}

std::uint64_t file_hash(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::uint64_t h = 1469598103934665603ULL;
  char ch;
  while (in.get(ch)) {
    h ^= static_cast<unsigned char>(ch);
    h *= 1099511628211ULL;
  }
  return h;
}

double column_ks(const Mat& m, int col) {
  std::vector<double> xs(static_cast<std::size_t>(m.rows()));
  for (Eigen::Index i = 0; i < m.rows(); ++i) xs[static_cast<std::size_t>(i)] = m(i, col);
  return teststats::ks_statistic(xs, teststats::normal_cdf);
}

std::vector<TargetPtr> all_targets(const std::shared_ptr<const RegressionData>& data) {
  return {make_standard_normal(1),
          make_standard_normal(10),
          make_standard_normal(100),
          make_correlated_normal({2, 0.6}),
          make_correlated_normal({2, 0.95}),
          make_correlated_normal({10, 0.6}),
          make_correlated_normal({100, 0.1}),
          make_t_distribution(1, 4.0),
          make_t_distribution(10, 4.0, 1.5),
          make_t_distribution(100, 4.0, 1.25),
          scale_transform(make_t_distribution(10, 4.0, 1.5)),
          make_normal_mixture({1, 4.0}),
          make_normal_mixture({10, 6.0}),
          std::make_shared<LassoModel>(data, 0.237),
          make_lasso(data, 0.0),
          make_lasso(data, 5.0)};
}

bool away_from_kinks(const TargetDistribution& t, const Vec& q) {
  if (t.dim() != 12 || t.label().find("lasso") == std::string::npos) return true;
  const Vec theta = t.to_model(q);
  for (int j = 0; j < 10; ++j) {
    if (std::abs(theta[j]) < 1e-3) return false;
  }
  return true;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  int workers = 8;
  std::uint64_t seed = 20240601;
  std::string out = (fs::temp_directory_path() / "hmcperfect_acceptance").string();
  app.add_option("--workers", workers)->check(CLI::PositiveNumber);
  app.add_option("--seed", seed);
  app.add_option("--out", out);
  CLI11_PARSE(app, argc, argv);

  fs::remove_all(out);
  fs::create_directories(out);
  Acceptance acc(workers, seed, out);
  std::printf("acceptance: workers=%d seed=%llu out=%s\n", workers, static_cast<unsigned long long>(seed), out.c_str());

  // 1
  const Run& n1 = acc.run("normal_d1_nuts4", normal(1, "nuts4", 100));
  acc.verdict(1, within(n1.du_per_point(), 388, 0.20) && n1.seconds < 60.0 && !n1.error(),
              fmt("standard normal d=1 NUTS4: %.1f DU/point (388 +-20%%), %.1f s (< 60 s)", n1.du_per_point(), n1.seconds));

  // 2
  const Run& n10 = acc.run("normal_d10_nuts4", normal(10, "nuts4", 100));
  const Run& n10f = acc.run("normal_d10_fruts", normal(10, "fruts", 100));
  acc.verdict(2, within(n10.du_per_point(), 552, 0.20) && within(n10f.du_per_point(), 1114, 0.25),
              fmt("standard normal d=10: NUTS4 %.1f (552 +-20%%), FRUTS %.1f (1114 +-25%%)", n10.du_per_point(),
                  n10f.du_per_point()));

  // 3
  const Run& n100 = acc.run("normal_d100_nuts4", normal(100, "nuts4", 50));
  const double used = n100.metrics().value("mean_du_used_per_trajectory", 0.0);
  acc.verdict(3, within(n100.du_per_point(), 878, 0.25) && within(used, 14.0, 0.20),
              fmt("standard normal d=100 NUTS4: %.1f DU/point (878 +-25%%), %.2f used DU/trajectory (14.0 +-20%%)",
                  n100.du_per_point(), used));

  // 4
  RunConfig t1;
  t1.target = "t";
  t1.d = 1;
  t1.nu = 4.0;
  t1.sampler = "fruts";
  t1.n_sets = 100;
  const Run& t1f = acc.run("t_d1_fruts", t1);
  acc.verdict(4, within(t1f.du_per_point(), 575, 0.25),
              fmt("t d=1 nu=4 FRUTS: %.1f DU/point (575 +-25%%)", t1f.du_per_point()));

  // 5
  RunConfig mix;
  mix.target = "mixture";
  mix.d = 1;
  mix.mu = 4.0;
  mix.n_sets = 200;
  mix.sampler = "nuts4";
  const Run& mixn = acc.run("mixture_mu4_nuts4", mix);
  mix.sampler = "fruts";
  const Run& mixf = acc.run("mixture_mu4_fruts", mix);
  acc.verdict(5,
              mixf.du_per_point() < mixn.du_per_point() && within(mixn.du_per_point(), 1194, 0.30) &&
                  within(mixf.du_per_point(), 769, 0.30),
              fmt("mixture mu=4: FRUTS %.1f < NUTS4 %.1f; NUTS4 1194 +-30%%, FRUTS 769 +-30%%", mixf.du_per_point(),
                  mixn.du_per_point()));

  // 7, reported after 6 so its runs count there
  RunConfig lasso;
  lasso.target = "lasso";
  lasso.lambda = 0.237;
  lasso.n_sets = 100;
  const Run& l237 = acc.run("lasso_0.237_nuts4", lasso);
  lasso.lambda = 0.0;
  lasso.n_sets = 715;
  lasso.hist = {"T"};
  lasso.hist_bins = 60;
  const Run& l0 = acc.run("lasso_0_nuts4", lasso);
  double t_min = NAN, t_max = NAN;
  if (l0.outcome.report.contains("histograms")) {
    t_min = l0.outcome.report["histograms"]["T"]["min"].get<double>();
    t_max = l0.outcome.report["histograms"]["T"]["max"].get<double>();
  }
  const auto l0_points = static_cast<double>(l0.model.rows());
  const bool pass7 = within(l237.du_per_point(), 708, 0.25) && t_min >= 80 && t_min <= 85 && t_max >= 390 &&
                     t_max <= 415 && l0_points >= 1e4;
  const std::string detail7 =
      fmt("Lasso lambda=0.237: %.1f DU/point (708 +-25%%); lambda=0 T range [%.1f, ", l237.du_per_point(), t_min) +
      fmt("%.1f] on %.0f points (min in [80, 85], max in [390, 415], >= 10^4)", t_max, l0_points);

  // 12 runs
  const Run& ks1 = acc.run("normal_d1_nuts4_ks", normal(1, "nuts4", 715));
  const Run& ks10 = acc.run("normal_d10_nuts4_ks", normal(10, "nuts4", 715));

  // 6
  int worst = 0;
  bool any_error = false;
  for (const auto& r : acc.runs()) {
    worst = std::max(worst, r.max_blocks());
    any_error = any_error || r.error();
  }
  acc.verdict(6, worst <= 10 && !any_error,
              fmt("max blocks to coalesce over %.0f runs: %.0f (<= 10); error flag ",
                  static_cast<double>(acc.runs().size()), worst) +
                  (any_error ? "set" : "clear"));
  acc.verdict(7, pass7, detail7);

  // 8
  const double dt1 = time_step({0.05, 2.0, 2.0, 1});
  double lo = INFINITY, hi = -INFINITY;
  for (const auto& r : acc.runs()) {
    if (r.cfg.target != "standard_normal") continue;
    const double len = r.metrics().value("mean_points_per_trajectory", 0.0);
    lo = std::min(lo, len);
    hi = std::max(hi, len);
  }
  acc.verdict(8, std::abs(dt1 - 0.05 * M_PI) <= 1e-12 * 0.05 * M_PI && lo >= 16 && hi <= 26,
              fmt("dt(d=1) - 0.05 pi = %.3g; standard-normal mean trajectory length in [%.2f, %.2f] (within [16, 26])",
                  dt1 - 0.05 * M_PI, lo, hi));

  const auto data = std::make_shared<const RegressionData>(load_diabetes());
  const auto targets = all_targets(data);

  // 9
  {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> nd;
    double worst_rev = 0.0;
    int checked = 0;
    for (const auto& t : targets) {
      // Unscaled Lasso coordinates are never integrated.
      if (dynamic_cast<const LassoModel*>(t.get()) != nullptr) continue;
      ++checked;
      const double dt = time_step({0.05, t->alpha(), 2.0, t->dim()});
      for (int trial = 0; trial < 10; ++trial) {
        Vec q0 = t->mode(), p0(t->dim());
        for (auto& x : q0) x += nd(rng);
        for (auto& x : p0) x = nd(rng);
        Vec q = q0, p = p0, g = t->gradient(q0);
        EvalCounter c;
        for (int k = 0; k < 100; ++k) verlet_step(q, p, g, *t, KineticEnergy{}, dt, +1, c);
        p = -p;
        for (int k = 0; k < 100; ++k) verlet_step(q, p, g, *t, KineticEnergy{}, dt, +1, c);
        p = -p;
        worst_rev = std::max(worst_rev, (q - q0).lpNorm<Eigen::Infinity>() / std::max(1.0, q0.lpNorm<Eigen::Infinity>()));
        worst_rev = std::max(worst_rev, (p - p0).lpNorm<Eigen::Infinity>() / std::max(1.0, p0.lpNorm<Eigen::Infinity>()));
      }
    }
    acc.verdict(9, worst_rev <= 1e-10,
                fmt("leapfrog 100-step round trips on %.0f targets: worst relative error %.3g (<= 1e-10)",
                    static_cast<double>(checked), worst_rev));
  }

  // 10
  {
    const std::vector<TargetPtr> two_d = {make_standard_normal(2), make_correlated_normal({2, 0.6}),
                                          make_correlated_normal({2, 0.95}), make_t_distribution(2, 4.0),
                                          make_normal_mixture({2, 4.0})};
    double worst_set = 0.0;
    int grown = 0;
    for (const auto& t : two_d) {
      const double dt = time_step({0.05, 2.0, 2.0, 2});
      worst_set = std::max(worst_set, trajcheck::nuts4_invariance(*t, dt, 30, static_cast<unsigned>(seed), &grown));
      worst_set = std::max(worst_set, trajcheck::nuts4_invariance(*t, 0.25 * dt, 30, static_cast<unsigned>(seed) + 1, &grown));
      worst_set = std::max(worst_set, trajcheck::fruts_invariance(*t, dt, 30, static_cast<unsigned>(seed) + 2));
    }
    acc.verdict(10, worst_set <= 1e-9 && grown > 0,
                fmt("C' = C for NUTS4 and FRUTS on 5 two-dimensional targets: worst mismatch %.3g (<= 1e-9); "
                    "%.0f NUTS4 trajectories past 16 points",
                    worst_set, grown));
  }

  // 11
  {
    double worst_ds = 0.0;
    for (int n = 1; n <= 16; ++n) {
      for (int m = 1; m <= 4 * n + 8; ++m) {
        Mat t = Mat::Zero(m, m);
        for (int i = 0; i < m; ++i) {
          const auto probs = fruts_selection_probabilities({i, true}, {m - 1 - i, true}, n);
          for (int k = 0; k < m; ++k) t(i, k) = probs[static_cast<std::size_t>(k)];
        }
        worst_ds = std::max(worst_ds, (t.rowwise().sum() - Vec::Ones(m)).lpNorm<Eigen::Infinity>());
        worst_ds = std::max(worst_ds, (t.colwise().sum().transpose() - Vec::Ones(m)).lpNorm<Eigen::Infinity>());
      }
    }
    acc.verdict(11, worst_ds <= 1e-12,
                fmt("FRUTS limited selection, N = 1..16: worst row/column sum error %.3g (<= 1e-12)", worst_ds));
  }

  // 12
  {
    const auto crit1 = teststats::ks_critical_001(static_cast<std::size_t>(ks1.model.rows()));
    const double d1 = ks1.model.rows() ? column_ks(ks1.model, 0) : INFINITY;
    double d10 = ks10.model.rows() ? 0.0 : INFINITY;
    for (int c = 0; c < ks10.model.cols(); ++c) d10 = std::max(d10, column_ks(ks10.model, c));
    const auto crit10 = teststats::ks_critical_001(static_cast<std::size_t>(ks10.model.rows()));
    bool mix_ok = true;
    std::string mix_detail;
    for (const Run* r : {&mixn, &mixf}) {
      const double n = static_cast<double>(r->model.rows());
      double below = 0.0;
      for (Eigen::Index i = 0; i < r->model.rows(); ++i) below += r->model(i, 0) < 2.0;
      const double frac = n > 0 ? below / n : NAN;
      mix_ok = mix_ok && n > 0 && std::abs(frac - 0.5) <= 3.0 * std::sqrt(0.25 / n);
      mix_detail += fmt(" %.4f", frac);
    }
    const bool big = ks1.model.rows() >= 10000 && ks10.model.rows() >= 10000;
    acc.verdict(12, d1 < crit1 && d10 < crit10 && mix_ok && big,
                fmt("KS d=1: %.4f (< %.4f); ", d1, crit1) + fmt("max KS d=10: %.4f (< %.4f) on %.0f points; ", d10, crit10,
                                                                  static_cast<double>(ks10.model.rows())) +
                    "mixture mass below mu/2:" + mix_detail + " (0.5 +- 3 sigma)");
  }

  // 13
  {
    RunConfig det = t1;
    det.n_T = t1f.outcome.report["config"]["n_T"].get<int>();
    det.seed = seed;
    det.out = (acc.out() / "det_serial").string();
    const auto serial = run_experiment(det, 1);
    det.out = (acc.out() / "det_parallel").string();
    const auto parallel = run_experiment(det, 8);
    const auto hs = file_hash(acc.out() / "det_serial" / "samples.csv");
    const auto hp = file_hash(acc.out() / "det_parallel" / "samples.csv");
    char detail[200];
    std::snprintf(detail, sizeof detail, "samples.csv hash serial %016llx, 8 workers %016llx",
                  static_cast<unsigned long long>(hs), static_cast<unsigned long long>(hp));
    acc.verdict(13, serial.exit_code == 0 && parallel.exit_code == 0 && hs == hp, detail);
  }

  // 14
  {
    double worst_g = 0.0;
    for (const auto& t : targets) {
      worst_g = std::max(worst_g, gradcheck::max_relative_error(*t, 100, 1.0, static_cast<unsigned>(seed),
                                                               [&](const Vec& q) { return away_from_kinks(*t, q); }));
    }
    acc.verdict(14, worst_g <= 1e-5,
                fmt("DU vs finite differences on %.0f targets x 100 probes: worst relative error %.3g (<= 1e-5)",
                    static_cast<double>(targets.size()), worst_g));
  }

  std::printf("acceptance: %d of 14 criteria failed\n", acc.failures());
  return acc.failures() == 0 ? 0 : 1;
}
