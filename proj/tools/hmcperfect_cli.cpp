// hmcperfect: run, calibrate and histogram perfect HMC experiments.
//
//   hmcperfect run --config configs/table1/normal_d1_nuts4.cfg --workers 8 --out out/n1
//   hmcperfect run --grid configs/table1.grid --out out/table1
//   hmcperfect calibrate --config cfg --set n_S=20
//   hmcperfect hist --config cfg --out out/lasso --var T --var S
//
// The dataset directory can be overridden with HMCPERFECT_DATA_DIR.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "hmcperfect/experiment.hpp"

namespace {

using hmcperfect::RunConfig;

struct CommonOptions {
  std::string config;
  std::string grid;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  int workers = 1;
  std::vector<std::string> overrides;
};

void add_common(CLI::App* cmd, CommonOptions& opts, bool allow_grid) {
  cmd->add_option("--config", opts.config, "Config file of key = value lines");
  if (allow_grid) cmd->add_option("--grid", opts.grid, "File listing config files, one per line");
  cmd->add_option("--seed", opts.seed, "Master seed");
  cmd->add_option("--out", opts.out, "Output directory");
  cmd->add_option("--workers", opts.workers, "Worker threads")->check(CLI::PositiveNumber);
  cmd->add_option("--set", opts.overrides, "Config override key=value (repeatable)");
}

RunConfig resolve(const std::string& path, const CommonOptions& opts) {
  RunConfig cfg = path.empty() ? RunConfig{} : hmcperfect::load_config(path);
  for (const auto& kv : opts.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw hmcperfect::ConfigError("override '" + kv + "': expected key=value");
    hmcperfect::apply_setting(cfg, kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (opts.seed) cfg.seed = *opts.seed;
  if (opts.out) cfg.out = *opts.out;
  return cfg;
}

std::vector<RunConfig> resolve_all(const CommonOptions& opts) {
  if (opts.grid.empty()) return {resolve(opts.config, opts)};
  std::vector<RunConfig> out;
  const std::string root = opts.out.value_or("out");
  for (const auto& path : hmcperfect::load_grid(opts.grid)) {
    CommonOptions per = opts;
    per.out = (std::filesystem::path(root) / std::filesystem::path(path).stem()).string();
    out.push_back(resolve(path, per));
  }
  return out;
}

int cmd_run(const CommonOptions& opts) {
  int status = 0;
  for (const auto& cfg : resolve_all(opts)) {
    const auto outcome = hmcperfect::run_experiment(cfg, opts.workers);
    const auto& m = outcome.report.value("metrics", nlohmann::json::object());
    std::printf("%s: certified=%llu du/point=%s max_blocks=%s exit=%d\n", cfg.out.c_str(),
                static_cast<unsigned long long>(outcome.result.certified_count()),
                m.value("du_per_perfect_point", nlohmann::json()).dump().c_str(),
                m.value("max_blocks_to_coalesce", nlohmann::json()).dump().c_str(), outcome.exit_code);
    if (outcome.exit_code != 0) status = outcome.exit_code;
  }
  return status;
}

int cmd_calibrate(const CommonOptions& opts) {
  int status = 0;
  for (const auto& cfg : resolve_all(opts)) {
    const auto res = hmcperfect::run_calibration(cfg, opts.workers);
    if (res.failed) {
      std::printf("%s: calibration failed: %s\n", cfg.out.c_str(), res.failure.c_str());
      status = 2;
    } else {
      std::printf("%s: n_T=%d n_all=%d\n", cfg.out.c_str(), res.n_T, res.n_all);
    }
  }
  return status;
}

int cmd_hist(const CommonOptions& opts, std::vector<std::string> vars, std::optional<int> bins) {
  const RunConfig cfg = resolve(opts.config, opts);
  if (vars.empty()) vars = cfg.hist;
  hmcperfect::run_histograms(cfg, vars, bins.value_or(cfg.hist_bins));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Perfect simulation with Hamiltonian Monte Carlo"};
  app.require_subcommand(1);

  CommonOptions run_opts;
  auto* run = app.add_subcommand("run", "Run the chain x block sampler");
  add_common(run, run_opts, true);

  CommonOptions cal_opts;
  auto* cal = app.add_subcommand("calibrate", "Choose the block length by exploratory CFTP");
  add_common(cal, cal_opts, true);

  CommonOptions hist_opts;
  std::vector<std::string> hist_vars;
  std::optional<int> hist_bins;
  auto* hist = app.add_subcommand("hist", "Histogram certified samples from a previous run");
  add_common(hist, hist_opts, false);
  hist->add_option("--var", hist_vars, "Variable: T, S, a coordinate name or q<k>");
  hist->add_option("--bins", hist_bins, "Number of equal-width bins")->check(CLI::PositiveNumber);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) return cmd_run(run_opts);
    if (*cal) return cmd_calibrate(cal_opts);
    return cmd_hist(hist_opts, hist_vars, hist_bins);
  } catch (const hmcperfect::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 64;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
