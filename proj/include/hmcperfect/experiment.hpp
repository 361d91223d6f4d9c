#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "hmcperfect/coupling.hpp"
#include "hmcperfect/lasso.hpp"

namespace hmcperfect {

/// Thrown for invalid configuration; the message names the field.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct RunConfig {
  std::string target = "standard_normal";
  int d = 1;
  double rho = 0.0;
  double nu = 4.0;
  double mu = 4.0;
  double lambda = 0.0;
  std::string dataset;
  std::string sampler = "nuts4";
  double h = 0.05;
  double alpha = 2.0;
  double beta = 2.0;
  double w = 0.01;
  int n_sets = 100;
  int n_blocks = 14;
  /// 0 means calibrate before running.
  int n_T = 0;
  std::uint64_t seed = 1;
  std::string out = "out";
  int fruts_limit = 256;
  std::string nuts4_variant = "symmetric";
  /// auto, on or off. auto scales the t and Lasso targets.
  std::string scale = "auto";
  std::vector<std::string> hist;
  int hist_bins = 60;
  int calibration_runs = 20;
  int calibration_cap = 16384;
};

/// Sets one field from its text form. Unknown keys and bad values throw ConfigError.
void apply_setting(RunConfig& cfg, const std::string& key, const std::string& value);

/// key = value lines; '#' starts a comment.
RunConfig parse_config(const std::string& text, RunConfig base = {});
RunConfig load_config(const std::string& path);
/// Config paths listed one per line in a grid file, relative to the grid file.
std::vector<std::string> load_grid(const std::string& path);

void validate(const RunConfig& cfg);
nlohmann::json to_json(const RunConfig& cfg);

/// Everything derived from a config that sampling needs.
struct Experiment {
  RunConfig config;
  /// Target in sampling coordinates.
  TargetPtr target;
  /// Set when the target is scaled; maps sampling to model coordinates.
  std::shared_ptr<const ScaledTarget> scaled;
  /// Set for the Lasso.
  std::shared_ptr<const LassoModel> lasso;
  SamplerConfig sampler;
  double dt = 0.0;
  std::vector<std::string> coordinate_names;

  Vec to_model(const Vec& z) const { return scaled ? scaled->unscale(z) : z; }
};

Experiment build_experiment(const RunConfig& cfg);

struct CalibrationResult {
  int n_T = 0;
  /// Trajectories needed for every combination to coalesce.
  int n_all = 0;
  /// Smallest trajectory count reaching the coalesced value, per run and start.
  std::vector<int> per_combination;
  int runs = 0;
  int starts = 0;
  bool failed = false;
  std::string failure;

  nlohmann::json to_json() const;
};

/// Exploratory CFTP over calibration_runs runs crossed with the CFTP starting
/// points, doubling n_it until every start coalesces. n_T is the 90th
/// percentile of the per-combination trajectory counts.
CalibrationResult calibrate_block_length(const Experiment& ex, int workers = 1);

struct Histogram {
  std::string variable;
  std::vector<double> edges;
  std::vector<std::uint64_t> counts;
  double min = 0.0;
  double max = 0.0;
};

/// Equal-width bins over the observed range.
Histogram make_histogram(const std::string& variable, const std::vector<double>& values, int bins);
void write_histogram(const Histogram& hist, const std::string& path);

/// Values of a histogram variable (T, S, a coordinate name, or q<k> with k
/// counted from 1) for model-coordinate sample rows. T and S need the Lasso.
std::vector<double> histogram_values(const Experiment& ex, const Mat& model_samples, const std::string& variable);

/// Certified rows of samples.csv in model coordinates.
Mat read_samples(const std::string& path);

struct RunOutcome {
  int exit_code = 0;
  nlohmann::json report;
  UnbiasedResult result;
};

/// Runs the chain x block sampler and writes report.json, samples.csv and any
/// requested hist_<var>.csv into cfg.out. Exit code 0 on success, 2 when some
/// chain failed to coalesce (no samples are written then).
RunOutcome run_experiment(const RunConfig& cfg, int workers = 1);

/// Writes calibration.json into cfg.out and returns the result.
CalibrationResult run_calibration(const RunConfig& cfg, int workers = 1);

/// Reads samples.csv from cfg.out and writes hist_<var>.csv for each variable.
void run_histograms(const RunConfig& cfg, const std::vector<std::string>& variables, int bins);

}  // namespace hmcperfect
