#include "hmcperfect/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <omp.h>

namespace hmcperfect {

namespace fs = std::filesystem;

namespace {

constexpr int kReportSchemaVersion = 1;

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return "";
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  std::istringstream in(value);
  T out{};
  in >> out;
  if (in.fail() || !in.eof()) throw ConfigError("config field '" + key + "': cannot parse '" + value + "'");
  return out;
}

std::vector<std::string> split_list(const std::string& value) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(value);
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::string format_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

}  // namespace

void apply_setting(RunConfig& cfg, const std::string& raw_key, const std::string& raw_value) {
  const std::string key = trim(raw_key);
  const std::string value = trim(raw_value);
  if (key == "target") {
    cfg.target = value;
  } else if (key == "d") {
    cfg.d = parse_number<int>(key, value);
  } else if (key == "rho") {
    cfg.rho = parse_number<double>(key, value);
  } else if (key == "nu") {
    cfg.nu = parse_number<double>(key, value);
  } else if (key == "mu") {
    cfg.mu = parse_number<double>(key, value);
  } else if (key == "lambda") {
    cfg.lambda = parse_number<double>(key, value);
  } else if (key == "dataset") {
    cfg.dataset = value;
  } else if (key == "sampler") {
    cfg.sampler = value;
  } else if (key == "h") {
    cfg.h = parse_number<double>(key, value);
  } else if (key == "alpha") {
    cfg.alpha = parse_number<double>(key, value);
  } else if (key == "beta") {
    cfg.beta = parse_number<double>(key, value);
  } else if (key == "w") {
    cfg.w = parse_number<double>(key, value);
  } else if (key == "n_S" || key == "n_sets") {
    cfg.n_sets = parse_number<int>(key, value);
  } else if (key == "n_B" || key == "n_blocks") {
    cfg.n_blocks = parse_number<int>(key, value);
  } else if (key == "n_T") {
    cfg.n_T = value == "calibrate" ? 0 : parse_number<int>(key, value);
  } else if (key == "seed") {
    cfg.seed = parse_number<std::uint64_t>(key, value);
  } else if (key == "out") {
    cfg.out = value;
  } else if (key == "fruts_limit") {
    cfg.fruts_limit = parse_number<int>(key, value);
  } else if (key == "nuts4_variant") {
    cfg.nuts4_variant = value;
  } else if (key == "scale") {
    cfg.scale = value;
  } else if (key == "hist") {
    cfg.hist = split_list(value);
  } else if (key == "hist_bins") {
    cfg.hist_bins = parse_number<int>(key, value);
  } else if (key == "calibration_runs") {
    cfg.calibration_runs = parse_number<int>(key, value);
  } else if (key == "calibration_cap") {
    cfg.calibration_cap = parse_number<int>(key, value);
  } else {
    throw ConfigError("unknown config field '" + key + "'");
  }
}

RunConfig parse_config(const std::string& text, RunConfig base) {
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
    }
    apply_setting(base, line.substr(0, eq), line.substr(eq + 1));
  }
  return base;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  std::stringstream text;
  text << in.rdbuf();
  return parse_config(text.str());
}

std::vector<std::string> load_grid(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open grid file " + path);
  const fs::path dir = fs::path(path).parent_path();
  std::vector<std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (!line.empty()) out.push_back((dir / line).string());
  }
  return out;
}

void validate(const RunConfig& cfg) {
  static const std::vector<std::string> targets{"standard_normal", "correlated_normal", "t", "mixture", "lasso"};
  if (std::find(targets.begin(), targets.end(), cfg.target) == targets.end()) {
    throw ConfigError("config field 'target': unknown target '" + cfg.target + "'");
  }
  if (cfg.target != "lasso" && cfg.d < 1) throw ConfigError("config field 'd': must be at least 1");
  if (cfg.target == "correlated_normal" && !(cfg.rho >= 0.0 && cfg.rho < 1.0)) {
    throw ConfigError("config field 'rho': must lie in [0, 1)");
  }
  if (cfg.target == "t" && !(cfg.nu > 0.0)) throw ConfigError("config field 'nu': must be positive");
  if (cfg.target == "mixture" && !(cfg.mu > 0.0)) throw ConfigError("config field 'mu': must be positive");
  if (cfg.target == "lasso" && !(cfg.lambda >= 0.0)) throw ConfigError("config field 'lambda': must be non-negative");
  try {
    (void)parse_sampler(cfg.sampler);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("config field 'sampler': ") + e.what());
  }
  if (!(cfg.h > 0.0)) throw ConfigError("config field 'h': must be positive");
  if (!(cfg.alpha > 0.0)) throw ConfigError("config field 'alpha': must be positive");
  if (cfg.beta != 2.0) throw ConfigError("config field 'beta': only beta = 2 is supported");
  if (!(cfg.w > 0.0)) throw ConfigError("config field 'w': must be positive");
  if (cfg.n_sets < 1) throw ConfigError("config field 'n_S': must be at least 1");
  if (cfg.n_blocks < 2) throw ConfigError("config field 'n_B': must be at least 2");
  if (cfg.n_T < 0) throw ConfigError("config field 'n_T': must be positive or 'calibrate'");
  if (cfg.fruts_limit < 1) throw ConfigError("config field 'fruts_limit': must be at least 1");
  if (cfg.nuts4_variant != "symmetric" && cfg.nuts4_variant != "literal") {
    throw ConfigError("config field 'nuts4_variant': expected symmetric or literal");
  }
  if (cfg.scale != "auto" && cfg.scale != "on" && cfg.scale != "off") {
    throw ConfigError("config field 'scale': expected auto, on or off");
  }
  if (cfg.hist_bins < 1) throw ConfigError("config field 'hist_bins': must be at least 1");
  if (cfg.calibration_runs < 1) throw ConfigError("config field 'calibration_runs': must be at least 1");
  if (cfg.calibration_cap < 1) throw ConfigError("config field 'calibration_cap': must be at least 1");
  for (const auto& var : cfg.hist) {
    if ((var == "T" || var == "S") && cfg.target != "lasso") {
      throw ConfigError("config field 'hist': variable " + var + " is defined for the lasso target only");
    }
  }
}

nlohmann::json to_json(const RunConfig& cfg) {
  nlohmann::json target = {{"name", cfg.target}};
  if (cfg.target == "lasso") {
    target["lambda"] = cfg.lambda;
    target["dataset"] = cfg.dataset.empty() ? diabetes_data_path() : cfg.dataset;
  } else {
    target["d"] = cfg.d;
    if (cfg.target == "correlated_normal") target["rho"] = cfg.rho;
    if (cfg.target == "t") target["nu"] = cfg.nu;
    if (cfg.target == "mixture") target["mu"] = cfg.mu;
  }
  return {
      {"target", target},
      {"sampler", cfg.sampler},
      {"h", cfg.h},
      {"alpha", cfg.alpha},
      {"beta", cfg.beta},
      {"w", cfg.w},
      {"n_S", cfg.n_sets},
      {"n_B", cfg.n_blocks},
      {"n_T", cfg.n_T},
      {"seed", cfg.seed},
      {"fruts_limit", cfg.fruts_limit},
      {"nuts4_variant", cfg.nuts4_variant},
      {"scale", cfg.scale},
      {"hist", cfg.hist},
      {"hist_bins", cfg.hist_bins},
      {"calibration_runs", cfg.calibration_runs},
      {"calibration_cap", cfg.calibration_cap},
  };
}

Experiment build_experiment(const RunConfig& cfg) {
  validate(cfg);
  Experiment ex;
  ex.config = cfg;
  TargetPtr base;
  if (cfg.target == "standard_normal") {
    base = make_standard_normal(cfg.d);
  } else if (cfg.target == "correlated_normal") {
    base = make_correlated_normal({cfg.d, cfg.rho});
  } else if (cfg.target == "t") {
    base = make_t_distribution(cfg.d, cfg.nu, cfg.alpha);
  } else if (cfg.target == "mixture") {
    base = make_normal_mixture({cfg.d, cfg.mu});
  } else {
    auto data = std::make_shared<const RegressionData>(
        cfg.dataset.empty() ? load_diabetes() : load_regression_data(cfg.dataset));
    ex.lasso = std::make_shared<const LassoModel>(data, cfg.lambda);
    base = ex.lasso;
    for (const auto& name : data->names) ex.coordinate_names.push_back(name);
    ex.coordinate_names.emplace_back("beta0");
    ex.coordinate_names.emplace_back("log_sigma");
  }
  if (ex.coordinate_names.empty()) {
    for (int i = 1; i <= base->dim(); ++i) ex.coordinate_names.push_back("q" + std::to_string(i));
  }

  bool scale = cfg.scale == "on";
  if (cfg.scale == "auto") scale = cfg.target == "t" || cfg.target == "lasso";
  if (scale) {
    ex.scaled = ex.lasso ? std::make_shared<const ScaledTarget>(base, ex.lasso->ols_point(), ex.lasso->ols_hessian())
                         : scale_transform(base);
    ex.target = ex.scaled;
  } else {
    ex.target = base;
  }

  ex.dt = time_step({cfg.h, cfg.alpha, cfg.beta, ex.target->dim()});
  ex.sampler.kind = parse_sampler(cfg.sampler);
  ex.sampler.dt = ex.dt;
  ex.sampler.kinetic.beta = cfg.beta;
  ex.sampler.fruts_limit = cfg.fruts_limit;
  ex.sampler.nuts4_variant = cfg.nuts4_variant == "literal" ? Nuts4Variant::literal : Nuts4Variant::symmetric;
  return ex;
}

nlohmann::json CalibrationResult::to_json() const {
  nlohmann::json out = {{"n_T", n_T},          {"n_all", n_all},
                        {"runs", runs},        {"starts", starts},
                        {"failed", failed},    {"per_combination", per_combination}};
  if (failed) out["failure"] = failure;
  return out;
}

CalibrationResult calibrate_block_length(const Experiment& ex, int workers) {
  const RunConfig& cfg = ex.config;
  const TargetDistribution& target = *ex.target;
  const int d = target.dim();
  const RowLayout layout{d};
  const std::vector<Vec> starts = cftp_start_points(target, cfg.seed).points;
  const int n_st = static_cast<int>(starts.size());
  const int runs = cfg.calibration_runs;
  const int cap = cfg.calibration_cap;

  CalibrationResult res;
  res.runs = runs;
  res.starts = n_st;
  std::vector<int> needed(static_cast<std::size_t>(runs) * n_st, 0);
  std::vector<int> run_all(static_cast<std::size_t>(runs), 0);
  std::vector<std::string> failures(static_cast<std::size_t>(runs));

  const int threads = workers > 0 ? workers : 1;
#pragma omp parallel num_threads(threads)
  {
    ChainWorkspace ws;
#pragma omp for schedule(dynamic)
    for (int r = 0; r < runs; ++r) {
      try {
        const RandomBlock block(cfg.seed, Stream::cftp, static_cast<std::uint64_t>(r), 0, cap, layout.width(), d);
        int n_it = 1;
        Vec value;
        while (true) {
          const CftpResult c = cftp(starts, n_it, block, cfg.w, target, ex.sampler, ws);
          if (c.n_coal == n_st) {
            value = c.end_points[0];
            break;
          }
          if (n_it == cap) throw CoalescenceTimeout("no coalescence within " + std::to_string(cap) + " trajectories");
          n_it = std::min(2 * n_it, cap);
        }
        run_all[static_cast<std::size_t>(r)] = n_it;
        for (int s = 0; s < n_st; ++s) {
          // Smallest n such that every suffix of length n .. n_it reaches the coalesced value.
          int lo = n_it;
          while (lo > 1) {
            const Vec out = hmc_round(starts[static_cast<std::size_t>(s)], block.suffix(lo - 1), cfg.w, target,
                                      ex.sampler, ws);
            if (!same_point(out, value)) break;
            --lo;
          }
          needed[static_cast<std::size_t>(r) * n_st + s] = lo;
        }
      } catch (const std::exception& e) {
        failures[static_cast<std::size_t>(r)] = "run " + std::to_string(r) + ": " + e.what();
      }
    }
  }
  for (const auto& f : failures) {
    if (!f.empty()) {
      res.failed = true;
      res.failure = f;
      return res;
    }
  }
  res.per_combination = needed;
  res.n_all = *std::max_element(run_all.begin(), run_all.end());
  std::vector<int> sorted = needed;
  std::sort(sorted.begin(), sorted.end());
  const auto rank = static_cast<std::size_t>(std::ceil(0.9 * static_cast<double>(sorted.size())));
  res.n_T = sorted[std::max<std::size_t>(rank, 1) - 1];
  return res;
}

Histogram make_histogram(const std::string& variable, const std::vector<double>& values, int bins) {
  Histogram h;
  h.variable = variable;
  h.counts.assign(static_cast<std::size_t>(bins), 0);
  if (values.empty()) {
    h.edges.assign(static_cast<std::size_t>(bins) + 1, 0.0);
    return h;
  }
  h.min = *std::min_element(values.begin(), values.end());
  h.max = *std::max_element(values.begin(), values.end());
  const double width = (h.max - h.min) / bins;
  for (int k = 0; k <= bins; ++k) h.edges.push_back(k == bins ? h.max : h.min + k * width);
  for (double v : values) {
    int k = width > 0.0 ? static_cast<int>((v - h.min) / width) : 0;
    k = std::clamp(k, 0, bins - 1);
    h.counts[static_cast<std::size_t>(k)] += 1;
  }
  return h;
}

void write_histogram(const Histogram& h, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "# variable=" << h.variable << " min=" << format_double(h.min) << " max=" << format_double(h.max) << "\n";
  out << "lower,upper,count\n";
  for (std::size_t k = 0; k < h.counts.size(); ++k) {
    out << format_double(h.edges[k]) << ',' << format_double(h.edges[k + 1]) << ',' << h.counts[k] << "\n";
  }
}

std::vector<double> histogram_values(const Experiment& ex, const Mat& samples, const std::string& variable) {
  std::vector<double> values;
  values.reserve(static_cast<std::size_t>(samples.rows()));
  if (variable == "T" || variable == "S") {
    if (!ex.lasso) throw ConfigError("histogram variable " + variable + " is defined for the lasso target only");
    for (Eigen::Index i = 0; i < samples.rows(); ++i) {
      const Vec theta = samples.row(i).transpose();
      values.push_back(variable == "T" ? ex.lasso->t_statistic(theta) : ex.lasso->s_statistic(theta));
    }
    return values;
  }
  int column = -1;
  for (std::size_t j = 0; j < ex.coordinate_names.size(); ++j) {
    if (ex.coordinate_names[j] == variable) column = static_cast<int>(j);
  }
  if (column < 0 && variable.size() > 1 && variable[0] == 'q') {
    try {
      column = std::stoi(variable.substr(1)) - 1;
    } catch (const std::exception&) {
      column = -1;
    }
  }
  if (column < 0 || column >= samples.cols()) throw ConfigError("unknown histogram variable '" + variable + "'");
  for (Eigen::Index i = 0; i < samples.rows(); ++i) values.push_back(samples(i, column));
  return values;
}

Mat read_samples(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::string line;
  std::vector<std::vector<double>> rows;
  bool header_seen = false;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (!header_seen) {
      header_seen = true;
      continue;
    }
    std::vector<double> row;
    std::istringstream fields(line);
    std::string field;
    int col = 0;
    while (std::getline(fields, field, ',')) {
      if (col++ < 2) continue;  // sample_set, chain
      row.push_back(std::stod(field));
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) return Mat(0, 0);
  Mat out(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows[0].size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < rows[i].size(); ++j) out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
  }
  return out;
}

namespace {

void write_json(const nlohmann::json& j, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump(2) << "\n";
}

Mat certified_model_samples(const Experiment& ex, const UnbiasedResult& r) {
  Mat out(static_cast<Eigen::Index>(r.certified_count()), r.samples.cols());
  Eigen::Index k = 0;
  for (Eigen::Index i = 0; i < r.samples.rows(); ++i) {
    if (!r.certified[static_cast<std::size_t>(i)]) continue;
    out.row(k++) = ex.to_model(r.samples.row(i).transpose()).transpose();
  }
  return out;
}

}  // namespace

CalibrationResult run_calibration(const RunConfig& cfg, int workers) {
  const Experiment ex = build_experiment(cfg);
  CalibrationResult res = calibrate_block_length(ex, workers);
  fs::create_directories(cfg.out);
  nlohmann::json j = res.to_json();
  j["schema_version"] = kReportSchemaVersion;
  j["config"] = to_json(cfg);
  j["dt"] = ex.dt;
  write_json(j, fs::path(cfg.out) / "calibration.json");
  return res;
}

RunOutcome run_experiment(const RunConfig& input, int workers) {
  RunConfig cfg = input;
  Experiment ex = build_experiment(cfg);
  fs::create_directories(cfg.out);
  RunOutcome outcome;
  nlohmann::json calibration;
  if (cfg.n_T == 0) {
    const CalibrationResult cal = calibrate_block_length(ex, workers);
    calibration = cal.to_json();
    if (cal.failed) {
      outcome.exit_code = 2;
      outcome.report = {{"schema_version", kReportSchemaVersion},
                        {"config", to_json(cfg)},
                        {"error", true},
                        {"failures", {cal.failure}},
                        {"calibration", calibration}};
      write_json(outcome.report, fs::path(cfg.out) / "report.json");
      return outcome;
    }
    cfg.n_T = cal.n_T;
    ex.config.n_T = cal.n_T;
  }

  UnbiasedConfig uc;
  uc.n_sets = cfg.n_sets;
  uc.n_blocks = cfg.n_blocks;
  uc.block_length = cfg.n_T;
  uc.w = cfg.w;
  uc.seed = cfg.seed;
  uc.sampler = ex.sampler;
  outcome.result = unbiased_perfect(uc, *ex.target, workers);
  const UnbiasedResult& r = outcome.result;

  nlohmann::json rep;
  rep["schema_version"] = kReportSchemaVersion;
  rep["config"] = to_json(cfg);
  rep["dt"] = ex.dt;
  rep["coordinates"] = ex.scaled ? "model (unscaled)" : "model";
  rep["error"] = r.error;
  nlohmann::json failures = nlohmann::json::array();
  for (std::size_t i = 0; i < r.failures.size() && i < 20; ++i) failures.push_back(r.failures[i]);
  rep["failures"] = failures;
  rep["failed_sets"] = r.failures.size();
  rep["points"] = r.samples.rows();
  rep["metrics"] = report(r.metrics, r.certified_count());
  if (!calibration.is_null()) rep["calibration"] = calibration;
  outcome.report = rep;

  if (r.error) {
    outcome.exit_code = 2;
    fs::remove(fs::path(cfg.out) / "samples.csv");
    write_json(rep, fs::path(cfg.out) / "report.json");
    return outcome;
  }

  const Mat model = certified_model_samples(ex, r);
  {
    std::ofstream out(fs::path(cfg.out) / "samples.csv");
    out << "# coordinates=model" << (ex.scaled ? " (unscaled from sampling coordinates)" : "")
        << " seed=" << cfg.seed << "\n";
    out << "sample_set,chain";
    for (const auto& name : ex.coordinate_names) out << ',' << name;
    out << "\n";
    Eigen::Index k = 0;
    for (Eigen::Index i = 0; i < r.samples.rows(); ++i) {
      if (!r.certified[static_cast<std::size_t>(i)]) continue;
      out << i / cfg.n_blocks << ',' << i % cfg.n_blocks;
      for (Eigen::Index j = 0; j < model.cols(); ++j) out << ',' << format_double(model(k, j));
      out << "\n";
      ++k;
    }
  }
  nlohmann::json hists = nlohmann::json::object();
  for (const auto& var : cfg.hist) {
    const Histogram h = make_histogram(var, histogram_values(ex, model, var), cfg.hist_bins);
    write_histogram(h, (fs::path(cfg.out) / ("hist_" + var + ".csv")).string());
    hists[var] = {{"min", h.min}, {"max", h.max}, {"bins", cfg.hist_bins}};
  }
  if (!hists.empty()) outcome.report["histograms"] = hists;
  write_json(outcome.report, fs::path(cfg.out) / "report.json");
  return outcome;
}

void run_histograms(const RunConfig& cfg, const std::vector<std::string>& variables, int bins) {
  const Experiment ex = build_experiment(cfg);
  if (variables.empty()) throw ConfigError("no histogram variables selected");
  const Mat model = read_samples((fs::path(cfg.out) / "samples.csv").string());
  for (const auto& var : variables) {
    const Histogram h = make_histogram(var, histogram_values(ex, model, var), bins);
    write_histogram(h, (fs::path(cfg.out) / ("hist_" + var + ".csv")).string());
  }
}

}  // namespace hmcperfect
