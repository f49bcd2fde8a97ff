#pragma once

#include "dawn/trainer/run.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

namespace dawn::harness {

using trainer::RunConfig;

struct Variant {
  std::string name;
  RunConfig config;
};

/// A set of named configurations swept over the same seeds.
struct ExperimentSuite {
  std::string name;
  std::vector<Variant> variants;
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4, 5, 6, 7};
  std::filesystem::path out_dir;

  /// Throws ConfigError on duplicate or empty variant names, no seeds, or an invalid config.
  void validate() const;
};

void to_json(nlohmann::json& j, const ExperimentSuite& s);
void from_json(const nlohmann::json& j, ExperimentSuite& s);

/// Names of the shipped suites.
std::vector<std::string> suite_names();

/// One of the shipped suites, built on the given profile.
ExperimentSuite make_suite(const std::string& name, const std::string& profile = "desk");

/// A shipped suite name, or a JSON file holding either a suite ({"name", "variants", ...})
/// or a single RunConfig. The profile is applied before file overrides.
ExperimentSuite load_suite(const std::string& name_or_path, const std::string& profile = "desk");

/// "8" means seeds 0..7, "3-5" means 3, 4, 5, "0,4,9" is an explicit list.
std::vector<std::uint64_t> parse_seeds(const std::string& text);

/// Directory name of the default output root when DAWN_OUT_DIR is unset.
inline constexpr const char* kDefaultOutDir = "dawn-runs";
inline constexpr const char* kOutDirEnv = "DAWN_OUT_DIR";
/// DAWN_OUT_DIR if set, otherwise ./dawn-runs.
std::filesystem::path default_out_dir();

/// Run directory of one (variant, seed) pair under the suite root.
std::filesystem::path run_dir(const std::filesystem::path& root, const std::string& variant, std::uint64_t seed);

struct RunFailure {
  std::string variant;
  std::uint64_t seed = 0;
  std::string error;
  std::string last_checkpoint;
};

struct SuiteOptions {
  /// Worker threads; 0 uses the hardware concurrency.
  int workers = 0;
  bool anatomy_at_checkpoints = true;
  /// Called once per finished run, from the worker thread that ran it.
  std::function<void(const Variant&, std::uint64_t, const trainer::RunResult&)> on_run_done;
};

struct SuiteResult {
  std::filesystem::path root;
  std::vector<RunFailure> failures;
  int runs = 0;
  bool ok() const { return failures.empty(); }
};

/// Runs every (variant, seed) pair on a bounded worker pool. Each run writes only to
/// its own directory; an abort is recorded in failures.json and siblings continue.
/// Afterwards the root holds suite.json, summary.csv and failures.json.
SuiteResult run_suite(const ExperimentSuite& suite, const SuiteOptions& options = {});

// ---- metrics and summary -------------------------------------------------------

struct MetricSample {
  std::int64_t step = 0;
  std::string variant;
  std::uint64_t seed = 0;
  std::string metric;
  double value = 0.0;
};

/// Parses a metrics CSV with the step,variant,seed,metric,value header.
std::vector<MetricSample> read_metrics_csv(const std::filesystem::path& path);

/// Every metrics.csv below root.
std::vector<MetricSample> collect_metrics(const std::filesystem::path& root);

struct Interval {
  int n = 0;
  double mean = 0.0;
  double sd = 0.0;          // sample standard deviation (n - 1)
  double half_width = 0.0;  // 1.96 sd / sqrt(n); 0 for a single sample
  double lower() const { return mean - half_width; }
  double upper() const { return mean + half_width; }
};

/// Normal-approximation 95% confidence interval of the mean.
Interval mean_ci(const std::vector<double>& values);

struct SummaryRow {
  std::int64_t step = 0;
  std::string variant;
  std::string metric;
  Interval ci;
};

/// Groups samples by (variant, metric, step) across seeds, sorted by variant, metric, step.
std::vector<SummaryRow> summarize(const std::vector<MetricSample>& samples);

inline constexpr const char* kSummaryHeader = "step,variant,metric,n,mean,ci_low,ci_high,half_width";
void write_summary_csv(const std::vector<SummaryRow>& rows, const std::filesystem::path& path);
/// Throws ConfigError naming any missing column.
std::vector<SummaryRow> read_summary_csv(const std::filesystem::path& path);

}  // namespace dawn::harness
