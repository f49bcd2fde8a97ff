#pragma once

#include "dawn/diagnostics/diagnostics.hpp"
#include "dawn/trainer/config.hpp"
#include "dawn/trainer/sac.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

namespace dawn::trainer {

struct MetricRow {
  std::int64_t step = 0;
  std::string metric;
  double value = 0.0;
};

using MetricSink = std::function<void(const MetricRow&)>;

/// Learner state: residual actor, critic ensemble with targets, entropy temperature.
struct Agent {
  ResidualPolicy policy;
  CriticEnsemble critic;
  AlphaState alpha;
};

agent::PolicySpec policy_spec(const RunConfig& config, const env::Environment& env);
agent::CriticSpec critic_spec(const RunConfig& config, const env::Environment& env);
Agent make_agent(const RunConfig& config, const env::Environment& env, std::mt19937_64& rng);

/// Writes policy, critic heads, target heads and log alpha as flat little-endian
/// float64 blobs plus manifest.json. Optimizer moments are not stored.
void save_checkpoint(const Agent& agent, const RunConfig& config, std::int64_t step,
                     const std::filesystem::path& dir);

struct Checkpoint {
  RunConfig config;
  std::int64_t step = 0;
  Agent agent;
};

Checkpoint load_checkpoint(const std::filesystem::path& dir);

/// Independent 64-bit seed for a named random stream of a run (splitmix64 mix).
std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t stream);

/// Deterministic evaluation: residual at tanh(mean), one episode per seed, all
/// episodes stepped together. Returns the fraction that succeed.
double evaluate_policy(const env::Environment& env, const base::BasePolicy& base,
                       const agent::ResidualPolicy& policy, double lambda, const std::vector<std::uint64_t>& seeds);

/// Evenly strided subset of at most n anchor pairs.
diagnostics::AnchorSet anchor_subset(const diagnostics::AnchorSet& anchors, Eigen::Index n);

struct RunOptions {
  /// When set, the run writes config.json, metrics.csv and checkpoints/ here.
  std::filesystem::path out_dir;
  MetricSink sink;
  /// Dump the replay buffer to out_dir/replay.bin at the end.
  bool dump_buffer = false;
  /// Write a Q-anatomy report alongside every checkpoint.
  bool anatomy_at_checkpoints = true;
};

struct RunResult {
  RunConfig config;
  std::vector<MetricRow> metrics;
  bool aborted = false;
  std::string error;
  std::filesystem::path last_checkpoint;
  std::int64_t steps = 0;
  std::size_t buffer_size = 0;
  double final_success = 0.0;
  buffer::WarmupStats warmup;

  /// Values of one metric in emission order, as (step, value).
  std::vector<std::pair<std::int64_t, double>> series(const std::string& metric) const;
};

/// Full training run.
///
/// Env steps are counted globally: the warmup transitions occupy steps [0, M) and the
/// online phase runs until total_steps. An optional critic-only phase sits between the
/// two; its metrics carry an "explicit_" prefix and are indexed by gradient step.
/// A RunAbort inside the run is caught and reported through RunResult::aborted.
RunResult run_dawn(const RunConfig& config, const RunOptions& options = {});

/// Header of every metrics CSV.
inline constexpr const char* kMetricsHeader = "step,variant,seed,metric,value";

}  // namespace dawn::trainer
