#pragma once

#include "dawn/agent/critic.hpp"
#include "dawn/buffer/replay.hpp"
#include "dawn/diff/mlp.hpp"

#include <json.hpp>

#include <cstdint>
#include <string>
#include <vector>

namespace dawn::trainer {

enum class ExplicitWarmup { None, SoftAuto, SoftFixed, Hard };
enum class AlphaMode { Auto, Fixed };

std::string to_string(ExplicitWarmup v);
ExplicitWarmup explicit_warmup_from_string(const std::string& name);
std::string to_string(AlphaMode m);
AlphaMode alpha_mode_from_string(const std::string& name);

/// Everything that determines a training run. Two configs that compare equal
/// and share a seed produce bitwise-identical metric streams.
struct RunConfig {
  std::string variant = "dawn";
  std::string profile = "desk";
  std::string env_id = "point-insert-2d";
  nlohmann::json env_overrides = nlohmann::json::object();
  std::string base_policy = "default";
  double lambda = 0.1;

  buffer::WarmupStrategy warmup;

  agent::HeadKind critic_head = agent::HeadKind::Scalar;
  diff::HiddenNorm critic_norm = diff::HiddenNorm::LayerNorm;
  diff::HiddenNorm actor_norm = diff::HiddenNorm::None;
  std::vector<int> hidden_dims{128, 128};

  ExplicitWarmup explicit_warmup = ExplicitWarmup::None;
  std::int64_t explicit_warmup_steps = 10000;
  /// Progressive-exploration horizon; 0 disables the gate.
  std::int64_t progressive_h = 0;

  double gamma = 0.97;
  double alpha_init = 0.01;
  AlphaMode alpha_mode = AlphaMode::Auto;
  /// Defaults to -(action dim) when left unset (NaN).
  double target_entropy = std::numeric_limits<double>::quiet_NaN();
  double lr = 1e-4;
  int batch = 256;
  int env_steps_per_update = 64;
  double utd = 0.25;
  double tau = 0.01;
  double grad_clip = 10.0;
  std::size_t replay_capacity = 1'000'000;
  /// Residual log-std initial bias.
  double init_log_std = -6.0;

  int atoms = 51;
  /// Categorical support; v_min NaN means -(1 - gamma^T) / (1 - gamma), flagship uses -35.
  double v_min = std::numeric_limits<double>::quiet_NaN();
  double v_max = 0.0;
  int quantiles = 25;
  int tqc_heads = 5;
  int tqc_drop = 2;
  double kappa = 1.0;

  std::int64_t total_steps = 200000;
  std::uint64_t seed = 0;
  std::int64_t eval_every = 2000;
  int eval_episodes = 50;
  int anchor_episodes = 50;
  int diagnostic_batch = 256;
  std::int64_t checkpoint_every = 20000;
  /// Stop once evaluation success reaches this value; 0 disables early stopping.
  double stop_at_success = 0.0;

  void validate() const;
  double resolved_target_entropy(int action_dim) const;
  double resolved_v_min(int episode_length) const;
  /// Gradient iterations per environment chunk (env_steps_per_update * utd).
  int updates_per_chunk() const;

  bool operator==(const RunConfig& other) const;
};

void to_json(nlohmann::json& j, const RunConfig& c);
void from_json(const nlohmann::json& j, RunConfig& c);

/// Named presets: "desk" (batch 256, width 128, 200K steps, eval every 2K) and
/// "paper" (batch 1024, width 256, 1M steps, eval every 10K).
RunConfig profile_defaults(const std::string& profile);
/// Applies a profile's scale settings onto an existing config.
void apply_profile(RunConfig& config, const std::string& profile);

/// Residual scale per environment: 0.1 for point-insert-2d and reach-nd, 0.2 for drift-push.
double default_lambda(const std::string& env_id);
/// Progressive-exploration horizon per environment: 30K, 100K, 300K.
std::int64_t default_progressive_h(const std::string& env_id);

}  // namespace dawn::trainer
