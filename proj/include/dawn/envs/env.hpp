#pragma once

#include "dawn/diff/parameters.hpp"

#include <json.hpp>

#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <utility>
#include <vector>

namespace dawn::env {

using diff::Vector;

/// Full simulator state. Value-semantic: copying a state forks the episode.
struct EnvState {
  Vector observation;
  int step_index = 0;
  std::mt19937_64 rng;
  /// Per-episode randomized quantities (true goal, estimate bias, friction, ...).
  Vector goal_params;
  /// Physical quantities that are not part of the observation.
  Vector internal;
};

struct StepResult {
  Vector next_observation;
  double reward = -1.0;  // shifted sparse: 0 on success, -1 otherwise
  bool done = false;
  bool success = false;
};

inline constexpr double kSuccessReward = 0.0;
inline constexpr double kFailureReward = -1.0;

/// Seedable sparse-reward task. Implementations are stateless; all episode data
/// lives in EnvState, so one Environment can serve many concurrent episodes.
class Environment {
 public:
  virtual ~Environment() = default;

  virtual std::string id() const = 0;
  virtual int obs_dim() const = 0;
  virtual int action_dim() const = 0;
  virtual int episode_length() const = 0;
  virtual double success_tolerance() const = 0;
  virtual EnvState reset(std::uint64_t seed) const = 0;
  /// Actions are clipped to [-1, 1] before the dynamics; NaN actions abort the run.
  virtual std::pair<EnvState, StepResult> step(const EnvState& state, const Vector& action) const = 0;
  /// Privileged goal used by oracle controllers and tests, never by learners.
  virtual Vector true_goal(const EnvState& state) const = 0;
  /// Range of the randomized goal per coordinate, as (low, high) pairs.
  virtual std::vector<std::pair<double, double>> goal_ranges() const = 0;
  virtual nlohmann::json params_json() const = 0;
};

/// Builds an environment by registry id; `overrides` replaces individual parameters.
std::unique_ptr<Environment> make_env(const std::string& id, const nlohmann::json& overrides = {});
std::vector<std::string> registered_envs();

// ---- point-insert-2d ------------------------------------------------------

/// Precision slot insertion in the plane. Observation:
/// [ee_x, ee_y, vel_x, vel_y, slot_est_x, slot_est_y], velocity in units of max_step.
/// The slot estimate carries a per-episode bias: a systematic part plus Gaussian jitter.
///
/// The slot sits at the bottom of a channel cut into a wall. The wall face is the
/// plane x = slot_x - channel_depth; the channel spans |y - slot_y| < channel_half_width
/// and ends at x = slot_x. A move that would enter the wall jams the end-effector,
/// which then stays put until the episode times out.
struct PointInsertParams {
  double max_step = 0.05;
  int episode_length = 200;
  double tolerance = 0.01;
  double approach_band_deg = 60.0;
  double slot_x_lo = 0.2, slot_x_hi = 0.4;
  double slot_y_lo = -0.2, slot_y_hi = 0.2;
  double start_x_lo = -0.4, start_x_hi = -0.2;
  double start_y_lo = -0.2, start_y_hi = 0.2;
  double bias_sys_x = 0.0, bias_sys_y = 0.009;
  double bias_std = 0.003;
  double channel_depth = 0.02;
  double channel_half_width = 0.01;
};

class PointInsert2D final : public Environment {
 public:
  explicit PointInsert2D(PointInsertParams p = {}) : p_(p) {}
  std::string id() const override { return "point-insert-2d"; }
  int obs_dim() const override { return 6; }
  int action_dim() const override { return 2; }
  int episode_length() const override { return p_.episode_length; }
  double success_tolerance() const override { return p_.tolerance; }
  EnvState reset(std::uint64_t seed) const override;
  std::pair<EnvState, StepResult> step(const EnvState& state, const Vector& action) const override;
  Vector true_goal(const EnvState& state) const override;
  std::vector<std::pair<double, double>> goal_ranges() const override;
  nlohmann::json params_json() const override;
  const PointInsertParams& params() const { return p_; }

 private:
  PointInsertParams p_;
};

// ---- reach-nd ---------------------------------------------------------------

/// n-dimensional goal reaching. Observation: [position (n), goal estimate (n)].
struct ReachParams {
  int dims = 7;
  double max_step = 0.1;
  int episode_length = 100;
  double tolerance = 0.05;
  double goal_lo = -0.5, goal_hi = 0.5;
  double bias_sys = 0.016;  // added to every coordinate of the estimate
  double bias_std = 0.012;
};

class ReachND final : public Environment {
 public:
  explicit ReachND(ReachParams p = {}) : p_(p) {}
  std::string id() const override { return "reach-nd"; }
  int obs_dim() const override { return 2 * p_.dims; }
  int action_dim() const override { return p_.dims; }
  int episode_length() const override { return p_.episode_length; }
  double success_tolerance() const override { return p_.tolerance; }
  EnvState reset(std::uint64_t seed) const override;
  std::pair<EnvState, StepResult> step(const EnvState& state, const Vector& action) const override;
  Vector true_goal(const EnvState& state) const override;
  std::vector<std::pair<double, double>> goal_ranges() const override;
  nlohmann::json params_json() const override;
  const ReachParams& params() const { return p_; }

 private:
  ReachParams p_;
};

// ---- drift-push -------------------------------------------------------------

/// Pushing an object with momentum and a per-episode friction scalar.
/// Observation: [obj_x, obj_y, vel_x, vel_y, goal_x, goal_y], velocity in units of push_gain.
/// Success requires the object inside the tolerance and nearly at rest.
struct DriftPushParams {
  double push_gain = 0.05;
  int episode_length = 200;
  double tolerance = 0.02;
  double settle_speed = 0.01;
  double friction_lo = 0.0, friction_hi = 0.05;
  double goal_lo = -0.3, goal_hi = 0.3;
  double start_lo = -0.3, start_hi = 0.3;
};

class DriftPush final : public Environment {
 public:
  explicit DriftPush(DriftPushParams p = {}) : p_(p) {}
  std::string id() const override { return "drift-push"; }
  int obs_dim() const override { return 6; }
  int action_dim() const override { return 2; }
  int episode_length() const override { return p_.episode_length; }
  double success_tolerance() const override { return p_.tolerance; }
  EnvState reset(std::uint64_t seed) const override;
  std::pair<EnvState, StepResult> step(const EnvState& state, const Vector& action) const override;
  Vector true_goal(const EnvState& state) const override;
  std::vector<std::pair<double, double>> goal_ranges() const override;
  nlohmann::json params_json() const override;
  const DriftPushParams& params() const { return p_; }

 private:
  DriftPushParams p_;
};

/// Clips each component to [-1, 1]; throws RunAbort on NaN.
Vector clip_action(const Vector& action, int expected_dim);

}  // namespace dawn::env
