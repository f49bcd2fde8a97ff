#pragma once

#include "dawn/diff/parameters.hpp"
#include "dawn/envs/env.hpp"

#include <string>

namespace dawn::base {

using diff::Matrix;
using diff::Vector;

enum class ControllerKind { ProportionalBiased, Waypoint };

/// Frozen scripted controller. Reads a position slice and a goal slice of the
/// observation and drives toward the goal estimate with a saturating
/// proportional law: a = clip(gain * (goal - pos) / step_scale).
/// Gain 1 therefore reaches a goal within one max step in a single move.
struct BasePolicy {
  ControllerKind kind = ControllerKind::ProportionalBiased;
  double gain = 0.25;
  double step_scale = 0.05;
  int pos_offset = 0;
  int goal_offset = 4;
  int dims = 2;
  // Waypoint controller: approach a standoff point on the -x side of the goal first.
  double standoff = 0.05;
  double lane_tolerance = 0.01;

  Vector action(const Vector& observation) const;
  /// Row-wise action for a batch of observations.
  Matrix action_batch(const Matrix& observations) const;
};

/// Controller for an environment. `kind` is "proportional" (also "default") or "waypoint".
BasePolicy make_base_policy(const env::Environment& env, const std::string& kind = "default");

std::string to_string(ControllerKind kind);

struct RolloutStats {
  int episodes = 0;
  int successes = 0;
  double mean_length = 0.0;
  double success_rate() const { return episodes == 0 ? 0.0 : static_cast<double>(successes) / episodes; }
};

/// Runs the controller alone for `episodes` episodes with seeds first_seed, first_seed+1, ...
RolloutStats evaluate_base(const env::Environment& env, const BasePolicy& policy, int episodes,
                           std::uint64_t first_seed);

}  // namespace dawn::base
