#include "dawn/basepolicy/base_policy.hpp"

#include "dawn/errors.hpp"

#include <cmath>

namespace dawn::base {

std::string to_string(ControllerKind kind) {
  return kind == ControllerKind::Waypoint ? "waypoint" : "proportional";
}

Vector BasePolicy::action(const Vector& observation) const {
  if (observation.size() < std::max(pos_offset, goal_offset) + dims) {
    throw ConfigError("base policy: observation too short");
  }
  Vector pos = observation.segment(pos_offset, dims);
  Vector goal = observation.segment(goal_offset, dims);
  if (kind == ControllerKind::Waypoint && dims >= 2) {
    // Line up behind the goal on the insertion axis before moving in.
    const bool off_lane = std::abs(pos(1) - goal(1)) > lane_tolerance;
    const bool in_front = pos(0) < goal(0) - 0.5 * standoff;
    if (off_lane && in_front) goal(0) -= standoff;
  }
  Vector a = gain * (goal - pos) / step_scale;
  return a.cwiseMax(-1.0).cwiseMin(1.0);
}

Matrix BasePolicy::action_batch(const Matrix& observations) const {
  Matrix out(observations.rows(), dims);
  for (Eigen::Index r = 0; r < observations.rows(); ++r) {
    out.row(r) = action(observations.row(r).transpose()).transpose();
  }
  return out;
}

BasePolicy make_base_policy(const env::Environment& env, const std::string& kind) {
  BasePolicy p;
  if (kind == "default" || kind == "proportional") {
    p.kind = ControllerKind::ProportionalBiased;
  } else if (kind == "waypoint") {
    p.kind = ControllerKind::Waypoint;
  } else {
    throw ConfigError("unknown base policy '" + kind + "'");
  }
  if (const auto* e = dynamic_cast<const env::PointInsert2D*>(&env)) {
    p.dims = 2;
    p.pos_offset = 0;
    p.goal_offset = 4;
    p.step_scale = e->params().max_step;
    p.gain = 0.25;
    p.lane_tolerance = 0.2 * e->params().channel_half_width;
    p.standoff = 2.5 * e->params().channel_depth;
  } else if (const auto* r = dynamic_cast<const env::ReachND*>(&env)) {
    p.dims = r->params().dims;
    p.pos_offset = 0;
    p.goal_offset = r->params().dims;
    p.step_scale = r->params().max_step;
    p.gain = 0.5;
  } else if (const auto* d = dynamic_cast<const env::DriftPush*>(&env)) {
    p.dims = 2;
    p.pos_offset = 0;
    p.goal_offset = 4;
    p.step_scale = d->params().push_gain;
    p.gain = 0.1;
  } else {
    throw ConfigError("no base policy registered for environment '" + env.id() + "'");
  }
  return p;
}

RolloutStats evaluate_base(const env::Environment& env, const BasePolicy& policy, int episodes,
                           std::uint64_t first_seed) {
  RolloutStats stats;
  double total_len = 0.0;
  for (int ep = 0; ep < episodes; ++ep) {
    env::EnvState s = env.reset(first_seed + static_cast<std::uint64_t>(ep));
    bool done = false;
    bool success = false;
    while (!done) {
      auto [next, r] = env.step(s, policy.action(s.observation));
      s = std::move(next);
      done = r.done;
      success = r.success;
    }
    ++stats.episodes;
    stats.successes += success ? 1 : 0;
    total_len += s.step_index;
  }
  stats.mean_length = episodes > 0 ? total_len / episodes : 0.0;
  return stats;
}

}  // namespace dawn::base
