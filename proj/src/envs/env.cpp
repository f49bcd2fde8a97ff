#include "dawn/envs/env.hpp"

#include "dawn/errors.hpp"

#include <cmath>
#include <numbers>

namespace dawn::env {

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(PointInsertParams, max_step, episode_length, tolerance,
                                                approach_band_deg, slot_x_lo, slot_x_hi, slot_y_lo, slot_y_hi,
                                                start_x_lo, start_x_hi, start_y_lo, start_y_hi, bias_sys_x,
                                                bias_sys_y, bias_std, channel_depth, channel_half_width)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(ReachParams, dims, max_step, episode_length, tolerance, goal_lo,
                                                goal_hi, bias_sys, bias_std)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(DriftPushParams, push_gain, episode_length, tolerance,
                                                settle_speed, friction_lo, friction_hi, goal_lo, goal_hi, start_lo,
                                                start_hi)

Vector clip_action(const Vector& action, int expected_dim) {
  if (action.size() != expected_dim) {
    throw ConfigError("action has " + std::to_string(action.size()) + " components, expected " +
                      std::to_string(expected_dim));
  }
  if (action.hasNaN()) throw RunAbort("NaN action passed to environment step");
  return action.cwiseMax(-1.0).cwiseMin(1.0);
}

namespace {

template <typename Params>
Params apply_overrides(const nlohmann::json& overrides) {
  Params p{};
  if (overrides.is_null() || overrides.empty()) return p;
  if (!overrides.is_object()) throw ConfigError("environment overrides must be a JSON object");
  nlohmann::json j = p;
  for (const auto& [key, value] : overrides.items()) {
    if (!j.contains(key)) throw ConfigError("unknown environment parameter '" + key + "'");
    j[key] = value;
  }
  return j.get<Params>();
}

double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

void check_episode_length(int length) {
  if (length < 1) throw ConfigError("episode_length must be >= 1");
}

}  // namespace

std::vector<std::string> registered_envs() { return {"point-insert-2d", "reach-nd", "drift-push"}; }

std::unique_ptr<Environment> make_env(const std::string& id, const nlohmann::json& overrides) {
  if (id == "point-insert-2d") {
    auto p = apply_overrides<PointInsertParams>(overrides);
    check_episode_length(p.episode_length);
    if (!(p.tolerance > 0.0)) throw ConfigError("tolerance must be positive");
    return std::make_unique<PointInsert2D>(p);
  }
  if (id == "reach-nd") {
    auto p = apply_overrides<ReachParams>(overrides);
    check_episode_length(p.episode_length);
    if (p.dims < 1) throw ConfigError("reach-nd needs at least one dimension");
    return std::make_unique<ReachND>(p);
  }
  if (id == "drift-push") {
    auto p = apply_overrides<DriftPushParams>(overrides);
    check_episode_length(p.episode_length);
    return std::make_unique<DriftPush>(p);
  }
  throw ConfigError("unknown environment id '" + id + "'");
}

// ---- point-insert-2d ------------------------------------------------------
// goal_params: [slot_x, slot_y, bias_x, bias_y]; internal: [last_dx, last_dy, jammed]

EnvState PointInsert2D::reset(std::uint64_t seed) const {
  EnvState s;
  s.rng.seed(seed);
  const double slot_x = uniform(s.rng, p_.slot_x_lo, p_.slot_x_hi);
  const double slot_y = uniform(s.rng, p_.slot_y_lo, p_.slot_y_hi);
  const double ee_x = uniform(s.rng, p_.start_x_lo, p_.start_x_hi);
  const double ee_y = uniform(s.rng, p_.start_y_lo, p_.start_y_hi);
  std::normal_distribution<double> jitter(0.0, p_.bias_std);
  const double bias_x = p_.bias_sys_x + jitter(s.rng);
  const double bias_y = p_.bias_sys_y + jitter(s.rng);
  s.goal_params = Vector(4);
  s.goal_params << slot_x, slot_y, bias_x, bias_y;
  s.internal = Vector::Zero(3);
  s.observation = Vector(6);
  s.observation << ee_x, ee_y, 0.0, 0.0, slot_x + bias_x, slot_y + bias_y;
  return s;
}

std::pair<EnvState, StepResult> PointInsert2D::step(const EnvState& state, const Vector& action) const {
  const Vector a = clip_action(action, 2);
  EnvState next = state;
  next.step_index = state.step_index + 1;
  const double slot_x = state.goal_params(0);
  const double slot_y = state.goal_params(1);
  const double face_x = slot_x - p_.channel_depth;
  const bool jammed = state.internal(2) != 0.0;

  const double dx = p_.max_step * a(0);
  const double dy = p_.max_step * a(1);
  double x = state.observation(0) + dx;
  const double y = state.observation(1) + dy;
  bool jam = jammed;
  if (!jam && x > face_x) {
    // Off-channel at the end point, or off-channel where the segment crosses the face.
    const double x0 = state.observation(0);
    const double y_face = x0 < face_x ? state.observation(1) + dy * (face_x - x0) / dx : y;
    jam = std::abs(y - slot_y) >= p_.channel_half_width || std::abs(y_face - slot_y) >= p_.channel_half_width;
  }
  if (jam) {
    x = state.observation(0);
  } else {
    x = std::min(x, slot_x);  // channel bottom
  }
  const double new_y = jam ? state.observation(1) : y;
  next.observation(2) = (x - state.observation(0)) / p_.max_step;
  next.observation(3) = (new_y - state.observation(1)) / p_.max_step;
  next.observation(0) = x;
  next.observation(1) = new_y;
  next.internal << dx, dy, jam ? 1.0 : 0.0;

  const bool within = !jam && std::hypot(x - slot_x, new_y - slot_y) < p_.tolerance;
  const double travel = std::hypot(dx, dy);
  // Insertion axis is +x; the heading of the commanded move must lie inside the band.
  const bool aligned = travel > 0.0 && dx / travel >= std::cos(p_.approach_band_deg * std::numbers::pi / 180.0);

  StepResult r;
  r.success = within && aligned;
  r.reward = r.success ? kSuccessReward : kFailureReward;
  r.done = r.success || next.step_index >= p_.episode_length;
  r.next_observation = next.observation;
  return {std::move(next), std::move(r)};
}

Vector PointInsert2D::true_goal(const EnvState& state) const { return state.goal_params.head(2); }

std::vector<std::pair<double, double>> PointInsert2D::goal_ranges() const {
  return {{p_.slot_x_lo, p_.slot_x_hi}, {p_.slot_y_lo, p_.slot_y_hi}};
}

nlohmann::json PointInsert2D::params_json() const { return p_; }

// ---- reach-nd ---------------------------------------------------------------
// goal_params: [goal (n), bias (n)]

EnvState ReachND::reset(std::uint64_t seed) const {
  const int n = p_.dims;
  EnvState s;
  s.rng.seed(seed);
  s.goal_params = Vector(2 * n);
  std::normal_distribution<double> jitter(0.0, p_.bias_std);
  for (int i = 0; i < n; ++i) s.goal_params(i) = uniform(s.rng, p_.goal_lo, p_.goal_hi);
  for (int i = 0; i < n; ++i) s.goal_params(n + i) = p_.bias_sys + jitter(s.rng);
  s.internal = Vector::Zero(0);
  s.observation = Vector::Zero(2 * n);
  s.observation.tail(n) = s.goal_params.head(n) + s.goal_params.tail(n);
  return s;
}

std::pair<EnvState, StepResult> ReachND::step(const EnvState& state, const Vector& action) const {
  const int n = p_.dims;
  const Vector a = clip_action(action, n);
  EnvState next = state;
  next.observation.head(n) += p_.max_step * a;
  next.step_index = state.step_index + 1;
  StepResult r;
  r.success = (next.observation.head(n) - state.goal_params.head(n)).norm() < p_.tolerance;
  r.reward = r.success ? kSuccessReward : kFailureReward;
  r.done = r.success || next.step_index >= p_.episode_length;
  r.next_observation = next.observation;
  return {std::move(next), std::move(r)};
}

Vector ReachND::true_goal(const EnvState& state) const { return state.goal_params.head(p_.dims); }

std::vector<std::pair<double, double>> ReachND::goal_ranges() const {
  return std::vector<std::pair<double, double>>(static_cast<std::size_t>(p_.dims), {p_.goal_lo, p_.goal_hi});
}

nlohmann::json ReachND::params_json() const { return p_; }

// ---- drift-push -------------------------------------------------------------
// goal_params: [goal_x, goal_y, friction]; internal: [vel_x, vel_y] in world units

EnvState DriftPush::reset(std::uint64_t seed) const {
  EnvState s;
  s.rng.seed(seed);
  const double gx = uniform(s.rng, p_.goal_lo, p_.goal_hi);
  const double gy = uniform(s.rng, p_.goal_lo, p_.goal_hi);
  const double friction = uniform(s.rng, p_.friction_lo, p_.friction_hi);
  const double ox = uniform(s.rng, p_.start_lo, p_.start_hi);
  const double oy = uniform(s.rng, p_.start_lo, p_.start_hi);
  s.goal_params = Vector(3);
  s.goal_params << gx, gy, friction;
  s.internal = Vector::Zero(2);
  s.observation = Vector(6);
  s.observation << ox, oy, 0.0, 0.0, gx, gy;
  return s;
}

std::pair<EnvState, StepResult> DriftPush::step(const EnvState& state, const Vector& action) const {
  const Vector a = clip_action(action, 2);
  EnvState next = state;
  const double friction = state.goal_params(2);
  Eigen::Vector2d vel = (1.0 - friction) * state.internal.head(2) + p_.push_gain * a;
  next.internal.head(2) = vel;
  next.observation(0) += vel(0);
  next.observation(1) += vel(1);
  next.observation(2) = vel(0) / p_.push_gain;
  next.observation(3) = vel(1) / p_.push_gain;
  next.step_index = state.step_index + 1;
  const double dist = std::hypot(next.observation(0) - state.goal_params(0), next.observation(1) - state.goal_params(1));
  StepResult r;
  r.success = dist < p_.tolerance && vel.norm() < p_.settle_speed;
  r.reward = r.success ? kSuccessReward : kFailureReward;
  r.done = r.success || next.step_index >= p_.episode_length;
  r.next_observation = next.observation;
  return {std::move(next), std::move(r)};
}

Vector DriftPush::true_goal(const EnvState& state) const { return state.goal_params.head(2); }

std::vector<std::pair<double, double>> DriftPush::goal_ranges() const {
  return {{p_.goal_lo, p_.goal_hi}, {p_.goal_lo, p_.goal_hi}};
}

nlohmann::json DriftPush::params_json() const { return p_; }

}  // namespace dawn::env
