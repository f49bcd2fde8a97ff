#include "dawn/trainer/config.hpp"

#include "dawn/errors.hpp"

#include <cmath>

namespace dawn::trainer {

std::string to_string(ExplicitWarmup v) {
  switch (v) {
    case ExplicitWarmup::None: return "none";
    case ExplicitWarmup::SoftAuto: return "soft-auto";
    case ExplicitWarmup::SoftFixed: return "soft-fixed";
    case ExplicitWarmup::Hard: return "hard";
  }
  return "none";
}

ExplicitWarmup explicit_warmup_from_string(const std::string& name) {
  for (auto v : {ExplicitWarmup::None, ExplicitWarmup::SoftAuto, ExplicitWarmup::SoftFixed, ExplicitWarmup::Hard}) {
    if (to_string(v) == name) return v;
  }
  throw ConfigError("unknown explicit warmup variant '" + name + "'");
}

std::string to_string(AlphaMode m) { return m == AlphaMode::Auto ? "auto" : "fixed"; }

AlphaMode alpha_mode_from_string(const std::string& name) {
  if (name == "auto") return AlphaMode::Auto;
  if (name == "fixed") return AlphaMode::Fixed;
  throw ConfigError("unknown alpha mode '" + name + "'");
}

void RunConfig::validate() const {
  if (variant.empty()) throw ConfigError("variant name must not be empty");
  if (!(gamma > 0.0 && gamma < 1.0)) throw ConfigError("gamma must lie in (0, 1)");
  if (!(lambda > 0.0)) throw ConfigError("lambda must be positive");
  if (!(utd > 0.0)) throw ConfigError("utd must be positive");
  if (env_steps_per_update < 1) throw ConfigError("env_steps_per_update must be >= 1");
  if (updates_per_chunk() < 1) throw ConfigError("env_steps_per_update * utd must give at least one update");
  if (!(tau > 0.0 && tau <= 1.0)) throw ConfigError("tau must lie in (0, 1]");
  if (!(alpha_init > 0.0)) throw ConfigError("alpha_init must be positive");
  if (!(lr > 0.0)) throw ConfigError("lr must be positive");
  if (batch < 1) throw ConfigError("batch must be >= 1");
  if (total_steps < 0) throw ConfigError("total_steps must be >= 0");
  if (explicit_warmup_steps < 0) throw ConfigError("explicit_warmup_steps must be >= 0");
  if (progressive_h < 0) throw ConfigError("progressive_h must be >= 0");
  if (eval_every < 1 || eval_episodes < 1) throw ConfigError("evaluation cadence and episodes must be >= 1");
  if (anchor_episodes < 1) throw ConfigError("anchor_episodes must be >= 1");
  if (checkpoint_every < 0) throw ConfigError("checkpoint_every must be >= 0");
  if (replay_capacity < 1) throw ConfigError("replay_capacity must be >= 1");
  if (!(grad_clip > 0.0)) throw ConfigError("grad_clip must be positive");
  if (hidden_dims.empty()) throw ConfigError("hidden_dims must not be empty");
  if (critic_head == agent::HeadKind::Tqc && (tqc_drop < 0 || tqc_drop >= quantiles)) {
    throw ConfigError("TQC drop count must satisfy 0 <= d < N");
  }
  if (critic_head == agent::HeadKind::C51 && !std::isnan(v_min) && !(v_min < v_max)) {
    throw ConfigError("categorical support needs v_min < v_max");
  }
  warmup.validate();
}

double RunConfig::resolved_target_entropy(int action_dim) const {
  return std::isnan(target_entropy) ? -static_cast<double>(action_dim) : target_entropy;
}

double RunConfig::resolved_v_min(int episode_length) const {
  if (!std::isnan(v_min)) return v_min;
  if (env_id == "point-insert-2d") return -35.0;
  return agent::categorical_v_min(gamma, episode_length);
}

int RunConfig::updates_per_chunk() const {
  return static_cast<int>(std::lround(static_cast<double>(env_steps_per_update) * utd));
}

bool RunConfig::operator==(const RunConfig& other) const {
  nlohmann::json a = *this, b = other;
  return a == b;
}

namespace {

nlohmann::json nan_as_null(double v) { return std::isnan(v) ? nlohmann::json(nullptr) : nlohmann::json(v); }

double null_as_nan(const nlohmann::json& j) {
  return j.is_null() ? std::numeric_limits<double>::quiet_NaN() : j.get<double>();
}

}  // namespace

void to_json(nlohmann::json& j, const RunConfig& c) {
  j = nlohmann::json::object();
  j["variant"] = c.variant;
  j["profile"] = c.profile;
  j["env_id"] = c.env_id;
  j["env_overrides"] = c.env_overrides;
  j["base_policy"] = c.base_policy;
  j["lambda"] = c.lambda;
  j["warmup"] = c.warmup;
  j["critic_head"] = agent::to_string(c.critic_head);
  j["critic_norm"] = diff::to_string(c.critic_norm);
  j["actor_norm"] = diff::to_string(c.actor_norm);
  j["hidden_dims"] = c.hidden_dims;
  j["explicit_warmup"] = to_string(c.explicit_warmup);
  j["explicit_warmup_steps"] = c.explicit_warmup_steps;
  j["progressive_h"] = c.progressive_h;
  j["gamma"] = c.gamma;
  j["alpha_init"] = c.alpha_init;
  j["alpha_mode"] = to_string(c.alpha_mode);
  j["target_entropy"] = nan_as_null(c.target_entropy);
  j["lr"] = c.lr;
  j["batch"] = c.batch;
  j["env_steps_per_update"] = c.env_steps_per_update;
  j["utd"] = c.utd;
  j["tau"] = c.tau;
  j["grad_clip"] = c.grad_clip;
  j["replay_capacity"] = c.replay_capacity;
  j["init_log_std"] = c.init_log_std;
  j["atoms"] = c.atoms;
  j["v_min"] = nan_as_null(c.v_min);
  j["v_max"] = c.v_max;
  j["quantiles"] = c.quantiles;
  j["tqc_heads"] = c.tqc_heads;
  j["tqc_drop"] = c.tqc_drop;
  j["kappa"] = c.kappa;
  j["total_steps"] = c.total_steps;
  j["seed"] = c.seed;
  j["eval_every"] = c.eval_every;
  j["eval_episodes"] = c.eval_episodes;
  j["anchor_episodes"] = c.anchor_episodes;
  j["diagnostic_batch"] = c.diagnostic_batch;
  j["checkpoint_every"] = c.checkpoint_every;
  j["stop_at_success"] = c.stop_at_success;
}

void from_json(const nlohmann::json& j, RunConfig& c) {
  static const std::vector<std::string> known = {
      "variant",        "profile",         "env_id",         "env_overrides",  "base_policy",
      "lambda",         "warmup",          "critic_head",    "critic_norm",    "actor_norm",
      "hidden_dims",    "explicit_warmup", "explicit_warmup_steps",            "progressive_h",
      "gamma",          "alpha_init",      "alpha_mode",     "target_entropy", "lr",
      "batch",          "env_steps_per_update",              "utd",            "tau",
      "grad_clip",      "replay_capacity", "init_log_std",   "atoms",          "v_min",
      "v_max",          "quantiles",       "tqc_heads",      "tqc_drop",       "kappa",
      "total_steps",    "seed",            "eval_every",     "eval_episodes",  "anchor_episodes",
      "diagnostic_batch",                  "checkpoint_every",                 "stop_at_success"};
  if (!j.is_object()) throw ConfigError("run config must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (std::find(known.begin(), known.end(), key) == known.end()) {
      throw ConfigError("unknown run config key '" + key + "'");
    }
  }
  // Missing keys keep their defaults so hand-written configs can be partial.
  auto get = [&j](const char* key, auto& out) {
    if (j.contains(key)) out = j.at(key).get<std::decay_t<decltype(out)>>();
  };
  get("variant", c.variant);
  get("profile", c.profile);
  get("env_id", c.env_id);
  if (j.contains("env_overrides")) c.env_overrides = j.at("env_overrides");
  get("base_policy", c.base_policy);
  get("lambda", c.lambda);
  if (j.contains("warmup")) {
    nlohmann::json w = c.warmup;
    for (const auto& [key, value] : j.at("warmup").items()) {
      if (!w.contains(key)) throw ConfigError("unknown warmup key '" + key + "'");
      w[key] = value;
    }
    c.warmup = w.get<buffer::WarmupStrategy>();
  }
  if (j.contains("critic_head")) c.critic_head = agent::head_kind_from_string(j.at("critic_head").get<std::string>());
  if (j.contains("critic_norm")) c.critic_norm = diff::hidden_norm_from_string(j.at("critic_norm").get<std::string>());
  if (j.contains("actor_norm")) c.actor_norm = diff::hidden_norm_from_string(j.at("actor_norm").get<std::string>());
  get("hidden_dims", c.hidden_dims);
  if (j.contains("explicit_warmup")) {
    c.explicit_warmup = explicit_warmup_from_string(j.at("explicit_warmup").get<std::string>());
  }
  get("explicit_warmup_steps", c.explicit_warmup_steps);
  get("progressive_h", c.progressive_h);
  get("gamma", c.gamma);
  get("alpha_init", c.alpha_init);
  if (j.contains("alpha_mode")) c.alpha_mode = alpha_mode_from_string(j.at("alpha_mode").get<std::string>());
  if (j.contains("target_entropy")) c.target_entropy = null_as_nan(j.at("target_entropy"));
  get("lr", c.lr);
  get("batch", c.batch);
  get("env_steps_per_update", c.env_steps_per_update);
  get("utd", c.utd);
  get("tau", c.tau);
  get("grad_clip", c.grad_clip);
  get("replay_capacity", c.replay_capacity);
  get("init_log_std", c.init_log_std);
  get("atoms", c.atoms);
  if (j.contains("v_min")) c.v_min = null_as_nan(j.at("v_min"));
  get("v_max", c.v_max);
  get("quantiles", c.quantiles);
  get("tqc_heads", c.tqc_heads);
  get("tqc_drop", c.tqc_drop);
  get("kappa", c.kappa);
  get("total_steps", c.total_steps);
  get("seed", c.seed);
  get("eval_every", c.eval_every);
  get("eval_episodes", c.eval_episodes);
  get("anchor_episodes", c.anchor_episodes);
  get("diagnostic_batch", c.diagnostic_batch);
  get("checkpoint_every", c.checkpoint_every);
  get("stop_at_success", c.stop_at_success);
}

void apply_profile(RunConfig& config, const std::string& profile) {
  if (profile == "desk") {
    config.batch = 256;
    config.hidden_dims = {128, 128};
    config.total_steps = 200000;
    config.eval_every = 2000;
  } else if (profile == "paper") {
    config.batch = 1024;
    config.hidden_dims = {256, 256};
    config.total_steps = 1000000;
    config.eval_every = 10000;
  } else {
    throw ConfigError("unknown profile '" + profile + "' (expected desk or paper)");
  }
  config.profile = profile;
}

RunConfig profile_defaults(const std::string& profile) {
  RunConfig c;
  apply_profile(c, profile);
  return c;
}

double default_lambda(const std::string& env_id) { return env_id == "drift-push" ? 0.2 : 0.1; }

std::int64_t default_progressive_h(const std::string& env_id) {
  if (env_id == "reach-nd") return 100000;
  if (env_id == "drift-push") return 300000;
  return 30000;
}

}  // namespace dawn::trainer
