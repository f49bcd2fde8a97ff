#include "dawn/trainer/run.hpp"

#include "dawn/errors.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace dawn::trainer {

namespace fs = std::filesystem;

namespace {

enum Stream : std::uint64_t {
  kInit = 1,
  kAnchor,
  kWarmup,
  kEnvReset,
  kActing,
  kReplay,
  kUpdate,
  kEval,
  kDiagnostic,
  kGate,
};

std::string format_value(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void write_json(const fs::path& path, const nlohmann::json& j) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

std::string step_dir_name(std::int64_t step) {
  std::ostringstream s;
  s << "step_" << std::setw(9) << std::setfill('0') << step;
  return s.str();
}

}  // namespace

std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

agent::PolicySpec policy_spec(const RunConfig& config, const env::Environment& env) {
  agent::PolicySpec s;
  s.obs_dim = env.obs_dim();
  s.action_dim = env.action_dim();
  s.hidden_dims = config.hidden_dims;
  s.hidden_norm = config.actor_norm;
  s.init_log_std = config.init_log_std;
  return s;
}

agent::CriticSpec critic_spec(const RunConfig& config, const env::Environment& env) {
  agent::CriticSpec s;
  s.obs_dim = env.obs_dim();
  s.action_dim = env.action_dim();
  s.hidden_dims = config.hidden_dims;
  s.hidden_norm = config.critic_norm;
  s.head = config.critic_head;
  s.ensemble = config.critic_head == agent::HeadKind::Tqc ? config.tqc_heads : 0;
  s.atoms = config.atoms;
  s.v_min = config.resolved_v_min(env.episode_length());
  s.v_max = config.v_max;
  s.quantiles = config.quantiles;
  s.tqc_drop = config.tqc_drop;
  s.kappa = config.kappa;
  return s;
}

Agent make_agent(const RunConfig& config, const env::Environment& env, std::mt19937_64& rng) {
  Agent a{ResidualPolicy(policy_spec(config, env), rng), CriticEnsemble(critic_spec(config, env), rng),
          AlphaState(config.alpha_init, config.alpha_mode, config.lr)};
  return a;
}

void save_checkpoint(const Agent& agent, const RunConfig& config, std::int64_t step, const fs::path& dir) {
  fs::create_directories(dir);
  nlohmann::json files = nlohmann::json::array();
  auto save = [&](const diff::ParameterSet& p, const std::string& name) {
    p.save(dir / name);
    files.push_back(name);
  };
  save(agent.policy.params(), "policy.bin");
  for (int k = 0; k < agent.critic.size(); ++k) {
    save(agent.critic.head(k).params(), "critic_" + std::to_string(k) + ".bin");
    save(agent.critic.target_head(k).params(), "critic_target_" + std::to_string(k) + ".bin");
  }
  save(agent.alpha.params(), "alpha.bin");
  write_json(dir / "manifest.json", {{"format", "dawn-checkpoint-v1"},
                                     {"step", step},
                                     {"config", config},
                                     {"policy_spec", agent.policy.spec()},
                                     {"critic_spec", agent.critic.spec()},
                                     {"files", files}});
}

Checkpoint load_checkpoint(const fs::path& dir) {
  std::ifstream in(dir / "manifest.json");
  if (!in) throw ConfigError("missing checkpoint manifest in " + dir.string());
  nlohmann::json m;
  try {
    m = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed checkpoint manifest: ") + e.what());
  }
  if (m.value("format", "") != "dawn-checkpoint-v1") throw ConfigError("unsupported checkpoint format");
  Checkpoint c;
  c.config = m.at("config").get<RunConfig>();
  c.step = m.at("step").get<std::int64_t>();
  std::mt19937_64 rng(0);
  c.agent = Agent{ResidualPolicy(m.at("policy_spec").get<agent::PolicySpec>(), rng),
                  CriticEnsemble(m.at("critic_spec").get<agent::CriticSpec>(), rng),
                  AlphaState(c.config.alpha_init, c.config.alpha_mode, c.config.lr)};
  c.agent.policy.params().load(dir / "policy.bin");
  for (int k = 0; k < c.agent.critic.size(); ++k) {
    c.agent.critic.head(k).params().load(dir / ("critic_" + std::to_string(k) + ".bin"));
    c.agent.critic.target_head(k).params().load(dir / ("critic_target_" + std::to_string(k) + ".bin"));
  }
  c.agent.alpha.params().load(dir / "alpha.bin");
  return c;
}

double evaluate_policy(const env::Environment& env, const base::BasePolicy& base,
                       const agent::ResidualPolicy& policy, double lambda, const std::vector<std::uint64_t>& seeds) {
  if (seeds.empty()) throw UsageError("evaluate_policy: no episodes");
  std::vector<env::EnvState> states;
  for (auto s : seeds) states.push_back(env.reset(s));
  std::vector<std::size_t> active(states.size());
  for (std::size_t i = 0; i < active.size(); ++i) active[i] = i;
  int successes = 0;
  Matrix obs(0, env.obs_dim());
  while (!active.empty()) {
    obs.resize(static_cast<Eigen::Index>(active.size()), env.obs_dim());
    for (std::size_t r = 0; r < active.size(); ++r) {
      obs.row(static_cast<Eigen::Index>(r)) = states[active[r]].observation.transpose();
    }
    const Matrix actions = agent::combine(base.action_batch(obs), policy.mean_action(obs), lambda);
    std::vector<std::size_t> still;
    for (std::size_t r = 0; r < active.size(); ++r) {
      auto [next, res] = env.step(states[active[r]], actions.row(static_cast<Eigen::Index>(r)).transpose());
      states[active[r]] = std::move(next);
      if (res.done) {
        successes += res.success ? 1 : 0;
      } else {
        still.push_back(active[r]);
      }
    }
    active = std::move(still);
  }
  return static_cast<double>(successes) / static_cast<double>(seeds.size());
}

diagnostics::AnchorSet anchor_subset(const diagnostics::AnchorSet& anchors, Eigen::Index n) {
  if (n >= anchors.size()) return anchors;
  diagnostics::AnchorSet out;
  out.obs.resize(n, anchors.obs.cols());
  out.action.resize(n, anchors.action.cols());
  out.returns.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::Index src = i * anchors.size() / n;
    out.obs.row(i) = anchors.obs.row(src);
    out.action.row(i) = anchors.action.row(src);
    out.returns(i) = anchors.returns(src);
  }
  out.trajectories = anchors.trajectories;
  out.success_rate = anchors.success_rate;
  return out;
}

std::vector<std::pair<std::int64_t, double>> RunResult::series(const std::string& metric) const {
  std::vector<std::pair<std::int64_t, double>> out;
  for (const auto& m : metrics) {
    if (m.metric == metric) out.emplace_back(m.step, m.value);
  }
  return out;
}

namespace {

constexpr Eigen::Index kAnatomySamples = 1024;

class Runner {
 public:
  Runner(const RunConfig& config, const RunOptions& options)
      : cfg_(config),
        opt_(options),
        env_(env::make_env(cfg_.env_id, cfg_.env_overrides)),
        base_(base::make_base_policy(*env_, cfg_.base_policy)),
        init_rng_(stream_seed(cfg_.seed, kInit)),
        agent_(make_agent(cfg_, *env_, init_rng_)),
        buffer_(env_->obs_dim(), env_->action_dim(), cfg_.replay_capacity),
        warmup_rng_(stream_seed(cfg_.seed, kWarmup)),
        reset_rng_(stream_seed(cfg_.seed, kEnvReset)),
        act_rng_(stream_seed(cfg_.seed, kActing)),
        replay_rng_(stream_seed(cfg_.seed, kReplay)),
        update_rng_(stream_seed(cfg_.seed, kUpdate)),
        diag_rng_(stream_seed(cfg_.seed, kDiagnostic)),
        gate_rng_(stream_seed(cfg_.seed, kGate)) {
    result_.config = cfg_;
    target_entropy_ = cfg_.resolved_target_entropy(env_->action_dim());
    for (int k = 0; k < agent_.critic.size(); ++k) {
      critic_opt_.emplace_back(agent_.critic.head(k).params(), diff::Adam::Options{.lr = cfg_.lr});
    }
    actor_opt_ = diff::Adam(agent_.policy.params(), {.lr = cfg_.lr});
    std::mt19937_64 eval_rng(stream_seed(cfg_.seed, kEval));
    for (int i = 0; i < cfg_.eval_episodes; ++i) eval_seeds_.push_back(eval_rng());
    anchors_ = diagnostics::collect_anchor_set(*env_, base_, cfg_.anchor_episodes, stream_seed(cfg_.seed, kAnchor),
                                               cfg_.gamma);
    if (!opt_.out_dir.empty()) {
      fs::create_directories(opt_.out_dir);
      nlohmann::json j = cfg_;
      write_json(opt_.out_dir / "config.json", j);
      csv_.open(opt_.out_dir / "metrics.csv");
      if (!csv_) throw ConfigError("cannot write metrics.csv in " + opt_.out_dir.string());
      csv_ << kMetricsHeader << '\n';
    }
  }

  RunResult run() {
    try {
      emit_diagnostics(0);
      collect();
      if (cfg_.explicit_warmup != ExplicitWarmup::None) explicit_warmup();
      online();
      if (opt_.dump_buffer && !opt_.out_dir.empty()) buffer_.dump(opt_.out_dir / "replay.bin");
    } catch (const RunAbort& e) {
      result_.aborted = true;
      result_.error = e.what();
    }
    result_.steps = step_;
    result_.buffer_size = buffer_.size();
    return std::move(result_);
  }

 private:
  void emit(std::int64_t step, const std::string& metric, double value) {
    MetricRow row{step, metric, value};
    if (csv_.is_open()) {
      csv_ << step << ',' << cfg_.variant << ',' << cfg_.seed << ',' << metric << ',' << format_value(value) << '\n';
    }
    if (opt_.sink) opt_.sink(row);
    result_.metrics.push_back(std::move(row));
  }

  void collect() {
    result_.warmup =
        buffer::collect_warmup(cfg_.warmup, *env_, base_, agent_.policy, cfg_.lambda, buffer_, warmup_rng_);
    next_episode_id_ = result_.warmup.next_episode_id;
    step_ = static_cast<std::int64_t>(buffer_.size());
    emit(step_, "warmup_success_rate", result_.warmup.success_rate());
    emit(step_, "buffer_size", static_cast<double>(buffer_.size()));
  }

  void explicit_warmup() {
    if (buffer_.empty()) throw ConfigError("explicit warmup needs warmup transitions");
    const bool hard = cfg_.explicit_warmup == ExplicitWarmup::Hard;
    AlphaState alpha(cfg_.alpha_init,
                     cfg_.explicit_warmup == ExplicitWarmup::SoftAuto ? AlphaMode::Auto : AlphaMode::Fixed, cfg_.lr);
    const auto probe = anchor_subset(anchors_, 2048);
    auto record = [&](std::int64_t i, double critic_loss, double entropy_term, double reward_abs) {
      const auto ge = diagnostics::grounding_error(agent_.critic, probe);
      emit(i, "explicit_alpha", alpha.alpha());
      emit(i, "explicit_entropy_term", entropy_term);
      emit(i, "explicit_reward_abs", reward_abs);
      emit(i, "explicit_critic_loss", critic_loss);
      emit(i, "explicit_q_anchor_mean", ge.q_mean);
      emit(i, "explicit_return_mean", ge.return_mean);
      emit(i, "explicit_grounding_error", ge.mean_heads);
    };
    record(0, 0.0, 0.0, 0.0);
    double loss_acc = 0.0, ent_acc = 0.0, rew_acc = 0.0;
    int n = 0;
    for (std::int64_t i = 1; i <= cfg_.explicit_warmup_steps; ++i) {
      const Batch batch = buffer_.sample(static_cast<std::size_t>(cfg_.batch), replay_rng_);
      const NextAction next = sample_next(batch, base_, agent_.policy, cfg_.lambda, update_rng_);
      const double a = hard ? 0.0 : alpha.alpha();
      const CriticTarget target = build_target(batch, agent_.critic, next, a, cfg_.gamma);
      const auto losses = critic_update(agent_.critic, critic_opt_, batch, target, cfg_.grad_clip);
      // The frozen residual policy still feeds the temperature loss.
      const agent::PolicyDraw draw = agent_.policy.sample(batch.obs, update_rng_);
      if (!hard) alpha.update(draw.log_prob, target_entropy_);
      agent_.critic.ema_update(cfg_.tau);
      loss_acc += mean(losses);
      ent_acc += (a * next.log_prob.array()).abs().mean();
      rew_acc += batch.reward.cwiseAbs().mean();
      ++n;
      if (i % 100 == 0 || i == cfg_.explicit_warmup_steps) {
        record(i, loss_acc / n, ent_acc / n, rew_acc / n);
        loss_acc = ent_acc = rew_acc = 0.0;
        n = 0;
      }
    }
    if (!hard) agent_.alpha = alpha;
  }

  static double mean(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return v.empty() ? 0.0 : s / static_cast<double>(v.size());
  }

  void online() {
    const std::int64_t start = step_;
    std::int64_t next_eval = (step_ / cfg_.eval_every + 1) * cfg_.eval_every;
    std::int64_t next_ckpt = cfg_.checkpoint_every > 0 ? (step_ / cfg_.checkpoint_every + 1) * cfg_.checkpoint_every
                                                       : std::numeric_limits<std::int64_t>::max();
    if (step_ < cfg_.total_steps) state_ = env_->reset(reset_rng_());
    // Chunks stop early at evaluation and checkpoint boundaries; the fractional
    // accumulator keeps the long-run ratio at exactly utd updates per env step.
    double updates_due = 0.0;
    while (step_ < cfg_.total_steps) {
      const auto n = std::min({static_cast<std::int64_t>(cfg_.env_steps_per_update), cfg_.total_steps - step_,
                               next_eval - step_, next_ckpt - step_});
      for (std::int64_t i = 0; i < n; ++i) act(step_ + i - start);
      step_ += n;
      updates_due += static_cast<double>(n) * cfg_.utd;
      while (updates_due >= 1.0 - 1e-9) {
        update();
        updates_due -= 1.0;
      }
      bool stop = false;
      if (step_ >= next_eval) {
        const double success = emit_diagnostics(step_);
        stop = cfg_.stop_at_success > 0.0 && success >= cfg_.stop_at_success;
        next_eval = (step_ / cfg_.eval_every + 1) * cfg_.eval_every;
      }
      if (step_ >= next_ckpt) {
        checkpoint();
        next_ckpt = (step_ / cfg_.checkpoint_every + 1) * cfg_.checkpoint_every;
      }
      if (stop) break;
    }
  }

  void act(std::int64_t online_step) {
    const Vector a_base = base_.action(state_.observation);
    const bool residual = cfg_.progressive_h <= 0 || progressive_gate(online_step, cfg_.progressive_h, gate_rng_);
    Vector a_res = Vector::Zero(env_->action_dim());
    if (residual) {
      const agent::PolicyDraw d = agent_.policy.sample(state_.observation.transpose(), act_rng_);
      a_res = d.action.row(0).transpose();
    }
    buffer::Transition t;
    t.obs = state_.observation;
    t.a_base = a_base;
    t.a_res = a_res;
    t.a_executed = agent::combine(a_base, a_res, cfg_.lambda);
    auto [next, r] = env_->step(state_, t.a_executed);
    t.reward = r.reward;
    t.next_obs = next.observation;
    t.done = r.success;
    t.episode_id = next_episode_id_;
    buffer_.add(t);
    if (r.done) {
      ++next_episode_id_;
      state_ = env_->reset(reset_rng_());
    } else {
      state_ = std::move(next);
    }
  }

  void update() {
    if (buffer_.empty()) return;
    const Batch batch = buffer_.sample(static_cast<std::size_t>(cfg_.batch), replay_rng_);
    const NextAction next = sample_next(batch, base_, agent_.policy, cfg_.lambda, update_rng_);
    const CriticTarget target = build_target(batch, agent_.critic, next, agent_.alpha.alpha(), cfg_.gamma);
    critic_loss_ += mean(critic_update(agent_.critic, critic_opt_, batch, target, cfg_.grad_clip));
    const Matrix noise = agent::standard_normal(batch.size(), env_->action_dim(), update_rng_);
    const ActorStats s = actor_update(agent_.policy, actor_opt_, agent_.critic, batch, agent_.alpha.alpha(),
                                      cfg_.lambda, noise, cfg_.grad_clip);
    actor_loss_ += s.loss;
    log_prob_ += s.log_prob.mean();
    agent_.alpha.update(s.log_prob, target_entropy_);
    agent_.critic.ema_update(cfg_.tau);
    ++updates_since_eval_;
  }

  double emit_diagnostics(std::int64_t step) {
    diagnostics::MetricRecord rec;
    rec.step = step;
    rec.success_rate = evaluate_policy(*env_, base_, agent_.policy, cfg_.lambda, eval_seeds_);
    const auto ge = diagnostics::grounding_error(agent_.critic, anchors_);
    rec.grounding_error = ge.mean_heads;
    rec.grounding_error_min = ge.min_heads;
    rec.q_anchor_mean = ge.q_mean;
    rec.diverged = divergence_.observe(ge.mean_heads);
    if (!buffer_.empty()) {
      const Batch b = buffer_.sample(static_cast<std::size_t>(cfg_.diagnostic_batch), diag_rng_);
      rec.sensitivity = diagnostics::critic_sensitivity(agent_.critic, agent_.policy, b.obs, b.a_base, cfg_.lambda);
      rec.value_difference =
          diagnostics::value_difference(agent_.critic, agent_.policy, b.obs, b.a_base, cfg_.lambda);
    }
    rec.alpha = agent_.alpha.alpha();
    const double u = std::max(updates_since_eval_, 1);
    rec.critic_loss = critic_loss_ / u;
    rec.actor_loss = actor_loss_ / u;
    for (const auto& [name, value] : rec.items()) emit(step, name, value);
    emit(step, "anchor_return_mean", ge.return_mean);
    if (updates_since_eval_ > 0) emit(step, "log_prob", log_prob_ / u);
    critic_loss_ = actor_loss_ = log_prob_ = 0.0;
    updates_since_eval_ = 0;
    result_.final_success = rec.success_rate;
    return rec.success_rate;
  }

  void checkpoint() {
    if (opt_.out_dir.empty()) return;
    const fs::path dir = opt_.out_dir / "checkpoints" / step_dir_name(step_);
    save_checkpoint(agent_, cfg_, step_, dir);
    if (opt_.anatomy_at_checkpoints) {
      const auto probe = anchor_subset(anchors_, kAnatomySamples);
      auto report = diagnostics::q_anatomy(agent_.critic, agent_.policy, probe.obs, probe.action, cfg_.lambda);
      report.step = step_;
      write_json(dir / "anatomy.json", report.to_json());
      report.write_histogram_csv(dir / "anatomy_hist.csv");
    }
    result_.last_checkpoint = dir;
  }

  RunConfig cfg_;
  RunOptions opt_;
  std::unique_ptr<env::Environment> env_;
  base::BasePolicy base_;
  std::mt19937_64 init_rng_;
  Agent agent_;
  buffer::ReplayBuffer buffer_;
  std::mt19937_64 warmup_rng_, reset_rng_, act_rng_, replay_rng_, update_rng_, diag_rng_, gate_rng_;
  std::vector<diff::Adam> critic_opt_;
  diff::Adam actor_opt_;
  double target_entropy_ = 0.0;
  std::vector<std::uint64_t> eval_seeds_;
  diagnostics::AnchorSet anchors_;
  diagnostics::DivergenceMonitor divergence_;
  env::EnvState state_;
  std::int64_t step_ = 0;
  std::int64_t next_episode_id_ = 0;
  double critic_loss_ = 0.0, actor_loss_ = 0.0, log_prob_ = 0.0;
  int updates_since_eval_ = 0;
  std::ofstream csv_;
  RunResult result_;
};

}  // namespace

RunResult run_dawn(const RunConfig& config, const RunOptions& options) {
  config.validate();
  Runner runner(config, options);
  return runner.run();
}

}  // namespace dawn::trainer
