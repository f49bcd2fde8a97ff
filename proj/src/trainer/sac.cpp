#include "dawn/trainer/sac.hpp"

#include "dawn/errors.hpp"

#include <cmath>

namespace dawn::trainer {

using diff::Tape;
using diff::Var;

AlphaState::AlphaState(double alpha_init, AlphaMode mode, double lr) : mode_(mode) {
  if (!(alpha_init > 0.0)) throw ConfigError("alpha_init must be positive");
  params_.add("log_alpha", Matrix::Constant(1, 1, std::log(alpha_init)));
  opt_ = diff::Adam(params_, {.lr = lr});
}

double AlphaState::alpha() const { return std::exp(log_alpha()); }

double AlphaState::gradient(const Vector& log_probs, double target_entropy) const {
  return -alpha() * (log_probs.array() + target_entropy).mean();
}

double AlphaState::update(const Vector& log_probs, double target_entropy) {
  if (mode_ == AlphaMode::Fixed) return alpha();
  params_.zero_grad();
  params_[0].grad(0, 0) = gradient(log_probs, target_entropy);
  opt_.step(params_);
  return alpha();
}

NextAction sample_next(const Batch& batch, const base::BasePolicy& base, const ResidualPolicy& policy,
                       double lambda, std::mt19937_64& rng) {
  const Matrix a_base = base.action_batch(batch.next_obs);
  agent::PolicyDraw draw = policy.sample(batch.next_obs, rng);
  return {agent::combine(a_base, draw.action, lambda), std::move(draw.log_prob)};
}

namespace {

Vector continuation(const Batch& batch, double gamma) {
  return (gamma * (1.0 - batch.done.array())).matrix();
}

// Index of the target head with the smallest expectation, per row.
std::vector<int> pessimistic_head(const Matrix& expectations) {
  std::vector<int> idx(static_cast<std::size_t>(expectations.rows()));
  for (Eigen::Index b = 0; b < expectations.rows(); ++b) {
    Eigen::Index k = 0;
    expectations.row(b).minCoeff(&k);
    idx[static_cast<std::size_t>(b)] = static_cast<int>(k);
  }
  return idx;
}

Matrix shift_quantiles(const Matrix& next, const Batch& batch, const NextAction& na, double alpha, double gamma) {
  const Vector disc = continuation(batch, gamma);
  Matrix y = next;
  y.colwise() -= alpha * na.log_prob;
  y.array().colwise() *= disc.array();
  y.colwise() += batch.reward;
  return y;
}

}  // namespace

Vector soft_target(const Batch& batch, const CriticEnsemble& critic, const NextAction& next, double alpha,
                   double gamma) {
  const Matrix input = agent::critic_input(batch.next_obs, next.action);
  const Vector q_min = critic.all_expectations(input, true).rowwise().minCoeff();
  const Vector disc = continuation(batch, gamma);
  return (batch.reward.array() + disc.array() * (q_min.array() - alpha * next.log_prob.array())).matrix();
}

Vector hard_target(const Batch& batch, const CriticEnsemble& critic, const NextAction& next, double gamma) {
  return soft_target(batch, critic, next, 0.0, gamma);
}

Matrix c51_target(const Batch& batch, const CriticEnsemble& critic, const NextAction& next, double alpha,
                  double gamma) {
  const Matrix input = agent::critic_input(batch.next_obs, next.action);
  std::vector<Matrix> probs;
  for (int k = 0; k < critic.size(); ++k) probs.push_back(critic.predict(k, input, true));
  Matrix e(input.rows(), critic.size());
  for (int k = 0; k < critic.size(); ++k) e.col(k) = probs[static_cast<std::size_t>(k)] * critic.atoms();
  const auto pick = pessimistic_head(e);
  Matrix chosen(input.rows(), critic.atoms().size());
  for (Eigen::Index b = 0; b < chosen.rows(); ++b) chosen.row(b) = probs[static_cast<std::size_t>(pick[b])].row(b);
  const Vector entropy = alpha * next.log_prob;
  return agent::project_categorical(chosen, critic.atoms(), batch.reward, continuation(batch, gamma), entropy);
}

Matrix quantile_target(const Batch& batch, const CriticEnsemble& critic, const NextAction& next, double alpha,
                       double gamma) {
  const Matrix input = agent::critic_input(batch.next_obs, next.action);
  std::vector<Matrix> q;
  for (int k = 0; k < critic.size(); ++k) q.push_back(critic.predict(k, input, true));
  Matrix e(input.rows(), critic.size());
  for (int k = 0; k < critic.size(); ++k) e.col(k) = q[static_cast<std::size_t>(k)].rowwise().mean();
  const auto pick = pessimistic_head(e);
  Matrix chosen(input.rows(), q.front().cols());
  for (Eigen::Index b = 0; b < chosen.rows(); ++b) chosen.row(b) = q[static_cast<std::size_t>(pick[b])].row(b);
  return shift_quantiles(chosen, batch, next, alpha, gamma);
}

Matrix tqc_target(const Batch& batch, const CriticEnsemble& critic, const NextAction& next, double alpha,
                  double gamma, int drop) {
  const Matrix input = agent::critic_input(batch.next_obs, next.action);
  std::vector<Matrix> q;
  for (int k = 0; k < critic.size(); ++k) q.push_back(critic.predict(k, input, true));
  return shift_quantiles(agent::truncated_pool(q, drop), batch, next, alpha, gamma);
}

CriticTarget build_target(const Batch& batch, const CriticEnsemble& critic, const NextAction& next, double alpha,
                          double gamma) {
  CriticTarget t;
  switch (critic.spec().head) {
    case agent::HeadKind::Scalar: t.scalar = soft_target(batch, critic, next, alpha, gamma); break;
    case agent::HeadKind::C51: t.dist = c51_target(batch, critic, next, alpha, gamma); break;
    case agent::HeadKind::Quantile: t.dist = quantile_target(batch, critic, next, alpha, gamma); break;
    case agent::HeadKind::Tqc: t.dist = tqc_target(batch, critic, next, alpha, gamma, critic.spec().tqc_drop); break;
  }
  return t;
}

Var critic_loss(Tape& tape, CriticEnsemble& critic, int k, const Batch& batch, const CriticTarget& target) {
  Var input = tape.constant(agent::critic_input(batch.obs, batch.a_executed));
  Var out = critic.forward(tape, k, input);
  switch (critic.spec().head) {
    case agent::HeadKind::Scalar:
      return diff::mean_all(diff::square(diff::sub(out, tape.constant(target.scalar))));
    case agent::HeadKind::C51: {
      Var ce = diff::sum_rows(diff::mul(tape.constant(target.dist), diff::log_softmax_rows(out)));
      return diff::scale(diff::mean_all(ce), -1.0);
    }
    case agent::HeadKind::Quantile:
    case agent::HeadKind::Tqc:
      return diff::quantile_huber(out, target.dist, critic.taus(), critic.spec().kappa);
  }
  throw UsageError("critic_loss: unknown head");
}

std::vector<double> critic_update(CriticEnsemble& critic, std::vector<diff::Adam>& optimizers, const Batch& batch,
                                  const CriticTarget& target, double grad_clip) {
  if (static_cast<int>(optimizers.size()) != critic.size()) throw UsageError("one optimizer per critic head");
  std::vector<double> losses;
  for (int k = 0; k < critic.size(); ++k) {
    auto& params = critic.head(k).params();
    params.zero_grad();
    Tape tape;
    Var loss = critic_loss(tape, critic, k, batch, target);
    if (!std::isfinite(loss.item())) throw RunAbort("non-finite critic loss");
    tape.backward(loss);
    params.clip_grad_norm(grad_clip);
    optimizers[static_cast<std::size_t>(k)].step(params);
    losses.push_back(loss.item());
  }
  return losses;
}

Var actor_loss(Tape& tape, ResidualPolicy& policy, CriticEnsemble& critic, const Batch& batch, double alpha,
               double lambda, const Matrix& noise, ActorStats* stats) {
  Var obs = tape.constant(batch.obs);
  agent::PolicySample s = policy.sample(tape, obs, noise);
  Var action = agent::combine(tape, batch.a_base, s.action, lambda);
  Var input = diff::concat_cols(obs, action);
  Var q = critic.expectation(tape, 0, input, false);
  const bool mean_heads = critic.spec().head == agent::HeadKind::Tqc;
  for (int k = 1; k < critic.size(); ++k) {
    Var qk = critic.expectation(tape, k, input, false);
    q = mean_heads ? diff::add(q, qk) : diff::minimum(q, qk);
  }
  if (mean_heads) q = diff::scale(q, 1.0 / critic.size());
  Var loss = diff::mean_all(diff::sub(diff::scale(s.log_prob, alpha), q));
  if (stats) {
    stats->loss = loss.item();
    stats->q_mean = q.value().mean();
    stats->log_prob = s.log_prob.value().col(0);
  }
  return loss;
}

ActorStats actor_update(ResidualPolicy& policy, diff::Adam& optimizer, CriticEnsemble& critic, const Batch& batch,
                        double alpha, double lambda, const Matrix& noise, double grad_clip) {
  ActorStats stats;
  policy.params().zero_grad();
  Tape tape;
  Var loss = actor_loss(tape, policy, critic, batch, alpha, lambda, noise, &stats);
  if (!std::isfinite(stats.loss)) throw RunAbort("non-finite actor loss");
  tape.backward(loss);
  policy.params().clip_grad_norm(grad_clip);
  optimizer.step(policy.params());
  return stats;
}

bool progressive_gate(std::int64_t t, std::int64_t horizon, std::mt19937_64& rng) {
  if (horizon <= 0) throw ConfigError("progressive horizon must be positive");
  if (t <= 0) return false;
  if (t >= horizon) return true;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  return u(rng) < static_cast<double>(t) / static_cast<double>(horizon);
}

}  // namespace dawn::trainer
