#pragma once

#include "dawn/agent/critic.hpp"
#include "dawn/agent/policy.hpp"
#include "dawn/basepolicy/base_policy.hpp"
#include "dawn/buffer/replay.hpp"
#include "dawn/trainer/config.hpp"

#include <random>
#include <vector>

namespace dawn::trainer {

using agent::CriticEnsemble;
using agent::ResidualPolicy;
using buffer::Batch;
using diff::Matrix;
using diff::Vector;

/// Entropy temperature, optimized in log space so alpha stays positive.
class AlphaState {
 public:
  AlphaState() : AlphaState(0.01, AlphaMode::Auto, 1e-4) {}
  AlphaState(double alpha_init, AlphaMode mode, double lr);

  double alpha() const;
  double log_alpha() const { return params_[0].value(0, 0); }
  AlphaMode mode() const { return mode_; }
  diff::ParameterSet& params() { return params_; }
  const diff::ParameterSet& params() const { return params_; }

  /// One Adam step on mean(-alpha * (log_prob + target_entropy)) w.r.t. log alpha,
  /// with log_prob held constant. No-op in fixed mode. Returns the new alpha.
  double update(const Vector& log_probs, double target_entropy);
  /// d loss / d log alpha for the given batch.
  double gradient(const Vector& log_probs, double target_entropy) const;

 private:
  AlphaMode mode_ = AlphaMode::Auto;
  diff::ParameterSet params_;
  diff::Adam opt_;
};

/// Next-state executed action a' = a'_base + lambda * a'_res with a'_res ~ pi(.|s').
struct NextAction {
  Matrix action;
  Vector log_prob;
};

NextAction sample_next(const Batch& batch, const base::BasePolicy& base, const ResidualPolicy& policy,
                       double lambda, std::mt19937_64& rng);

/// y = r + gamma (1 - done) (min_k Q'_k(s', a') - alpha log pi(a'|s')), scalar heads.
Vector soft_target(const Batch& batch, const CriticEnsemble& critic, const NextAction& next, double alpha,
                   double gamma);
/// soft_target without the entropy term.
Vector hard_target(const Batch& batch, const CriticEnsemble& critic, const NextAction& next, double gamma);

/// Projected categorical target (B x atoms). The twin target head with the smaller
/// expectation supplies each row's next-state distribution.
Matrix c51_target(const Batch& batch, const CriticEnsemble& critic, const NextAction& next, double alpha,
                  double gamma);
/// Quantile targets (B x N) from the twin head with the smaller mean per row.
Matrix quantile_target(const Batch& batch, const CriticEnsemble& critic, const NextAction& next, double alpha,
                       double gamma);
/// Truncated pooled targets (B x K(N - d)) over all target heads.
Matrix tqc_target(const Batch& batch, const CriticEnsemble& critic, const NextAction& next, double alpha,
                  double gamma, int drop);

/// Regression target in whichever form the critic's head consumes.
struct CriticTarget {
  Vector scalar;  // scalar heads
  Matrix dist;    // projected probabilities or target quantiles
};

CriticTarget build_target(const Batch& batch, const CriticEnsemble& critic, const NextAction& next, double alpha,
                          double gamma);

/// Loss of head k on the tape: MSE, cross-entropy against the projected target,
/// or quantile Huber against all target quantiles.
diff::Var critic_loss(diff::Tape& tape, CriticEnsemble& critic, int k, const Batch& batch,
                      const CriticTarget& target);

/// One clipped Adam step per head. Returns per-head losses; a non-finite loss aborts.
std::vector<double> critic_update(CriticEnsemble& critic, std::vector<diff::Adam>& optimizers, const Batch& batch,
                                  const CriticTarget& target, double grad_clip);

struct ActorStats {
  double loss = 0.0;
  double q_mean = 0.0;
  Vector log_prob;
};

/// mean(alpha log pi - Qbar) on the tape, where Qbar is the twin minimum of the
/// expectations (mean over heads for TQC). The critic is frozen.
diff::Var actor_loss(diff::Tape& tape, ResidualPolicy& policy, CriticEnsemble& critic, const Batch& batch,
                     double alpha, double lambda, const Matrix& noise, ActorStats* stats = nullptr);

ActorStats actor_update(ResidualPolicy& policy, diff::Adam& optimizer, CriticEnsemble& critic, const Batch& batch,
                        double alpha, double lambda, const Matrix& noise, double grad_clip);

/// True with probability min(t / H, 1).
bool progressive_gate(std::int64_t t, std::int64_t horizon, std::mt19937_64& rng);

}  // namespace dawn::trainer
