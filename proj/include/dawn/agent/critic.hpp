#pragma once

#include "dawn/diff/mlp.hpp"
#include "dawn/diff/tape.hpp"

#include <json.hpp>

#include <random>
#include <string>
#include <vector>

namespace dawn::agent {

using diff::HiddenNorm;
using diff::Matrix;
using diff::Tape;
using diff::Var;
using diff::Vector;

enum class HeadKind { Scalar, C51, Quantile, Tqc };

std::string to_string(HeadKind kind);
HeadKind head_kind_from_string(const std::string& name);

struct CriticSpec {
  int obs_dim = 1;
  int action_dim = 1;
  std::vector<int> hidden_dims{128, 128};
  HiddenNorm hidden_norm = HiddenNorm::None;
  HeadKind head = HeadKind::Scalar;
  /// Number of heads; 0 picks 2 (twin) or 5 for TQC.
  int ensemble = 0;
  int atoms = 51;
  double v_min = -35.0;
  double v_max = 0.0;
  int quantiles = 25;
  /// Quantiles dropped per head by TQC.
  int tqc_drop = 2;
  double kappa = 1.0;

  int heads() const;
  int output_dim() const;
  void validate() const;
};

void to_json(nlohmann::json& j, const CriticSpec& s);
void from_json(const nlohmann::json& j, CriticSpec& s);

/// Lower end of the categorical support for a reward in {-1, 0} over horizon T.
double categorical_v_min(double gamma, int horizon);

/// Evenly spaced atoms on [v_min, v_max].
Vector categorical_atoms(int n, double v_min, double v_max);
/// Quantile midpoints (2i - 1) / (2N), i = 1..N.
Vector quantile_fractions(int n);

/// One head's output for one state-action pair.
struct ValueDistribution {
  enum class Kind { Scalar, Categorical, Quantiles };
  Kind kind = Kind::Scalar;
  double scalar = 0.0;
  Vector probs;
  Vector atoms;
  Vector quantiles;
  Vector taus;

  double expectation() const;
};

/// K value heads on (observation | executed action) with EMA target copies.
class CriticEnsemble {
 public:
  CriticEnsemble() = default;
  CriticEnsemble(CriticSpec spec, std::mt19937_64& rng);

  const CriticSpec& spec() const { return spec_; }
  int size() const { return static_cast<int>(online_.size()); }
  diff::Mlp& head(int k) { return online_.at(static_cast<std::size_t>(k)); }
  const diff::Mlp& head(int k) const { return online_.at(static_cast<std::size_t>(k)); }
  diff::Mlp& target_head(int k) { return target_.at(static_cast<std::size_t>(k)); }
  const diff::Mlp& target_head(int k) const { return target_.at(static_cast<std::size_t>(k)); }
  const Vector& atoms() const { return atoms_; }
  const Vector& taus() const { return taus_; }

  /// Raw head output on the tape: value (B x 1), logits (B x atoms) or quantiles (B x N).
  Var forward(Tape& tape, int k, Var input, bool trainable = true);
  /// Expected value on the tape, B x 1.
  Var expectation(Tape& tape, int k, Var input, bool trainable = true);

  /// Raw output, graph-free. Categorical heads return probabilities, not logits.
  Matrix predict(int k, const Matrix& input, bool target = false) const;
  /// Expected value per row.
  Vector expectations(int k, const Matrix& input, bool target = false) const;
  /// B x K matrix of per-head expectations.
  Matrix all_expectations(const Matrix& input, bool target = false) const;
  ValueDistribution distribution(int k, const Vector& input, bool target = false) const;

  /// target <- tau * online + (1 - tau) * target.
  void ema_update(double tau);
  void sync_targets();

 private:
  Vector expectation_of(const Matrix& raw) const;

  CriticSpec spec_;
  std::vector<diff::Mlp> online_;
  std::vector<diff::Mlp> target_;
  Vector atoms_;
  Vector taus_;
};

/// Row-wise concatenation of observation and executed action.
Matrix critic_input(const Matrix& obs, const Matrix& action);

enum class QReduce { Mean, Min, Head };

/// Scalar Q for one state-action pair. `head` is used with QReduce::Head.
double q_value(const CriticEnsemble& critic, const Vector& obs, const Vector& action,
               QReduce reduce = QReduce::Mean, int head = 0);

// ---- distributional target construction --------------------------------------

/// Projects the shifted next-state categorical distribution onto the fixed support.
/// Atom z of row b moves to reward(b) + discount(b) * (z - entropy(b)), is clipped into
/// [atoms.front(), atoms.back()], and its mass is split linearly between the neighbours.
Matrix project_categorical(const Matrix& next_probs, const Vector& atoms, const Vector& reward,
                           const Vector& discount, const Vector& entropy);

/// Pools K heads of B x N quantiles, sorts each row and keeps the lowest K * (N - drop).
Matrix truncated_pool(const std::vector<Matrix>& head_quantiles, int drop);

/// Graph-free quantile Huber loss, averaged over batch and all (i, j) pairs.
double quantile_huber_loss(const Matrix& theta, const Matrix& targets, const Vector& taus, double kappa);

}  // namespace dawn::agent
