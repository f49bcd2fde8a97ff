#pragma once

#include "dawn/diff/mlp.hpp"
#include "dawn/diff/tape.hpp"

#include <json.hpp>

#include <random>
#include <vector>

namespace dawn::agent {

using diff::HiddenNorm;
using diff::Matrix;
using diff::Tape;
using diff::Var;
using diff::Vector;

/// Added inside the log of the tanh correction.
inline constexpr double kSquashEps = 1e-6;

struct PolicySpec {
  int obs_dim = 1;
  int action_dim = 1;
  std::vector<int> hidden_dims{128, 128};
  HiddenNorm hidden_norm = HiddenNorm::None;
  /// Output-layer weights are drawn from U(-final_weight_scale, final_weight_scale), biases 0.
  double final_weight_scale = 1e-3;
  /// Initial bias of the log-std outputs.
  double init_log_std = -6.0;
  double log_std_min = -10.0;
  double log_std_max = 2.0;

  void validate() const;
};

void to_json(nlohmann::json& j, const PolicySpec& s);
void from_json(const nlohmann::json& j, PolicySpec& s);

/// Reparameterized sample recorded on a tape.
struct PolicySample {
  Var action;    // B x d, tanh-squashed residual in (-1, 1)
  Var log_prob;  // B x 1
  Var mean;      // B x d, pre-squash
  Var log_std;   // B x d, clamped
};

/// Graph-free sample.
struct PolicyDraw {
  Matrix action;
  Vector log_prob;
};

/// Tanh-squashed diagonal Gaussian over the residual action.
///
/// The network maps an observation to [mean | log_std]. With the default init the
/// policy emits near-zero residuals with tiny variance.
class ResidualPolicy {
 public:
  ResidualPolicy() = default;
  ResidualPolicy(PolicySpec spec, std::mt19937_64& rng);

  const PolicySpec& spec() const { return spec_; }
  diff::ParameterSet& params() { return net_.params(); }
  const diff::ParameterSet& params() const { return net_.params(); }
  diff::Mlp& net() { return net_; }

  /// noise is B x d standard normal; the sample is differentiable w.r.t. policy parameters.
  PolicySample sample(Tape& tape, Var obs, const Matrix& noise, bool trainable = true);

  PolicyDraw evaluate(const Matrix& obs, const Matrix& noise) const;
  PolicyDraw sample(const Matrix& obs, std::mt19937_64& rng) const;
  /// tanh(mean): the deterministic residual used for evaluation.
  Matrix mean_action(const Matrix& obs) const;
  /// Pre-squash mean and clamped log-std.
  std::pair<Matrix, Matrix> distribution(const Matrix& obs) const;

 private:
  PolicySpec spec_;
  diff::Mlp net_;
};

Matrix standard_normal(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng);

/// Executed action a_base + lambda * a_res, clipped to [-1, 1]. Dimension mismatch is a usage error.
Vector combine(const Vector& a_base, const Vector& a_res, double lambda);
Matrix combine(const Matrix& a_base, const Matrix& a_res, double lambda);
/// Same composition on a tape; the clip masks the gradient where it saturates.
Var combine(Tape& tape, const Matrix& a_base, Var a_res, double lambda);

}  // namespace dawn::agent
