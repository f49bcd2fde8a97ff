#pragma once

#include "dawn/agent/critic.hpp"
#include "dawn/agent/policy.hpp"
#include "dawn/basepolicy/base_policy.hpp"
#include "dawn/envs/env.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <vector>

namespace dawn::diagnostics {

using agent::CriticEnsemble;
using diff::Matrix;
using diff::Vector;

/// Held-out base-policy trajectories with Monte Carlo returns per visited pair.
struct AnchorSet {
  Matrix obs;     // one row per (s_t, a_t)
  Matrix action;  // base action taken at s_t
  Vector returns;
  int trajectories = 0;
  double success_rate = 0.0;

  Eigen::Index size() const { return obs.rows(); }
};

/// G_t = sum_k gamma^k r_{t+k} up to the episode end; nothing is bootstrapped past it.
Vector discounted_returns(const std::vector<double>& rewards, double gamma);

/// Rolls out the base policy alone for `episodes` episodes with seeds drawn from `seed`.
AnchorSet collect_anchor_set(const env::Environment& env, const base::BasePolicy& base, int episodes,
                             std::uint64_t seed, double gamma);

struct GroundingError {
  double mean_heads = 0.0;  // |mean_k Q_k - G|, the headline number
  double min_heads = 0.0;   // |min_k Q_k - G|
  double q_mean = 0.0;      // average critic estimate over the anchor pairs
  double return_mean = 0.0;
};

GroundingError grounding_error(const CriticEnsemble& critic, const AnchorSet& anchors);

/// Mean over rows of |grad_{a_res} Qbar(s, a_base + lambda a_res)|, Qbar the mean over heads.
double critic_sensitivity(const CriticEnsemble& critic, const Matrix& obs, const Matrix& a_base,
                          const Matrix& a_res, double lambda);
/// Same quantity through the executed action: lambda |grad_a Qbar| at the combined action.
/// Coordinates where the combined action sits outside [-1, 1] are masked, as the clip is.
double critic_sensitivity_via_action(const CriticEnsemble& critic, const Matrix& obs, const Matrix& a_base,
                                     const Matrix& a_res, double lambda);
/// Evaluates at the deterministic policy residual tanh(mean).
double critic_sensitivity(const CriticEnsemble& critic, const agent::ResidualPolicy& policy, const Matrix& obs,
                          const Matrix& a_base, double lambda);

/// Mean over rows of |Qbar(s, a_base + lambda a_res) - Qbar(s, a_base)|.
double value_difference(const CriticEnsemble& critic, const Matrix& obs, const Matrix& a_base, const Matrix& a_res,
                        double lambda);
double value_difference(const CriticEnsemble& critic, const agent::ResidualPolicy& policy, const Matrix& obs,
                        const Matrix& a_base, double lambda);

/// Mean |alpha log pi(a|s)| over fresh policy samples at the given states.
double entropy_term_magnitude(const agent::ResidualPolicy& policy, const Matrix& obs, double alpha,
                              std::mt19937_64& rng);

struct PrincipalComponent {
  Vector direction;
  double eigenvalue = 0.0;
  int iterations = 0;
  bool degenerate = false;  // zero covariance; direction is the first axis
};

/// Leading eigenvector of the sample covariance of the rows of x via power iteration.
/// The sign is fixed so the largest-magnitude coordinate is positive.
PrincipalComponent principal_component(const Matrix& x, int max_iterations = 100, double tolerance = 1e-9);
PrincipalComponent principal_component_of_covariance(const Matrix& cov, int max_iterations = 100,
                                                     double tolerance = 1e-9);

struct Histogram {
  std::vector<double> edges;  // bins + 1 edges
  std::vector<int> counts;
};

/// Histograms of two samples on shared edges spanning both.
std::pair<Histogram, Histogram> shared_histograms(const Vector& a, const Vector& b, int bins);

struct AnatomyReport {
  PrincipalComponent component;
  Vector projection_base;
  Vector projection_full;
  Vector q_base;
  Vector q_full;
  Histogram hist_base;
  Histogram hist_full;
  double delta_mu = 0.0;
  /// |mean(proj_full) - mean(proj_base)| / pooled standard deviation.
  double projection_separation = 0.0;
  /// Mean shift divided by the pooled standard deviation of the Q samples.
  double q_separation = 0.0;
  std::int64_t step = 0;

  nlohmann::json to_json() const;
  /// Columns: series,bin_lo,bin_hi,count.
  void write_histogram_csv(const std::filesystem::path& path) const;
};

/// Q-distribution anatomy for base versus combined actions at the given states.
AnatomyReport q_anatomy(const CriticEnsemble& critic, const Matrix& obs, const Matrix& a_base, const Matrix& a_res,
                        double lambda, int bins = 30);
AnatomyReport q_anatomy(const CriticEnsemble& critic, const agent::ResidualPolicy& policy, const Matrix& obs,
                        const Matrix& a_base, double lambda, int bins = 30);

/// One diagnostic snapshot.
struct MetricRecord {
  std::int64_t step = 0;
  double grounding_error = 0.0;
  double grounding_error_min = 0.0;
  double q_anchor_mean = 0.0;
  double sensitivity = 0.0;
  double value_difference = 0.0;
  double alpha = 0.0;
  double success_rate = 0.0;
  double critic_loss = 0.0;
  double actor_loss = 0.0;
  bool diverged = false;

  /// (name, value) pairs in a fixed order; throws UsageError if any value is non-finite.
  std::vector<std::pair<std::string, double>> items() const;
};

/// Flags divergence once grounding error exceeds `factor` times the first observed value.
class DivergenceMonitor {
 public:
  explicit DivergenceMonitor(double factor = 5.0) : factor_(factor) {}
  bool observe(double grounding_error);
  bool diverged() const { return diverged_; }
  double initial() const { return initial_; }

 private:
  double factor_;
  double initial_ = -1.0;
  bool diverged_ = false;
};

}  // namespace dawn::diagnostics
