#include "dawn/diagnostics/diagnostics.hpp"

#include "dawn/errors.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

namespace dawn::diagnostics {

using diff::Tape;
using diff::Var;

Vector discounted_returns(const std::vector<double>& rewards, double gamma) {
  const auto n = static_cast<Eigen::Index>(rewards.size());
  Vector g(n);
  double acc = 0.0;
  for (Eigen::Index t = n - 1; t >= 0; --t) {
    acc = rewards[static_cast<std::size_t>(t)] + gamma * acc;
    g(t) = acc;
  }
  return g;
}

AnchorSet collect_anchor_set(const env::Environment& env, const base::BasePolicy& base, int episodes,
                             std::uint64_t seed, double gamma) {
  if (episodes < 1) throw ConfigError("anchor set needs at least one episode");
  std::mt19937_64 rng(seed);
  std::vector<Vector> obs, act;
  std::vector<double> returns;
  int successes = 0;
  for (int e = 0; e < episodes; ++e) {
    env::EnvState s = env.reset(rng());
    std::vector<double> rewards;
    bool done = false;
    while (!done) {
      const Vector a = base.action(s.observation);
      obs.push_back(s.observation);
      act.push_back(a);
      auto [next, r] = env.step(s, a);
      rewards.push_back(r.reward);
      done = r.done;
      if (r.success) ++successes;
      s = std::move(next);
    }
    const Vector g = discounted_returns(rewards, gamma);
    returns.insert(returns.end(), g.data(), g.data() + g.size());
  }
  AnchorSet out;
  const auto n = static_cast<Eigen::Index>(obs.size());
  out.obs.resize(n, env.obs_dim());
  out.action.resize(n, env.action_dim());
  out.returns.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    out.obs.row(i) = obs[static_cast<std::size_t>(i)].transpose();
    out.action.row(i) = act[static_cast<std::size_t>(i)].transpose();
    out.returns(i) = returns[static_cast<std::size_t>(i)];
  }
  out.trajectories = episodes;
  out.success_rate = static_cast<double>(successes) / episodes;
  return out;
}

GroundingError grounding_error(const CriticEnsemble& critic, const AnchorSet& anchors) {
  if (anchors.size() == 0) throw UsageError("grounding_error: empty anchor set");
  const Matrix q = critic.all_expectations(agent::critic_input(anchors.obs, anchors.action));
  const Vector q_mean = q.rowwise().mean();
  const Vector q_min = q.rowwise().minCoeff();
  GroundingError e;
  e.mean_heads = (q_mean - anchors.returns).cwiseAbs().mean();
  e.min_heads = (q_min - anchors.returns).cwiseAbs().mean();
  e.q_mean = q_mean.mean();
  e.return_mean = anchors.returns.mean();
  return e;
}

namespace {

// Head-averaged expectation on the tape. Frozen parameters are only read, so the
// const_cast never leads to a write.
Var mean_q(Tape& tape, const CriticEnsemble& critic, Var input) {
  auto& c = const_cast<CriticEnsemble&>(critic);
  Var q = c.expectation(tape, 0, input, false);
  for (int k = 1; k < c.size(); ++k) q = diff::add(q, c.expectation(tape, k, input, false));
  return diff::scale(q, 1.0 / c.size());
}

Vector mean_q_values(const CriticEnsemble& critic, const Matrix& obs, const Matrix& action) {
  return critic.all_expectations(agent::critic_input(obs, action)).rowwise().mean();
}

double mean_row_norm(const Matrix& g) { return g.rowwise().norm().mean(); }

void check_shapes(const Matrix& obs, const Matrix& a_base, const Matrix& a_res) {
  if (obs.rows() != a_base.rows() || a_base.rows() != a_res.rows() || a_base.cols() != a_res.cols()) {
    throw UsageError("diagnostics: batch shapes disagree");
  }
}

}  // namespace

double critic_sensitivity(const CriticEnsemble& critic, const Matrix& obs, const Matrix& a_base,
                          const Matrix& a_res, double lambda) {
  check_shapes(obs, a_base, a_res);
  Tape tape;
  Var res = tape.input(a_res, true);
  Var action = agent::combine(tape, a_base, res, lambda);
  Var q = mean_q(tape, critic, diff::concat_cols(tape.constant(obs), action));
  tape.backward(diff::sum_all(q));
  return mean_row_norm(res.grad());
}

double critic_sensitivity_via_action(const CriticEnsemble& critic, const Matrix& obs, const Matrix& a_base,
                                     const Matrix& a_res, double lambda) {
  check_shapes(obs, a_base, a_res);
  const Matrix raw = a_base + lambda * a_res;
  Tape tape;
  Var action = tape.input(raw.cwiseMax(-1.0).cwiseMin(1.0), true);
  Var q = mean_q(tape, critic, diff::concat_cols(tape.constant(obs), action));
  tape.backward(diff::sum_all(q));
  Matrix g = action.grad();
  for (Eigen::Index i = 0; i < g.rows(); ++i) {
    for (Eigen::Index j = 0; j < g.cols(); ++j) {
      if (!(raw(i, j) > -1.0 && raw(i, j) < 1.0)) g(i, j) = 0.0;
    }
  }
  return lambda * mean_row_norm(g);
}

double critic_sensitivity(const CriticEnsemble& critic, const agent::ResidualPolicy& policy, const Matrix& obs,
                          const Matrix& a_base, double lambda) {
  return critic_sensitivity(critic, obs, a_base, policy.mean_action(obs), lambda);
}

double value_difference(const CriticEnsemble& critic, const Matrix& obs, const Matrix& a_base, const Matrix& a_res,
                        double lambda) {
  check_shapes(obs, a_base, a_res);
  const Vector q_full = mean_q_values(critic, obs, agent::combine(a_base, a_res, lambda));
  const Vector q_base = mean_q_values(critic, obs, a_base);
  return (q_full - q_base).cwiseAbs().mean();
}

double value_difference(const CriticEnsemble& critic, const agent::ResidualPolicy& policy, const Matrix& obs,
                        const Matrix& a_base, double lambda) {
  return value_difference(critic, obs, a_base, policy.mean_action(obs), lambda);
}

double entropy_term_magnitude(const agent::ResidualPolicy& policy, const Matrix& obs, double alpha,
                              std::mt19937_64& rng) {
  const agent::PolicyDraw d = policy.sample(obs, rng);
  return (alpha * d.log_prob.array()).abs().mean();
}

PrincipalComponent principal_component_of_covariance(const Matrix& cov, int max_iterations, double tolerance) {
  if (cov.rows() != cov.cols() || cov.rows() == 0) throw UsageError("covariance must be square and non-empty");
  const auto n = cov.rows();
  PrincipalComponent pc;
  pc.direction = Vector::Zero(n);
  if (cov.cwiseAbs().maxCoeff() <= 1e-300) {
    pc.direction(0) = 1.0;
    pc.degenerate = true;
    return pc;
  }
  // Start from the heaviest covariance column, which is never orthogonal to the
  // leading eigenvector of a PSD matrix unless that column is zero.
  Eigen::Index col = 0;
  cov.colwise().norm().maxCoeff(&col);
  Vector v = cov.col(col);
  v.normalize();
  for (int it = 0; it < max_iterations; ++it) {
    Vector w = cov * v;
    const double norm = w.norm();
    if (norm <= 1e-300) break;
    w /= norm;
    pc.iterations = it + 1;
    const double delta = (w - v).norm();
    v = w;
    if (delta < tolerance) break;
  }
  Eigen::Index big = 0;
  v.cwiseAbs().maxCoeff(&big);
  if (v(big) < 0.0) v = -v;
  pc.direction = v;
  pc.eigenvalue = v.dot(cov * v);
  return pc;
}

PrincipalComponent principal_component(const Matrix& x, int max_iterations, double tolerance) {
  if (x.rows() == 0) throw UsageError("principal_component: empty sample");
  const Eigen::RowVectorXd mean = x.colwise().mean();
  const Matrix centered = x.rowwise() - mean;
  const Matrix cov = centered.transpose() * centered / static_cast<double>(std::max<Eigen::Index>(x.rows() - 1, 1));
  return principal_component_of_covariance(cov, max_iterations, tolerance);
}

std::pair<Histogram, Histogram> shared_histograms(const Vector& a, const Vector& b, int bins) {
  if (bins < 1) throw UsageError("histogram needs at least one bin");
  double lo = std::min(a.size() ? a.minCoeff() : 0.0, b.size() ? b.minCoeff() : 0.0);
  double hi = std::max(a.size() ? a.maxCoeff() : 0.0, b.size() ? b.maxCoeff() : 0.0);
  if (!(hi > lo)) {
    lo -= 0.5;
    hi += 0.5;
  }
  Histogram ha, hb;
  for (int i = 0; i <= bins; ++i) ha.edges.push_back(lo + (hi - lo) * i / bins);
  ha.edges.back() = hi;
  hb.edges = ha.edges;
  ha.counts.assign(static_cast<std::size_t>(bins), 0);
  hb.counts.assign(static_cast<std::size_t>(bins), 0);
  auto fill = [&](const Vector& v, Histogram& h) {
    for (Eigen::Index i = 0; i < v.size(); ++i) {
      int k = static_cast<int>((v(i) - lo) / (hi - lo) * bins);
      h.counts[static_cast<std::size_t>(std::clamp(k, 0, bins - 1))]++;
    }
  };
  fill(a, ha);
  fill(b, hb);
  return {ha, hb};
}

namespace {

double pooled_sd(const Vector& a, const Vector& b) {
  auto var = [](const Vector& v) {
    if (v.size() < 2) return 0.0;
    return (v.array() - v.mean()).square().sum() / static_cast<double>(v.size() - 1);
  };
  return std::sqrt(0.5 * (var(a) + var(b)));
}

nlohmann::json histogram_json(const Histogram& h) { return {{"edges", h.edges}, {"counts", h.counts}}; }

std::vector<double> to_std(const Vector& v) { return {v.data(), v.data() + v.size()}; }

}  // namespace

AnatomyReport q_anatomy(const CriticEnsemble& critic, const Matrix& obs, const Matrix& a_base, const Matrix& a_res,
                        double lambda, int bins) {
  check_shapes(obs, a_base, a_res);
  AnatomyReport r;
  const Matrix a_full = agent::combine(a_base, a_res, lambda);
  r.component = principal_component(a_full);
  r.projection_base = a_base * r.component.direction;
  r.projection_full = a_full * r.component.direction;
  r.q_base = mean_q_values(critic, obs, a_base);
  r.q_full = mean_q_values(critic, obs, a_full);
  std::tie(r.hist_base, r.hist_full) = shared_histograms(r.q_base, r.q_full, bins);
  r.delta_mu = r.q_full.mean() - r.q_base.mean();
  const double sp = pooled_sd(r.projection_base, r.projection_full);
  const double gap = std::abs(r.projection_full.mean() - r.projection_base.mean());
  r.projection_separation = sp > 0.0 ? gap / sp : (gap > 0.0 ? std::numeric_limits<double>::infinity() : 0.0);
  const double sq = pooled_sd(r.q_base, r.q_full);
  r.q_separation = sq > 0.0 ? r.delta_mu / sq : 0.0;
  return r;
}

AnatomyReport q_anatomy(const CriticEnsemble& critic, const agent::ResidualPolicy& policy, const Matrix& obs,
                        const Matrix& a_base, double lambda, int bins) {
  return q_anatomy(critic, obs, a_base, policy.mean_action(obs), lambda, bins);
}

nlohmann::json AnatomyReport::to_json() const {
  return {{"step", step},
          {"principal_component",
           {{"direction", to_std(component.direction)},
            {"eigenvalue", component.eigenvalue},
            {"iterations", component.iterations},
            {"degenerate", component.degenerate}}},
          {"projection_base_mean", projection_base.size() ? projection_base.mean() : 0.0},
          {"projection_full_mean", projection_full.size() ? projection_full.mean() : 0.0},
          {"projection_separation", projection_separation},
          {"q_base_mean", q_base.size() ? q_base.mean() : 0.0},
          {"q_full_mean", q_full.size() ? q_full.mean() : 0.0},
          {"delta_mu", delta_mu},
          {"q_separation", q_separation},
          {"samples", q_base.size()},
          {"hist_base", histogram_json(hist_base)},
          {"hist_full", histogram_json(hist_full)},
          {"projection_base", to_std(projection_base)},
          {"projection_full", to_std(projection_full)}};
}

void AnatomyReport::write_histogram_csv(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path.string());
  out.precision(17);
  out << "series,bin_lo,bin_hi,count\n";
  auto dump = [&](const char* name, const Histogram& h) {
    for (std::size_t i = 0; i < h.counts.size(); ++i) {
      out << name << ',' << h.edges[i] << ',' << h.edges[i + 1] << ',' << h.counts[i] << '\n';
    }
  };
  dump("q_base", hist_base);
  dump("q_full", hist_full);
}

std::vector<std::pair<std::string, double>> MetricRecord::items() const {
  std::vector<std::pair<std::string, double>> out = {
      {"success_rate", success_rate},
      {"grounding_error", grounding_error},
      {"grounding_error_min", grounding_error_min},
      {"q_anchor_mean", q_anchor_mean},
      {"sensitivity", sensitivity},
      {"value_difference", value_difference},
      {"alpha", alpha},
      {"critic_loss", critic_loss},
      {"actor_loss", actor_loss},
      {"diverged", diverged ? 1.0 : 0.0},
  };
  for (const auto& [name, v] : out) {
    if (!std::isfinite(v)) throw UsageError("metric '" + name + "' is not finite");
  }
  return out;
}

bool DivergenceMonitor::observe(double grounding_error) {
  if (initial_ < 0.0) {
    initial_ = grounding_error;
  } else if (grounding_error > factor_ * initial_) {
    diverged_ = true;
  }
  return diverged_;
}

}  // namespace dawn::diagnostics
