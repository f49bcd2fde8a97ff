#include "dawn/diagnostics/diagnostics.hpp"
#include "dawn/errors.hpp"
#include "dawn/trainer/run.hpp"

#include "eigen_oracle.hpp"
#include "fd_oracle.hpp"

#include <doctest.h>

#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

using namespace dawn::diagnostics;
using dawn::agent::CriticSpec;
using dawn::diff::Matrix;
using dawn::diff::Vector;

namespace {

constexpr int kObs = 3;
constexpr int kAct = 2;

// Q(s, a) = w_s . s + w_a . a + b on every head, targets included.
CriticEnsemble linear_critic(const Vector& w_obs, const Vector& w_act, double bias, std::mt19937_64& rng) {
  CriticSpec spec;
  spec.obs_dim = static_cast<int>(w_obs.size());
  spec.action_dim = static_cast<int>(w_act.size());
  spec.hidden_dims = {};
  CriticEnsemble c(spec, rng);
  for (int k = 0; k < c.size(); ++k) {
    for (auto* mlp : {&c.head(k), &c.target_head(k)}) {
      auto& w = mlp->params()[mlp->output_weight_index()].value;
      w.col(0) << w_obs, w_act;
      mlp->params()[mlp->output_bias_index()].value.setConstant(bias);
    }
  }
  return c;
}

CriticEnsemble constant_critic(double value, std::mt19937_64& rng) {
  return linear_critic(Vector::Zero(kObs), Vector::Zero(kAct), value, rng);
}

CriticEnsemble mlp_critic(std::mt19937_64& rng) {
  CriticSpec spec;
  spec.obs_dim = kObs;
  spec.action_dim = kAct;
  spec.hidden_dims = {12, 12};
  spec.hidden_norm = dawn::diff::HiddenNorm::LayerNorm;
  return CriticEnsemble(spec, rng);
}

Matrix uniform(Eigen::Index rows, Eigen::Index cols, double half_width, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-half_width, half_width);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
  return m;
}

AnchorSet synthetic_anchors(Eigen::Index n, double ret, std::mt19937_64& rng) {
  AnchorSet a;
  a.obs = uniform(n, kObs, 1.0, rng);
  a.action = uniform(n, kAct, 0.5, rng);
  a.returns = Vector::Constant(n, ret);
  a.trajectories = 1;
  return a;
}

}  // namespace

TEST_CASE("discounted returns of a short episode") {
  const Vector g = discounted_returns({-1.0, -1.0, 0.0}, 0.9);
  REQUIRE(g.size() == 3);
  CHECK(g(0) == doctest::Approx(-1.9).epsilon(1e-14));
  CHECK(g(1) == doctest::Approx(-1.0).epsilon(1e-14));
  CHECK(g(2) == 0.0);
  CHECK(discounted_returns({}, 0.9).size() == 0);
}

TEST_CASE("anchor set rollouts follow the base policy") {
  auto env = dawn::env::make_env("point-insert-2d");
  const auto base = dawn::base::make_base_policy(*env);
  const AnchorSet a = collect_anchor_set(*env, base, 5, 17, 0.97);
  CHECK(a.trajectories == 5);
  CHECK(a.size() > 0);
  CHECK(a.size() <= 5 * env->episode_length());
  CHECK(a.returns.maxCoeff() <= 0.0);
  CHECK(a.returns.minCoeff() >= -1.0 / 0.03);
  const Matrix expect = base.action_batch(a.obs);
  CHECK((expect - a.action).cwiseAbs().maxCoeff() <= 1e-12);
  const AnchorSet b = collect_anchor_set(*env, base, 5, 17, 0.97);
  CHECK(a.returns == b.returns);
}

TEST_CASE("grounding error: exact critic, zero critic and least-squares fit") {
  std::mt19937_64 rng(1);
  const AnchorSet a = synthetic_anchors(40, -10.0, rng);
  CHECK(grounding_error(constant_critic(-10.0, rng), a).mean_heads <= 1e-12);
  const GroundingError zero = grounding_error(constant_critic(0.0, rng), a);
  CHECK(zero.mean_heads == doctest::Approx(10.0).epsilon(1e-12));
  CHECK(zero.min_heads == doctest::Approx(10.0).epsilon(1e-12));
  CHECK(zero.return_mean == doctest::Approx(-10.0).epsilon(1e-12));

  // Noisy linear returns fitted by ordinary least squares through the output layer.
  AnchorSet noisy = synthetic_anchors(200, 0.0, rng);
  std::normal_distribution<double> noise(0.0, 0.3);
  for (Eigen::Index i = 0; i < noisy.size(); ++i) {
    noisy.returns(i) = -5.0 + 2.0 * noisy.obs(i, 0) - noisy.action(i, 1) + noise(rng);
  }
  Matrix design(noisy.size(), kObs + kAct + 1);
  design << noisy.obs, noisy.action, Matrix::Ones(noisy.size(), 1);
  const Vector coef = design.colPivHouseholderQr().solve(noisy.returns);
  const CriticEnsemble fitted = linear_critic(coef.head(kObs), coef.segment(kObs, kAct), coef(kObs + kAct), rng);
  const Vector residual = design * coef - noisy.returns;
  const double rms = std::sqrt(residual.squaredNorm() / static_cast<double>(residual.size()));
  CHECK(grounding_error(fitted, noisy).mean_heads <= rms);
  CHECK_THROWS_AS(grounding_error(fitted, AnchorSet{}), dawn::UsageError);
}

TEST_CASE("sensitivity of constant and linear critics") {
  std::mt19937_64 rng(2);
  const Matrix obs = uniform(16, kObs, 1.0, rng);
  const Matrix a_base = uniform(16, kAct, 0.5, rng);
  const Matrix a_res = uniform(16, kAct, 1.0, rng);
  CHECK(critic_sensitivity(constant_critic(-3.0, rng), obs, a_base, a_res, 0.1) == 0.0);
  CHECK(value_difference(constant_critic(-3.0, rng), obs, a_base, a_res, 0.1) == 0.0);

  Vector w(kAct);
  w << 3.0, -4.0;
  const CriticEnsemble lin = linear_critic(Vector::Constant(kObs, 0.7), w, 1.0, rng);
  const double lambda = 0.1;
  CHECK(critic_sensitivity(lin, obs, a_base, a_res, lambda) == doctest::Approx(lambda * 5.0).epsilon(1e-12));
  CHECK(critic_sensitivity_via_action(lin, obs, a_base, a_res, lambda) ==
        doctest::Approx(lambda * 5.0).epsilon(1e-12));

  const Matrix m = Matrix::Constant(16, kAct, 0.4);
  CHECK(value_difference(lin, obs, a_base, m, lambda) ==
        doctest::Approx(std::abs(lambda * w.dot(Vector::Constant(kAct, 0.4)))).epsilon(1e-12));
  CHECK(value_difference(lin, obs, a_base, a_res, 0.0) == 0.0);
}

TEST_CASE("sensitivity matches finite differences and the executed-action route") {
  std::mt19937_64 rng(3);
  const CriticEnsemble critic = mlp_critic(rng);
  const Matrix obs = uniform(8, kObs, 1.0, rng);
  const Matrix a_base = uniform(8, kAct, 0.5, rng);
  Matrix a_res = uniform(8, kAct, 1.0, rng);
  const double lambda = 0.2;

  double fd = 0.0;
  for (Eigen::Index i = 0; i < obs.rows(); ++i) {
    Vector g(kAct);
    for (int j = 0; j < kAct; ++j) {
      auto q = [&] {
        const Matrix a = dawn::agent::combine(Matrix(a_base.row(i)), Matrix(a_res.row(i)), lambda);
        return critic.all_expectations(dawn::agent::critic_input(obs.row(i), a)).mean();
      };
      g(j) = dawn::testing::central_difference(q, a_res(i, j), 1e-5);
    }
    fd += g.norm();
  }
  fd /= static_cast<double>(obs.rows());
  const double analytic = critic_sensitivity(critic, obs, a_base, a_res, lambda);
  CHECK(std::abs(analytic - fd) <= 1e-3 * std::max(1.0, std::abs(fd)));
  CHECK(std::abs(analytic - critic_sensitivity_via_action(critic, obs, a_base, a_res, lambda)) <= 1e-10);

  // Saturated coordinates are masked by both routes.
  Matrix pinned_base = a_base;
  pinned_base.col(0).setConstant(0.99);
  Matrix push = a_res;
  push.col(0).setConstant(1.0);
  CHECK(std::abs(critic_sensitivity(critic, obs, pinned_base, push, lambda) -
                 critic_sensitivity_via_action(critic, obs, pinned_base, push, lambda)) <= 1e-10);

  CHECK_THROWS_AS(critic_sensitivity(critic, obs, a_base, a_res.topRows(3), lambda), dawn::UsageError);
}

TEST_CASE("policy overloads evaluate at the deterministic residual") {
  std::mt19937_64 rng(4);
  const CriticEnsemble critic = mlp_critic(rng);
  dawn::agent::PolicySpec ps;
  ps.obs_dim = kObs;
  ps.action_dim = kAct;
  ps.hidden_dims = {8};
  ps.final_weight_scale = 0.5;
  dawn::agent::ResidualPolicy policy(ps, rng);
  const Matrix obs = uniform(10, kObs, 1.0, rng);
  const Matrix a_base = uniform(10, kAct, 0.5, rng);
  const Matrix mean = policy.mean_action(obs);
  CHECK(critic_sensitivity(critic, policy, obs, a_base, 0.1) == critic_sensitivity(critic, obs, a_base, mean, 0.1));
  CHECK(value_difference(critic, policy, obs, a_base, 0.1) == value_difference(critic, obs, a_base, mean, 0.1));
}

TEST_CASE("entropy term dominates reward scale at large alpha on reach-nd") {
  dawn::trainer::RunConfig c;
  c.env_id = "reach-nd";
  auto env = dawn::env::make_env(c.env_id);
  std::mt19937_64 rng(5);
  const auto agent = dawn::trainer::make_agent(c, *env, rng);
  Matrix obs(64, env->obs_dim());
  for (int i = 0; i < 64; ++i) obs.row(i) = env->reset(static_cast<std::uint64_t>(i)).observation.transpose();
  CHECK(entropy_term_magnitude(agent.policy, obs, 1.0, rng) >= 10.0);
  CHECK(entropy_term_magnitude(agent.policy, obs, 0.01, rng) >= 0.3);
}

TEST_CASE("power iteration agrees with the closed-form 3x3 eigen oracle") {
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix x = uniform(400, 3, 1.0, rng) * (Matrix(3, 3) << 3.0, 0.2, 0.0, 0.5, 1.0, 0.1, 0.0, 0.3, 0.4)
                                                     .finished();
    const Matrix centered = x.rowwise() - x.colwise().mean();
    const Eigen::Matrix3d cov = (centered.transpose() * centered) / static_cast<double>(x.rows() - 1);
    const auto oracle = dawn::testing::symmetric3_oracle(cov);
    const PrincipalComponent pc = principal_component(x, 1000, 1e-12);
    CHECK_FALSE(pc.degenerate);
    CHECK(pc.eigenvalue == doctest::Approx(oracle.largest).epsilon(1e-6));
    CHECK((pc.direction - oracle.direction).norm() <= 1e-4);
  }

  Eigen::Matrix3d diag = Eigen::Vector3d(1.0, 5.0, 2.0).asDiagonal();
  const PrincipalComponent d = principal_component_of_covariance(diag);
  CHECK(d.eigenvalue == doctest::Approx(5.0));
  CHECK(d.direction(1) == doctest::Approx(1.0));

  const PrincipalComponent flat = principal_component(Matrix::Constant(10, 3, 0.25));
  CHECK(flat.degenerate);
  CHECK(flat.eigenvalue == 0.0);
  CHECK(flat.direction == Vector::Unit(3, 0));
}

TEST_CASE("shared histograms use common edges") {
  Vector a(4), b(3);
  a << 0.0, 1.0, 2.0, 3.0;
  b << 3.0, 4.0, 4.0;
  const auto [ha, hb] = shared_histograms(a, b, 4);
  CHECK(ha.edges == hb.edges);
  CHECK(ha.edges.front() == 0.0);
  CHECK(ha.edges.back() == 4.0);
  CHECK(std::accumulate(ha.counts.begin(), ha.counts.end(), 0) == 4);
  CHECK(std::accumulate(hb.counts.begin(), hb.counts.end(), 0) == 3);
  CHECK(hb.counts.back() == 3);
}

TEST_CASE("q anatomy: zero lambda, constructed shift and sign") {
  std::mt19937_64 rng(7);
  const Matrix obs = uniform(64, kObs, 1.0, rng);
  const Matrix a_base = uniform(64, kAct, 0.5, rng);
  const Matrix a_res = uniform(64, kAct, 1.0, rng);
  const CriticEnsemble mlp = mlp_critic(rng);

  const AnatomyReport zero = q_anatomy(mlp, obs, a_base, a_res, 0.0);
  CHECK(zero.delta_mu == 0.0);
  CHECK(zero.hist_base.counts == zero.hist_full.counts);
  CHECK(zero.projection_separation == 0.0);

  Vector w(kAct);
  w << 2.0, 1.0;
  const CriticEnsemble lin = linear_critic(Vector::Zero(kObs), w, -4.0, rng);
  const Matrix m = Matrix::Constant(64, kAct, 0.3);
  const double lambda = 0.5;
  const AnatomyReport up = q_anatomy(lin, obs, a_base, m, lambda);
  CHECK(up.delta_mu == doctest::Approx(lambda * 0.3 * 3.0).epsilon(1e-12));
  CHECK(up.q_separation > 0.0);
  const AnatomyReport down = q_anatomy(lin, obs, a_base, Matrix(-m), lambda);
  CHECK(down.delta_mu == doctest::Approx(-lambda * 0.3 * 3.0).epsilon(1e-12));
  CHECK(down.q_separation < 0.0);

  const auto j = up.to_json();
  CHECK(j.at("delta_mu").get<double>() == up.delta_mu);
  CHECK(j.at("hist_base").at("counts").size() == 30);
  const auto path = std::filesystem::temp_directory_path() / "dawn_anatomy_hist.csv";
  up.write_histogram_csv(path);
  std::ifstream in(path);
  std::string header;
  std::getline(in, header);
  CHECK(header == "series,bin_lo,bin_hi,count");
  int lines = 0;
  for (std::string line; std::getline(in, line);) ++lines;
  CHECK(lines == 60);
  std::filesystem::remove(path);
}

TEST_CASE("divergence monitor and metric records") {
  DivergenceMonitor mon;
  CHECK_FALSE(mon.observe(2.0));
  CHECK(mon.initial() == 2.0);
  CHECK_FALSE(mon.observe(10.0));
  CHECK(mon.observe(10.5));
  CHECK(mon.observe(1.0));  // sticky

  MetricRecord r;
  r.success_rate = 0.5;
  r.diverged = true;
  const auto items = r.items();
  CHECK(items.front().first == "success_rate");
  CHECK(items.back().second == 1.0);
  r.grounding_error = std::nan("");
  CHECK_THROWS_AS(r.items(), dawn::UsageError);
}
