#include "dawn/agent/critic.hpp"
#include "dawn/agent/policy.hpp"
#include "dawn/errors.hpp"

#include "dist_oracles.hpp"
#include "fd_oracle.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

using namespace dawn::agent;
using dawn::diff::Matrix;
using dawn::diff::Vector;

namespace {

PolicySpec small_policy(int obs, int act) {
  PolicySpec s;
  s.obs_dim = obs;
  s.action_dim = act;
  s.hidden_dims = {32, 32};
  return s;
}

Matrix random_obs(int rows, int cols, std::mt19937_64& rng) { return standard_normal(rows, cols, rng); }

// Makes the policy output a fixed (mean, log_std) regardless of the observation.
void pin_policy(ResidualPolicy& p, double mean, double log_std) {
  auto& net = p.net();
  net.params()[net.output_weight_index()].value.setZero();
  auto& b = net.params()[net.output_bias_index()].value;
  const int d = p.spec().action_dim;
  b.leftCols(d).setConstant(mean);
  b.rightCols(d).setConstant(log_std);
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

}  // namespace

TEST_CASE("zero noise gives tanh of the mean") {
  std::mt19937_64 rng(1);
  ResidualPolicy p(small_policy(4, 3), rng);
  const Matrix obs = random_obs(8, 4, rng);
  const auto draw = p.evaluate(obs, Matrix::Zero(8, 3));
  CHECK((draw.action - p.mean_action(obs)).cwiseAbs().maxCoeff() == 0.0);

  pin_policy(p, 0.4, -10.0);
  const auto tight = p.sample(obs, rng);
  CHECK((tight.action.array() - std::tanh(0.4)).abs().maxCoeff() < 1e-3);
}

TEST_CASE("log-std is clamped to its bounds") {
  std::mt19937_64 rng(2);
  ResidualPolicy p(small_policy(2, 2), rng);
  pin_policy(p, 0.0, -40.0);
  CHECK(p.distribution(Matrix::Zero(1, 2)).second.minCoeff() == -10.0);
  pin_policy(p, 0.0, 7.0);
  CHECK(p.distribution(Matrix::Zero(1, 2)).second.maxCoeff() == 2.0);
}

TEST_CASE("fresh residual stays inside 0.05 with overwhelming probability") {
  std::mt19937_64 rng(3);
  ResidualPolicy p(small_policy(6, 2), rng);
  int outside = 0;
  const int total = 100000;
  for (int chunk = 0; chunk < total / 1000; ++chunk) {
    const auto draw = p.sample(random_obs(1000, 6, rng), rng);
    for (Eigen::Index r = 0; r < draw.action.rows(); ++r) {
      if (draw.action.row(r).cwiseAbs().maxCoeff() >= 0.05) ++outside;
    }
  }
  CHECK(outside <= total / 1000);
}

TEST_CASE("combined policy is indistinguishable from the base at init") {
  for (int hidden : {128, 256}) {
    std::mt19937_64 rng(4);
    PolicySpec s = small_policy(6, 2);
    s.hidden_dims = {hidden, hidden};
    ResidualPolicy p(s, rng);
    const auto draw = p.sample(random_obs(1000, 6, rng), rng);
    CHECK(0.2 * draw.action.cwiseAbs().maxCoeff() <= 0.01);
  }
}

TEST_CASE("entropy magnitude at init exceeds 30 for seven action dims") {
  std::mt19937_64 rng(5);
  ResidualPolicy p(small_policy(14, 7), rng);
  const auto draw = p.sample(random_obs(1000, 14, rng), rng);
  const double mean_abs = draw.log_prob.cwiseAbs().mean();
  // 7 * (6 - log(2 pi)/2 - 1/2) for std = exp(-6).
  CHECK(mean_abs == doctest::Approx(7.0 * (6.0 - 0.5 * std::log(2.0 * std::numbers::pi) - 0.5)).epsilon(0.01));
  CHECK(mean_abs > 30.0);
}

TEST_CASE("squashed log density integrates to the Gaussian CDF") {
  std::mt19937_64 rng(6);
  ResidualPolicy p(small_policy(1, 1), rng);
  const double mu = 0.3, log_sigma = std::log(0.5);
  pin_policy(p, mu, log_sigma);
  const Matrix obs = Matrix::Zero(1, 1);
  auto density = [&](double a) {
    const double xi = (std::atanh(a) - mu) / std::exp(log_sigma);
    return std::exp(p.evaluate(obs, Matrix::Constant(1, 1, xi)).log_prob(0));
  };
  // Composite Simpson in action space on [-1 + 1e-9, c].
  auto integrate = [&](double lo, double hi) {
    const int n = 20000;
    const double h = (hi - lo) / n;
    double s = density(lo) + density(hi);
    for (int i = 1; i < n; ++i) s += (i % 2 ? 4.0 : 2.0) * density(lo + i * h);
    return s * h / 3.0;
  };
  for (double c : {-0.5, 0.0, 0.29, 0.8}) {
    const double expected = normal_cdf((std::atanh(c) - mu) / 0.5);
    CHECK(integrate(-1.0 + 1e-9, c) == doctest::Approx(expected).epsilon(1e-4));
  }
  CHECK(integrate(-1.0 + 1e-9, 1.0 - 1e-9) == doctest::Approx(1.0).epsilon(1e-4));
}

TEST_CASE("tape sample matches the graph-free sample and its gradients") {
  std::mt19937_64 rng(7);
  PolicySpec s = small_policy(3, 2);
  s.hidden_dims = {5};
  s.init_log_std = -1.0;
  s.final_weight_scale = 0.3;
  ResidualPolicy p(s, rng);
  const Matrix obs = random_obs(4, 3, rng);
  const Matrix noise = standard_normal(4, 2, rng);

  Tape tape;
  auto smp = p.sample(tape, tape.input(obs, false), noise);
  const auto draw = p.evaluate(obs, noise);
  CHECK((smp.action.value() - draw.action).cwiseAbs().maxCoeff() < 1e-14);
  CHECK((smp.log_prob.value().col(0) - draw.log_prob).cwiseAbs().maxCoeff() < 1e-12);

  // Objective mixes both outputs so every path is exercised.
  Var obj = dawn::diff::add(dawn::diff::sum_all(smp.log_prob), dawn::diff::scale(dawn::diff::sum_all(smp.action), 3.0));
  p.params().zero_grad();
  tape.backward(obj);
  auto f = [&] {
    const auto d = p.evaluate(obs, noise);
    return d.log_prob.sum() + 3.0 * d.action.sum();
  };
  for (auto& param : p.params().all()) {
    for (Eigen::Index i = 0; i < param.value.size(); ++i) {
      const double numeric = dawn::testing::central_difference(f, param.value.data()[i]);
      CHECK(dawn::testing::gradients_agree(param.grad.data()[i], numeric));
    }
  }
}

TEST_CASE("combine composes and clips") {
  Vector base(2), res(2);
  base << 0.5, 0.95;
  res << 1.0, 1.0;
  const Vector a = combine(base, res, 0.1);
  CHECK(a(0) == doctest::Approx(0.6).epsilon(1e-15));
  CHECK(a(1) == 1.0);
  CHECK(combine(base, res, 0.0) == base);
  CHECK_THROWS_AS(combine(base, Vector::Zero(3), 0.1), dawn::UsageError);
}

TEST_CASE("critic spec validation and sizes") {
  CriticSpec s;
  s.obs_dim = 3;
  s.action_dim = 2;
  CHECK(s.heads() == 2);
  s.head = HeadKind::Tqc;
  CHECK(s.heads() == 5);
  CHECK(s.output_dim() == 25);
  s.tqc_drop = 25;
  CHECK_THROWS_AS(s.validate(), dawn::ConfigError);
  s.head = HeadKind::C51;
  s.v_min = 0.0;
  CHECK_THROWS_AS(s.validate(), dawn::ConfigError);
  CHECK(categorical_v_min(0.97, 200) == doctest::Approx(-(1.0 - std::pow(0.97, 200)) / 0.03));
}

TEST_CASE("support atoms and quantile fractions") {
  const Vector z = categorical_atoms(51, -35.0, 0.0);
  CHECK(z(0) == -35.0);
  CHECK(z(50) == 0.0);
  for (int i = 1; i < 51; ++i) CHECK(z(i) - z(i - 1) == doctest::Approx(0.7).epsilon(1e-12));
  const Vector t = quantile_fractions(25);
  for (int i = 0; i < 25; ++i) {
    CHECK(t(i) > 0.0);
    CHECK(t(i) < 1.0);
    if (i > 0) CHECK(t(i) > t(i - 1));
  }
  CHECK(t(0) == doctest::Approx(0.02));
}

TEST_CASE("q_value of constructed distributions") {
  std::mt19937_64 rng(8);
  CriticSpec s;
  s.obs_dim = 2;
  s.action_dim = 1;
  s.hidden_dims = {8};
  s.head = HeadKind::C51;
  s.atoms = 11;
  s.v_min = -10.0;
  s.v_max = 0.0;
  CriticEnsemble c(s, rng);
  for (int k = 0; k < c.size(); ++k) {
    auto& h = c.head(k);
    h.params()[h.output_weight_index()].value.setZero();
    auto& b = h.params()[h.output_bias_index()].value;
    b.setConstant(-1000.0);
    b(0, 5) = 0.0;
  }
  Vector obs = Vector::Ones(2), act = Vector::Zero(1);
  CHECK(q_value(c, obs, act) == -5.0);
  const auto dist = c.distribution(0, Vector::Ones(3));
  CHECK(dist.probs.sum() == doctest::Approx(1.0).epsilon(1e-12));

  s.head = HeadKind::Quantile;
  s.quantiles = 7;
  CriticEnsemble q(s, rng);
  for (int k = 0; k < q.size(); ++k) {
    auto& h = q.head(k);
    h.params()[h.output_weight_index()].value.setZero();
    h.params()[h.output_bias_index()].value.setConstant(-2.5);
  }
  CHECK(q_value(q, obs, act, QReduce::Min) == doctest::Approx(-2.5).epsilon(1e-15));
}

TEST_CASE("expectations match brute force for random heads") {
  std::mt19937_64 rng(9);
  for (HeadKind kind : {HeadKind::C51, HeadKind::Quantile, HeadKind::Tqc, HeadKind::Scalar}) {
    CriticSpec s;
    s.obs_dim = 3;
    s.action_dim = 2;
    s.hidden_dims = {16, 16};
    s.head = kind;
    s.hidden_norm = dawn::diff::HiddenNorm::LayerNorm;
    CriticEnsemble c(s, rng);
    const Matrix input = standard_normal(20, 5, rng);
    for (int k = 0; k < c.size(); ++k) {
      const Vector e = c.expectations(k, input);
      Tape tape;
      const Matrix on_tape = c.expectation(tape, k, tape.input(input, false)).value();
      for (Eigen::Index r = 0; r < input.rows(); ++r) {
        const auto d = c.distribution(k, input.row(r).transpose());
        double brute = 0.0;
        if (kind == HeadKind::C51) {
          for (Eigen::Index i = 0; i < d.probs.size(); ++i) brute += d.probs(i) * d.atoms(i);
          CHECK(d.probs.sum() == doctest::Approx(1.0).epsilon(1e-6));
        } else if (kind == HeadKind::Scalar) {
          brute = d.scalar;
        } else {
          for (Eigen::Index i = 0; i < d.quantiles.size(); ++i) brute += d.quantiles(i);
          brute /= static_cast<double>(d.quantiles.size());
        }
        CHECK(std::abs(e(r) - brute) <= 1e-10);
        CHECK(std::abs(on_tape(r, 0) - brute) <= 1e-10);
      }
    }
  }
}

TEST_CASE("EMA targets") {
  std::mt19937_64 rng(10);
  CriticSpec s;
  s.obs_dim = 2;
  s.action_dim = 1;
  s.hidden_dims = {4};
  CriticEnsemble c(s, rng);
  const Matrix initial = c.target_head(0).params()[0].value;
  CHECK(initial == c.head(0).params()[0].value);
  c.head(0).params()[0].value.array() += 1.0;
  c.ema_update(1.0);
  CHECK(c.target_head(0).params()[0].value == c.head(0).params()[0].value);

  c.head(0).params()[0].value.array() += 1.0;
  const Matrix gap0 = c.head(0).params()[0].value - c.target_head(0).params()[0].value;
  // Gap shrinks by (1 - tau) per step; ln 2 / -ln 0.99 = 68.97 steps to halve.
  for (int t = 0; t < 69; ++t) c.ema_update(0.01);
  const Matrix gap = c.head(0).params()[0].value - c.target_head(0).params()[0].value;
  CHECK((gap.array() / gap0.array()).maxCoeff() == doctest::Approx(std::pow(0.99, 69)).epsilon(1e-9));
  CHECK((gap.array() / gap0.array()).maxCoeff() == doctest::Approx(0.5).epsilon(0.01));
  for (int t = 0; t < 1000; ++t) c.ema_update(0.01);
  for (int k = 0; k < c.size(); ++k) {
    CHECK(c.target_head(k).params().all_finite());
    CHECK(c.target_head(k).params().same_shapes(c.head(k).params()));
  }
  CHECK_THROWS_AS(c.ema_update(0.0), dawn::ConfigError);
}

TEST_CASE("categorical projection examples") {
  const Vector z = categorical_atoms(5, -4.0, 0.0);
  Matrix p = Matrix::Zero(1, 5);
  p(0, 3) = 1.0;
  // -1 + 1 * (z_3 - 0) = -2 lands on atom 2.
  Matrix out = project_categorical(p, z, Vector::Constant(1, -1.0), Vector::Constant(1, 1.0), Vector::Zero(1));
  CHECK(out(0, 2) == 1.0);
  CHECK(out.sum() == 1.0);
  // Landing at -2.5 splits between atoms 1 and 2.
  out = project_categorical(p, z, Vector::Constant(1, -1.5), Vector::Constant(1, 1.0), Vector::Zero(1));
  CHECK(out(0, 1) == doctest::Approx(0.5));
  CHECK(out(0, 2) == doctest::Approx(0.5));
  // Terminal rows collapse onto the reward.
  out = project_categorical(p, z, Vector::Constant(1, -1.0), Vector::Zero(1), Vector::Constant(1, 30.0));
  CHECK(out(0, 3) == 1.0);
  // Anything below the support is clipped onto v_min.
  out = project_categorical(p, z, Vector::Constant(1, -10.0), Vector::Constant(1, 1.0), Vector::Zero(1));
  CHECK(out(0, 0) == 1.0);
}

TEST_CASE("categorical projection agrees with the triangle-kernel oracle") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const Vector z = categorical_atoms(51, -35.0, 0.0);
  for (int trial = 0; trial < 100; ++trial) {
    Matrix p(4, 51);
    for (Eigen::Index i = 0; i < p.size(); ++i) p.data()[i] = u(rng);
    p.array().colwise() /= p.rowwise().sum().array();
    Vector r(4), disc(4), ent(4);
    for (int b = 0; b < 4; ++b) {
      r(b) = u(rng) < 0.3 ? 0.0 : -1.0;
      disc(b) = u(rng) < 0.1 ? 0.0 : 0.97;
      ent(b) = 20.0 * (u(rng) - 0.5);
    }
    const Matrix got = project_categorical(p, z, r, disc, ent);
    const Matrix want = dawn::testing::projection_oracle(p, z, r, disc, ent);
    CHECK((got - want).cwiseAbs().maxCoeff() <= 1e-12);
    for (int b = 0; b < 4; ++b) {
      CHECK(std::abs(got.row(b).sum() - 1.0) <= 1e-6);
      CHECK(got.row(b).minCoeff() >= 0.0);
      double shifted = 0.0;
      for (int i = 0; i < 51; ++i) shifted += p(b, i) * std::clamp(r(b) + disc(b) * (z(i) - ent(b)), -35.0, 0.0);
      CHECK(std::abs(got.row(b).dot(z) - shifted) <= 0.7);
    }
  }
}

TEST_CASE("quantile Huber loss: hand value and double-loop oracle") {
  Matrix theta = Matrix::Zero(1, 1);
  Matrix y = Matrix::Constant(1, 1, 2.0);
  CHECK(quantile_huber_loss(theta, y, quantile_fractions(1), 1.0) == 0.75);
  CHECK(quantile_huber_loss(y, y, quantile_fractions(1), 1.0) == 0.0);

  std::mt19937_64 rng(12);
  std::normal_distribution<double> n(0.0, 2.0);
  for (int trial = 0; trial < 50; ++trial) {
    const int nq = trial < 25 ? 2 : 25;
    std::vector<double> th(static_cast<std::size_t>(nq)), tg(static_cast<std::size_t>(nq + 3));
    for (auto& v : th) v = n(rng);
    for (auto& v : tg) v = n(rng);
    Matrix tm(1, nq), ym(1, nq + 3);
    for (int i = 0; i < nq; ++i) tm(0, i) = th[static_cast<std::size_t>(i)];
    for (int j = 0; j < nq + 3; ++j) ym(0, j) = tg[static_cast<std::size_t>(j)];
    const double oracle = dawn::testing::quantile_loss_oracle(th, tg, 1.0);
    CHECK(std::abs(quantile_huber_loss(tm, ym, quantile_fractions(nq), 1.0) - oracle) <= 1e-10);
    Tape tape;
    Var l = dawn::diff::quantile_huber(tape.input(tm, true), ym, quantile_fractions(nq), 1.0);
    CHECK(std::abs(l.item() - oracle) <= 1e-10);
  }
}

TEST_CASE("truncated pool keeps the lowest K(N-d) quantiles") {
  std::vector<Matrix> heads(2, Matrix(1, 3));
  heads[0] << 3.0, -1.0, 7.0;
  heads[1] << 0.5, 9.0, 2.0;
  const Matrix kept = truncated_pool(heads, 1);
  CHECK(kept.cols() == 4);
  const auto oracle = dawn::testing::sort_and_drop({{3.0, -1.0, 7.0}, {0.5, 9.0, 2.0}}, 1);
  for (int j = 0; j < 4; ++j) CHECK(kept(0, j) == oracle[static_cast<std::size_t>(j)]);
  CHECK(truncated_pool(heads, 0).cols() == 6);
  CHECK_THROWS_AS(truncated_pool(heads, 3), dawn::ConfigError);

  std::mt19937_64 rng(13);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<Matrix> hs(5, Matrix(1, 25));
    std::vector<std::vector<double>> raw(5, std::vector<double>(25));
    for (int k = 0; k < 5; ++k) {
      for (int i = 0; i < 25; ++i) hs[static_cast<std::size_t>(k)](0, i) = raw[static_cast<std::size_t>(k)][static_cast<std::size_t>(i)] = n(rng);
    }
    const Matrix got = truncated_pool(hs, 2);
    const auto want = dawn::testing::sort_and_drop(raw, 2);
    REQUIRE(got.cols() == static_cast<Eigen::Index>(want.size()));
    for (std::size_t j = 0; j < want.size(); ++j) CHECK(got(0, static_cast<Eigen::Index>(j)) == want[j]);
  }
}
