#include "dawn/buffer/replay.hpp"
#include "dawn/errors.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <map>
#include <random>

using namespace dawn::buffer;
using dawn::diff::Vector;

namespace {

Transition make(int obs_dim, int act_dim, double tag) {
  Transition t;
  t.obs = Vector::Constant(obs_dim, tag);
  t.next_obs = Vector::Constant(obs_dim, tag + 0.5);
  t.a_base = Vector::Constant(act_dim, 0.1);
  t.a_res = Vector::Zero(act_dim);
  t.a_executed = t.a_base;
  t.reward = -1.0;
  t.episode_id = static_cast<std::int64_t>(tag);
  return t;
}

struct Fixture {
  std::unique_ptr<dawn::env::Environment> env = dawn::env::make_env("point-insert-2d");
  dawn::base::BasePolicy base = dawn::base::make_base_policy(*env);
  std::mt19937_64 init_rng{3};
  dawn::agent::ResidualPolicy policy{[this] {
                                       dawn::agent::PolicySpec s;
                                       s.obs_dim = 6;
                                       s.action_dim = 2;
                                       s.hidden_dims = {32, 32};
                                       return s;
                                     }(),
                                     init_rng};
};

}  // namespace

TEST_CASE("single-element buffer returns its transition") {
  ReplayBuffer b(3, 2, 10);
  std::mt19937_64 rng(1);
  CHECK_THROWS_AS(b.sample(1, rng), dawn::UsageError);
  b.add(make(3, 2, 4.0));
  const Batch s = b.sample(1, rng);
  CHECK(s.obs(0, 0) == 4.0);
  CHECK(s.next_obs(0, 2) == 4.5);
  CHECK(s.ids[0] == 0);
}

TEST_CASE("FIFO eviction beyond capacity") {
  ReplayBuffer b(1, 1, 5);
  for (int i = 0; i < 6; ++i) {
    b.add(make(1, 1, i));
    CHECK(b.size() <= 5);
  }
  CHECK(b.size() == 5);
  CHECK(b.at(0).obs(0) == 1.0);
  CHECK(b.at(4).obs(0) == 5.0);
  for (int i = 6; i < 23; ++i) b.add(make(1, 1, i));
  std::mt19937_64 rng(2);
  const Batch s = b.sample(2000, rng);
  const std::int64_t oldest = b.next_id() - static_cast<std::int64_t>(b.size());
  for (auto id : s.ids) CHECK(id >= oldest);
  for (Eigen::Index r = 0; r < s.size(); ++r) CHECK(s.obs(r, 0) == static_cast<double>(s.ids[static_cast<std::size_t>(r)]));
}

TEST_CASE("uniform sampling frequency and reproducibility") {
  ReplayBuffer b(1, 1, 10);
  b.add(make(1, 1, 0.0));
  b.add(make(1, 1, 1.0));
  std::mt19937_64 rng(3);
  const int n = 20000;
  const Batch s = b.sample(n, rng);
  const double freq = s.obs.col(0).mean();
  CHECK(std::abs(freq - 0.5) <= 1.96 * std::sqrt(0.25 / n) * 1.5);

  std::mt19937_64 r1(9), r2(9);
  CHECK(b.sample(64, r1).ids == b.sample(64, r2).ids);
}

TEST_CASE("dump and restore round-trip") {
  ReplayBuffer b(2, 1, 4);
  for (int i = 0; i < 7; ++i) b.add(make(2, 1, i));
  const auto path = std::filesystem::temp_directory_path() / "dawn_replay_roundtrip.bin";
  b.dump(path);
  const ReplayBuffer r = ReplayBuffer::restore(path);
  CHECK(r.size() == b.size());
  CHECK(r.capacity() == b.capacity());
  CHECK(r.next_id() == b.next_id());
  for (std::size_t i = 0; i < b.size(); ++i) {
    CHECK(r.at(i).obs == b.at(i).obs);
    CHECK(r.at(i).episode_id == b.at(i).episode_id);
  }
  std::mt19937_64 r1(4), r2(4);
  CHECK(r.sample(32, r1).ids == b.sample(32, r2).ids);
  std::filesystem::remove(path);
  auto manifest = path;
  manifest += ".json";
  std::filesystem::remove(manifest);
  CHECK_THROWS_AS(ReplayBuffer::restore(path), dawn::ConfigError);
}

TEST_CASE("base-only warmup stores zero residuals and exactly M transitions") {
  Fixture f;
  ReplayBuffer b(6, 2);
  std::mt19937_64 rng(5);
  WarmupStrategy s;
  s.budget = 100;
  const auto stats = collect_warmup(s, *f.env, f.base, f.policy, 0.1, b, rng);
  CHECK(b.size() == 100);
  CHECK(stats.transitions == 100);
  CHECK(stats.residual_steps == 0);
  for (std::size_t i = 0; i < b.size(); ++i) {
    const auto t = b.at(i);
    CHECK(t.a_res.isZero(0.0));
    CHECK(t.a_executed == t.a_base);
  }
  s.budget = 0;
  collect_warmup(s, *f.env, f.base, f.policy, 0.1, b, rng);
  CHECK(b.size() == 100);
}

TEST_CASE("every strategy preserves action provenance") {
  Fixture f;
  for (auto kind : {WarmupKind::BaseOnly, WarmupKind::FullAction, WarmupKind::GaussianNoise,
                    WarmupKind::EpsilonGreedy, WarmupKind::TcNoise, WarmupKind::TcNoiseAnchor}) {
    ReplayBuffer b(6, 2);
    std::mt19937_64 rng(6);
    WarmupStrategy s;
    s.kind = kind;
    s.budget = 2000;
    collect_warmup(s, *f.env, f.base, f.policy, 0.1, b, rng);
    REQUIRE(b.size() == 2000);
    const Batch all = b.all();
    const auto recomputed = dawn::agent::combine(all.a_base, all.a_res, 0.1);
    CHECK((recomputed - all.a_executed).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK(warmup_kind_from_string(to_string(kind)) == kind);
  }
}

TEST_CASE("tc-noise keeps a constant per-episode bias with small jitter") {
  Fixture f;
  ReplayBuffer b(6, 2);
  std::mt19937_64 rng(7);
  WarmupStrategy s;
  s.kind = WarmupKind::TcNoise;
  s.budget = 4000;
  collect_warmup(s, *f.env, f.base, f.policy, 0.1, b, rng);
  const Batch all = b.all();
  std::map<std::int64_t, std::vector<Eigen::Index>> rows;
  for (Eigen::Index r = 0; r < all.size(); ++r) rows[all.episode_ids[static_cast<std::size_t>(r)]].push_back(r);
  std::vector<double> biases;
  int checked = 0;
  for (const auto& [ep, idx] : rows) {
    if (idx.size() < 30) continue;
    for (int c = 0; c < 2; ++c) {
      double mean = 0.0, sq = 0.0;
      for (auto r : idx) mean += all.a_res(r, c);
      mean /= static_cast<double>(idx.size());
      for (auto r : idx) sq += (all.a_res(r, c) - mean) * (all.a_res(r, c) - mean);
      const double sd = std::sqrt(sq / static_cast<double>(idx.size() - 1));
      CHECK(sd == doctest::Approx(0.01).epsilon(0.35));
      biases.push_back(mean);
    }
    ++checked;
  }
  CHECK(checked >= 10);
  double bsq = 0.0;
  for (double m : biases) bsq += m * m;
  CHECK(std::sqrt(bsq / static_cast<double>(biases.size())) == doctest::Approx(0.2).epsilon(0.4));
}

TEST_CASE("tc-noise-anchor alternates pure-base episodes") {
  Fixture f;
  ReplayBuffer b(6, 2);
  std::mt19937_64 rng(8);
  WarmupStrategy s;
  s.kind = WarmupKind::TcNoiseAnchor;
  s.budget = 3000;
  collect_warmup(s, *f.env, f.base, f.policy, 0.1, b, rng);
  const Batch all = b.all();
  for (Eigen::Index r = 0; r < all.size(); ++r) {
    const bool anchor = all.episode_ids[static_cast<std::size_t>(r)] % 2 == 0;
    CHECK(all.a_res.row(r).isZero(0.0) == anchor);
  }
}

TEST_CASE("epsilon-greedy mixes full-policy steps at rate epsilon") {
  Fixture f;
  ReplayBuffer b(6, 2);
  std::mt19937_64 rng(9);
  WarmupStrategy s;
  s.kind = WarmupKind::EpsilonGreedy;
  s.budget = 20000;
  const auto stats = collect_warmup(s, *f.env, f.base, f.policy, 0.1, b, rng);
  const double rate = static_cast<double>(stats.residual_steps) / static_cast<double>(stats.transitions);
  CHECK(std::abs(rate - 0.2) <= 1.96 * std::sqrt(0.2 * 0.8 / 20000.0));
}

TEST_CASE("exploration noise degrades warmup success on the precision task") {
  Fixture f;
  WarmupStrategy s;
  s.budget = 20000;
  ReplayBuffer b1(6, 2), b2(6, 2);
  std::mt19937_64 r1(10), r2(10);
  const auto base_only = collect_warmup(s, *f.env, f.base, f.policy, 0.1, b1, r1);
  s.kind = WarmupKind::GaussianNoise;
  const auto noisy = collect_warmup(s, *f.env, f.base, f.policy, 0.1, b2, r2);
  INFO("base-only " << base_only.success_rate() << " gaussian " << noisy.success_rate());
  CHECK(base_only.success_rate() >= noisy.success_rate());
}

TEST_CASE("strategy json round-trip and validation") {
  WarmupStrategy s;
  s.kind = WarmupKind::TcNoise;
  s.budget = 123;
  nlohmann::json j = s;
  const auto back = j.get<WarmupStrategy>();
  CHECK(back.kind == s.kind);
  CHECK(back.budget == 123);
  s.budget = -1;
  CHECK_THROWS_AS(s.validate(), dawn::ConfigError);
  CHECK_THROWS_AS(warmup_kind_from_string("demos"), dawn::ConfigError);
}
