#pragma once

#include "dawn/agent/policy.hpp"
#include "dawn/basepolicy/base_policy.hpp"
#include "dawn/envs/env.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

namespace dawn::buffer {

using diff::Matrix;
using diff::Vector;

struct Transition {
  Vector obs;
  Vector a_base;
  Vector a_res;
  Vector a_executed;
  double reward = -1.0;
  Vector next_obs;
  /// Terminal flag. Timeouts are truncations and stay false.
  bool done = false;
  std::int64_t episode_id = 0;
};

/// Column-stacked minibatch; row b is one sampled transition.
struct Batch {
  Matrix obs;
  Matrix a_base;
  Matrix a_res;
  Matrix a_executed;
  Vector reward;
  Matrix next_obs;
  Vector done;  // 1.0 for terminal (successful) transitions
  std::vector<std::int64_t> ids;
  std::vector<std::int64_t> episode_ids;
  Eigen::Index size() const { return obs.rows(); }
};

/// Fixed-capacity FIFO replay memory with uniform with-replacement sampling.
///
/// Storage grows on demand up to the capacity, then the oldest entry is
/// overwritten. Every insert gets a monotonically increasing id.
class ReplayBuffer {
 public:
  ReplayBuffer(int obs_dim, int action_dim, std::size_t capacity = 1'000'000);

  int obs_dim() const { return obs_dim_; }
  int action_dim() const { return act_dim_; }
  std::size_t capacity() const { return capacity_; }
  std::size_t size() const { return size_; }
  bool empty() const { return size_ == 0; }
  /// Id the next insert will receive; ids [next_id - size, next_id) are resident.
  std::int64_t next_id() const { return next_id_; }

  void add(const Transition& t);
  /// i-th oldest resident transition.
  Transition at(std::size_t i) const;
  Batch sample(std::size_t batch_size, std::mt19937_64& rng) const;
  /// Every resident transition, oldest first.
  Batch all() const;
  void clear();

  /// Flat little-endian float64 records plus a JSON manifest at path + ".json".
  void dump(const std::filesystem::path& path) const;
  static ReplayBuffer restore(const std::filesystem::path& path);

 private:
  std::size_t record_width() const { return static_cast<std::size_t>(2 * obs_dim_ + 4 * act_dim_ + 3); }
  std::size_t slot(std::size_t i) const { return (head_ + i) % capacity_; }
  void gather(Batch& b, Eigen::Index row, std::size_t slot_index) const;

  int obs_dim_;
  int act_dim_;
  std::size_t capacity_;
  std::size_t size_ = 0;
  std::size_t head_ = 0;  // slot of the oldest entry
  std::int64_t next_id_ = 0;
  // Record layout: obs | a_base | a_res | a_exec | next_obs | reward | done | episode_id
  std::vector<double> data_;
  std::vector<std::int64_t> ids_;
};

enum class WarmupKind { BaseOnly, FullAction, GaussianNoise, EpsilonGreedy, TcNoise, TcNoiseAnchor };

std::string to_string(WarmupKind kind);
WarmupKind warmup_kind_from_string(const std::string& name);

struct WarmupStrategy {
  WarmupKind kind = WarmupKind::BaseOnly;
  std::int64_t budget = 20000;
  /// Per-step action noise of gaussian-noise, in action units.
  double sigma = 0.1;
  /// Fraction of full-policy steps for epsilon-greedy.
  double epsilon = 0.2;
  /// Per-episode residual bias and per-step jitter of tc-noise, in residual units.
  double tc_sigma = 0.2;
  double tc_jitter = 0.01;

  void validate() const;
};

void to_json(nlohmann::json& j, const WarmupStrategy& s);
void from_json(const nlohmann::json& j, WarmupStrategy& s);

struct WarmupStats {
  std::int64_t transitions = 0;
  std::int64_t episodes = 0;  // completed episodes
  std::int64_t successes = 0;
  std::int64_t residual_steps = 0;  // steps whose executed action involved a non-base component
  std::int64_t next_episode_id = 0;
  double success_rate() const { return episodes == 0 ? 0.0 : static_cast<double>(successes) / episodes; }
};

/// Appends exactly strategy.budget transitions. Only successful steps are stored as
/// terminal; timeouts and a trailing partial episode are truncations.
WarmupStats collect_warmup(const WarmupStrategy& strategy, const env::Environment& env,
                           const base::BasePolicy& base, const agent::ResidualPolicy& policy, double lambda,
                           ReplayBuffer& buffer, std::mt19937_64& rng, std::int64_t first_episode_id = 0);

}  // namespace dawn::buffer
