#include "dawn/buffer/replay.hpp"

#include "dawn/errors.hpp"

#include <bit>
#include <fstream>

namespace dawn::buffer {

ReplayBuffer::ReplayBuffer(int obs_dim, int action_dim, std::size_t capacity)
    : obs_dim_(obs_dim), act_dim_(action_dim), capacity_(capacity) {
  if (obs_dim < 1 || action_dim < 1) throw ConfigError("replay buffer dims must be >= 1");
  if (capacity == 0) throw ConfigError("replay buffer capacity must be >= 1");
}

void ReplayBuffer::add(const Transition& t) {
  if (t.obs.size() != obs_dim_ || t.next_obs.size() != obs_dim_ || t.a_base.size() != act_dim_ ||
      t.a_res.size() != act_dim_ || t.a_executed.size() != act_dim_) {
    throw UsageError("transition shape does not match the replay buffer");
  }
  const std::size_t w = record_width();
  std::size_t s;
  if (size_ < capacity_) {
    s = size_;
    data_.resize(data_.size() + w);
    ids_.push_back(0);
    ++size_;
  } else {
    s = head_;
    head_ = (head_ + 1) % capacity_;
  }
  double* rec = data_.data() + s * w;
  auto put = [&rec](const Vector& v) {
    for (Eigen::Index i = 0; i < v.size(); ++i) *rec++ = v(i);
  };
  put(t.obs);
  put(t.a_base);
  put(t.a_res);
  put(t.a_executed);
  put(t.next_obs);
  *rec++ = t.reward;
  *rec++ = t.done ? 1.0 : 0.0;
  *rec++ = static_cast<double>(t.episode_id);
  ids_[s] = next_id_++;
}

void ReplayBuffer::gather(Batch& b, Eigen::Index row, std::size_t slot_index) const {
  const double* rec = data_.data() + slot_index * record_width();
  const Eigen::Index o = obs_dim_, a = act_dim_;
  b.obs.row(row) = Eigen::Map<const Eigen::RowVectorXd>(rec, o);
  rec += o;
  b.a_base.row(row) = Eigen::Map<const Eigen::RowVectorXd>(rec, a);
  rec += a;
  b.a_res.row(row) = Eigen::Map<const Eigen::RowVectorXd>(rec, a);
  rec += a;
  b.a_executed.row(row) = Eigen::Map<const Eigen::RowVectorXd>(rec, a);
  rec += a;
  b.next_obs.row(row) = Eigen::Map<const Eigen::RowVectorXd>(rec, o);
  rec += o;
  b.reward(row) = rec[0];
  b.done(row) = rec[1];
  b.episode_ids[static_cast<std::size_t>(row)] = static_cast<std::int64_t>(rec[2]);
  b.ids[static_cast<std::size_t>(row)] = ids_[slot_index];
}

namespace {

Batch allocate(Eigen::Index n, int o, int a) {
  Batch b;
  b.obs.resize(n, o);
  b.a_base.resize(n, a);
  b.a_res.resize(n, a);
  b.a_executed.resize(n, a);
  b.next_obs.resize(n, o);
  b.reward.resize(n);
  b.done.resize(n);
  b.ids.resize(static_cast<std::size_t>(n));
  b.episode_ids.resize(static_cast<std::size_t>(n));
  return b;
}

}  // namespace

Transition ReplayBuffer::at(std::size_t i) const {
  if (i >= size_) throw UsageError("replay index out of range");
  Batch b = allocate(1, obs_dim_, act_dim_);
  gather(b, 0, slot(i));
  Transition t;
  t.obs = b.obs.row(0).transpose();
  t.a_base = b.a_base.row(0).transpose();
  t.a_res = b.a_res.row(0).transpose();
  t.a_executed = b.a_executed.row(0).transpose();
  t.next_obs = b.next_obs.row(0).transpose();
  t.reward = b.reward(0);
  t.done = b.done(0) != 0.0;
  t.episode_id = b.episode_ids[0];
  return t;
}

Batch ReplayBuffer::sample(std::size_t batch_size, std::mt19937_64& rng) const {
  if (empty()) throw UsageError("cannot sample from an empty replay buffer");
  const auto n = static_cast<Eigen::Index>(batch_size);
  Batch b = allocate(n, obs_dim_, act_dim_);
  std::uniform_int_distribution<std::size_t> pick(0, size_ - 1);
  for (Eigen::Index r = 0; r < n; ++r) gather(b, r, slot(pick(rng)));
  return b;
}

Batch ReplayBuffer::all() const {
  const auto n = static_cast<Eigen::Index>(size_);
  Batch b = allocate(n, obs_dim_, act_dim_);
  for (Eigen::Index r = 0; r < n; ++r) gather(b, r, slot(static_cast<std::size_t>(r)));
  return b;
}

void ReplayBuffer::clear() {
  data_.clear();
  ids_.clear();
  size_ = 0;
  head_ = 0;
}

namespace {

void write_le(std::ofstream& out, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  char bytes[8];
  for (int k = 0; k < 8; ++k) bytes[k] = static_cast<char>((bits >> (8 * k)) & 0xffU);
  out.write(bytes, 8);
}

double read_le(std::ifstream& in) {
  unsigned char bytes[8];
  in.read(reinterpret_cast<char*>(bytes), 8);
  if (!in) throw ConfigError("replay dump truncated");
  std::uint64_t bits = 0;
  for (int k = 0; k < 8; ++k) bits |= static_cast<std::uint64_t>(bytes[k]) << (8 * k);
  return std::bit_cast<double>(bits);
}

std::filesystem::path manifest_of(const std::filesystem::path& p) {
  auto m = p;
  m += ".json";
  return m;
}

}  // namespace

void ReplayBuffer::dump(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path.string());
  const std::size_t w = record_width();
  for (std::size_t i = 0; i < size_; ++i) {
    const double* rec = data_.data() + slot(i) * w;
    for (std::size_t k = 0; k < w; ++k) write_le(out, rec[k]);
  }
  nlohmann::json m;
  m["format"] = "dawn-replay-v1";
  m["dtype"] = "float64-le";
  m["obs_dim"] = obs_dim_;
  m["action_dim"] = act_dim_;
  m["capacity"] = capacity_;
  m["size"] = size_;
  m["first_id"] = next_id_ - static_cast<std::int64_t>(size_);
  m["next_id"] = next_id_;
  m["record"] = {{"obs", obs_dim_},      {"a_base", act_dim_}, {"a_res", act_dim_}, {"a_executed", act_dim_},
                 {"next_obs", obs_dim_}, {"reward", 1},        {"done", 1},         {"episode_id", 1}};
  m["record_order"] = {"obs", "a_base", "a_res", "a_executed", "next_obs", "reward", "done", "episode_id"};
  std::ofstream mf(manifest_of(path));
  mf << m.dump(2) << '\n';
}

ReplayBuffer ReplayBuffer::restore(const std::filesystem::path& path) {
  std::ifstream mf(manifest_of(path));
  if (!mf) throw ConfigError("missing replay manifest for " + path.string());
  const auto m = nlohmann::json::parse(mf);
  if (m.at("format") != "dawn-replay-v1") throw ConfigError("unsupported replay format");
  ReplayBuffer b(m.at("obs_dim").get<int>(), m.at("action_dim").get<int>(), m.at("capacity").get<std::size_t>());
  const auto n = m.at("size").get<std::size_t>();
  if (n > b.capacity_) throw ConfigError("replay dump larger than its capacity");
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read " + path.string());
  const std::size_t w = b.record_width();
  b.data_.resize(n * w);
  b.ids_.resize(n);
  for (std::size_t i = 0; i < n * w; ++i) b.data_[i] = read_le(in);
  const auto first = m.at("first_id").get<std::int64_t>();
  for (std::size_t i = 0; i < n; ++i) b.ids_[i] = first + static_cast<std::int64_t>(i);
  b.size_ = n;
  b.head_ = 0;
  b.next_id_ = m.at("next_id").get<std::int64_t>();
  return b;
}

// ---- warmup collection ---------------------------------------------------------

std::string to_string(WarmupKind kind) {
  switch (kind) {
    case WarmupKind::BaseOnly: return "base-only";
    case WarmupKind::FullAction: return "full-action";
    case WarmupKind::GaussianNoise: return "gaussian-noise";
    case WarmupKind::EpsilonGreedy: return "epsilon-greedy";
    case WarmupKind::TcNoise: return "tc-noise";
    case WarmupKind::TcNoiseAnchor: return "tc-noise-anchor";
  }
  return "base-only";
}

WarmupKind warmup_kind_from_string(const std::string& name) {
  for (auto k : {WarmupKind::BaseOnly, WarmupKind::FullAction, WarmupKind::GaussianNoise, WarmupKind::EpsilonGreedy,
                 WarmupKind::TcNoise, WarmupKind::TcNoiseAnchor}) {
    if (to_string(k) == name) return k;
  }
  throw ConfigError("unknown warmup strategy '" + name + "'");
}

void WarmupStrategy::validate() const {
  if (budget < 0) throw ConfigError("warmup budget must be >= 0");
  if (!(sigma >= 0.0) || !(tc_sigma >= 0.0) || !(tc_jitter >= 0.0)) {
    throw ConfigError("warmup noise scales must be >= 0");
  }
  if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw ConfigError("warmup epsilon must lie in [0, 1]");
}

void to_json(nlohmann::json& j, const WarmupStrategy& s) {
  j = {{"kind", to_string(s.kind)}, {"budget", s.budget},     {"sigma", s.sigma},
       {"epsilon", s.epsilon},      {"tc_sigma", s.tc_sigma}, {"tc_jitter", s.tc_jitter}};
}

void from_json(const nlohmann::json& j, WarmupStrategy& s) {
  s.kind = warmup_kind_from_string(j.at("kind").get<std::string>());
  s.budget = j.at("budget").get<std::int64_t>();
  s.sigma = j.at("sigma").get<double>();
  s.epsilon = j.at("epsilon").get<double>();
  s.tc_sigma = j.at("tc_sigma").get<double>();
  s.tc_jitter = j.at("tc_jitter").get<double>();
}

WarmupStats collect_warmup(const WarmupStrategy& strategy, const env::Environment& env,
                           const base::BasePolicy& base, const agent::ResidualPolicy& policy, double lambda,
                           ReplayBuffer& buffer, std::mt19937_64& rng, std::int64_t first_episode_id) {
  strategy.validate();
  if (!(lambda > 0.0)) throw ConfigError("lambda must be positive");
  WarmupStats stats;
  stats.next_episode_id = first_episode_id;
  if (strategy.budget == 0) return stats;

  const int d = env.action_dim();
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  env::EnvState state;
  bool need_reset = true;
  bool anchor_episode = false;
  Vector tc_bias = Vector::Zero(d);
  std::int64_t episode = first_episode_id - 1;

  while (stats.transitions < strategy.budget) {
    if (need_reset) {
      state = env.reset(rng());
      ++episode;
      need_reset = false;
      if (strategy.kind == WarmupKind::TcNoise || strategy.kind == WarmupKind::TcNoiseAnchor) {
        for (int i = 0; i < d; ++i) tc_bias(i) = strategy.tc_sigma * normal(rng);
        // Anchor variant alternates pure-base and noisy episodes.
        anchor_episode = strategy.kind == WarmupKind::TcNoiseAnchor && (episode - first_episode_id) % 2 == 0;
      }
    }
    Transition t;
    t.obs = state.observation;
    t.a_base = base.action(state.observation);
    t.a_res = Vector::Zero(d);
    bool residual = false;
    switch (strategy.kind) {
      case WarmupKind::BaseOnly: break;
      case WarmupKind::FullAction: residual = true; break;
      case WarmupKind::EpsilonGreedy: residual = unit(rng) < strategy.epsilon; break;
      case WarmupKind::GaussianNoise:
        for (int i = 0; i < d; ++i) t.a_res(i) = strategy.sigma * normal(rng) / lambda;
        break;
      case WarmupKind::TcNoise:
      case WarmupKind::TcNoiseAnchor:
        if (!anchor_episode) {
          for (int i = 0; i < d; ++i) t.a_res(i) = tc_bias(i) + strategy.tc_jitter * normal(rng);
        }
        break;
    }
    if (residual) t.a_res = policy.sample(state.observation.transpose(), rng).action.row(0).transpose();
    if (residual || !t.a_res.isZero(0.0)) ++stats.residual_steps;
    t.a_executed = agent::combine(t.a_base, t.a_res, lambda);
    auto [next, r] = env.step(state, t.a_executed);
    t.reward = r.reward;
    t.next_obs = r.next_observation;
    // Only success terminates; the time index is unobserved, so timeouts keep bootstrapping.
    t.done = r.success;
    t.episode_id = episode;
    buffer.add(t);
    ++stats.transitions;
    state = std::move(next);
    if (r.done) {
      ++stats.episodes;
      stats.successes += r.success ? 1 : 0;
      need_reset = true;
    }
  }
  stats.next_episode_id = episode + 1;
  return stats;
}

}  // namespace dawn::buffer
