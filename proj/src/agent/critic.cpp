#include "dawn/agent/critic.hpp"

#include "dawn/errors.hpp"

#include <algorithm>
#include <cmath>

namespace dawn::agent {

std::string to_string(HeadKind kind) {
  switch (kind) {
    case HeadKind::Scalar: return "scalar";
    case HeadKind::C51: return "c51";
    case HeadKind::Quantile: return "quantile";
    case HeadKind::Tqc: return "tqc";
  }
  return "scalar";
}

HeadKind head_kind_from_string(const std::string& name) {
  if (name == "scalar" || name == "mse") return HeadKind::Scalar;
  if (name == "c51") return HeadKind::C51;
  if (name == "quantile" || name == "qr") return HeadKind::Quantile;
  if (name == "tqc") return HeadKind::Tqc;
  throw ConfigError("unknown critic head '" + name + "'");
}

int CriticSpec::heads() const {
  if (ensemble > 0) return ensemble;
  return head == HeadKind::Tqc ? 5 : 2;
}

int CriticSpec::output_dim() const {
  switch (head) {
    case HeadKind::Scalar: return 1;
    case HeadKind::C51: return atoms;
    case HeadKind::Quantile:
    case HeadKind::Tqc: return quantiles;
  }
  return 1;
}

void CriticSpec::validate() const {
  if (obs_dim < 1 || action_dim < 1) throw ConfigError("critic dims must be >= 1");
  if (ensemble < 0) throw ConfigError("critic ensemble size must be >= 0");
  if (head == HeadKind::C51) {
    if (!(v_min < v_max)) throw ConfigError("categorical support needs v_min < v_max");
    if (atoms < 2) throw ConfigError("categorical head needs at least two atoms");
  }
  if (head == HeadKind::Quantile || head == HeadKind::Tqc) {
    if (quantiles < 1) throw ConfigError("quantile head needs at least one quantile");
    if (!(kappa > 0.0)) throw ConfigError("quantile Huber kappa must be positive");
  }
  if (head == HeadKind::Tqc && (tqc_drop < 0 || tqc_drop >= quantiles)) {
    throw ConfigError("TQC drop count must satisfy 0 <= d < N");
  }
}

void to_json(nlohmann::json& j, const CriticSpec& s) {
  j = {{"obs_dim", s.obs_dim},   {"action_dim", s.action_dim}, {"hidden_dims", s.hidden_dims},
       {"hidden_norm", diff::to_string(s.hidden_norm)},        {"head", to_string(s.head)},
       {"ensemble", s.ensemble}, {"atoms", s.atoms},           {"v_min", s.v_min},
       {"v_max", s.v_max},       {"quantiles", s.quantiles},   {"tqc_drop", s.tqc_drop},
       {"kappa", s.kappa}};
}

void from_json(const nlohmann::json& j, CriticSpec& s) {
  s.obs_dim = j.at("obs_dim").get<int>();
  s.action_dim = j.at("action_dim").get<int>();
  s.hidden_dims = j.at("hidden_dims").get<std::vector<int>>();
  s.hidden_norm = diff::hidden_norm_from_string(j.at("hidden_norm").get<std::string>());
  s.head = head_kind_from_string(j.at("head").get<std::string>());
  s.ensemble = j.at("ensemble").get<int>();
  s.atoms = j.at("atoms").get<int>();
  s.v_min = j.at("v_min").get<double>();
  s.v_max = j.at("v_max").get<double>();
  s.quantiles = j.at("quantiles").get<int>();
  s.tqc_drop = j.at("tqc_drop").get<int>();
  s.kappa = j.at("kappa").get<double>();
}

double categorical_v_min(double gamma, int horizon) {
  if (!(gamma > 0.0 && gamma < 1.0)) throw ConfigError("gamma must lie in (0, 1)");
  return -(1.0 - std::pow(gamma, horizon)) / (1.0 - gamma);
}

Vector categorical_atoms(int n, double v_min, double v_max) {
  if (n < 2 || !(v_min < v_max)) throw ConfigError("invalid categorical support");
  Vector z(n);
  const double dz = (v_max - v_min) / (n - 1);
  for (int i = 0; i < n; ++i) z(i) = v_min + i * dz;
  z(n - 1) = v_max;
  return z;
}

Vector quantile_fractions(int n) {
  if (n < 1) throw ConfigError("need at least one quantile");
  Vector t(n);
  for (int i = 0; i < n; ++i) t(i) = (2.0 * i + 1.0) / (2.0 * n);
  return t;
}

double ValueDistribution::expectation() const {
  switch (kind) {
    case Kind::Scalar: return scalar;
    case Kind::Categorical: return probs.dot(atoms);
    case Kind::Quantiles: return quantiles.mean();
  }
  return scalar;
}

CriticEnsemble::CriticEnsemble(CriticSpec spec, std::mt19937_64& rng) : spec_(std::move(spec)) {
  spec_.validate();
  diff::MlpSpec ms;
  ms.input_dim = spec_.obs_dim + spec_.action_dim;
  ms.hidden_dims = spec_.hidden_dims;
  ms.output_dim = spec_.output_dim();
  ms.hidden_norm = spec_.hidden_norm;
  for (int k = 0; k < spec_.heads(); ++k) online_.emplace_back(ms, rng);
  target_ = online_;
  if (spec_.head == HeadKind::C51) atoms_ = categorical_atoms(spec_.atoms, spec_.v_min, spec_.v_max);
  if (spec_.head == HeadKind::Quantile || spec_.head == HeadKind::Tqc) taus_ = quantile_fractions(spec_.quantiles);
}

Var CriticEnsemble::forward(Tape& tape, int k, Var input, bool trainable) {
  return head(k).forward(tape, input, trainable);
}

Var CriticEnsemble::expectation(Tape& tape, int k, Var input, bool trainable) {
  Var raw = forward(tape, k, input, trainable);
  switch (spec_.head) {
    case HeadKind::Scalar: return raw;
    case HeadKind::C51: return diff::matmul(diff::softmax_rows(raw), tape.constant(atoms_));
    case HeadKind::Quantile:
    case HeadKind::Tqc: return diff::mean_rows(raw);
  }
  return raw;
}

Matrix CriticEnsemble::predict(int k, const Matrix& input, bool target) const {
  Matrix raw = (target ? target_head(k) : head(k)).predict(input);
  if (spec_.head == HeadKind::C51) {
    const Vector mx = raw.rowwise().maxCoeff();
    raw.colwise() -= mx;
    raw = raw.array().exp().matrix();
    const Vector s = raw.rowwise().sum();
    raw.array().colwise() /= s.array();
  }
  return raw;
}

Vector CriticEnsemble::expectation_of(const Matrix& raw) const {
  switch (spec_.head) {
    case HeadKind::Scalar: return raw.col(0);
    case HeadKind::C51: return raw * atoms_;
    case HeadKind::Quantile:
    case HeadKind::Tqc: return raw.rowwise().mean();
  }
  return raw.col(0);
}

Vector CriticEnsemble::expectations(int k, const Matrix& input, bool target) const {
  return expectation_of(predict(k, input, target));
}

Matrix CriticEnsemble::all_expectations(const Matrix& input, bool target) const {
  Matrix out(input.rows(), size());
  for (int k = 0; k < size(); ++k) out.col(k) = expectations(k, input, target);
  return out;
}

ValueDistribution CriticEnsemble::distribution(int k, const Vector& input, bool target) const {
  const Matrix raw = predict(k, input.transpose(), target);
  ValueDistribution d;
  switch (spec_.head) {
    case HeadKind::Scalar:
      d.kind = ValueDistribution::Kind::Scalar;
      d.scalar = raw(0, 0);
      break;
    case HeadKind::C51:
      d.kind = ValueDistribution::Kind::Categorical;
      d.probs = raw.row(0).transpose();
      d.atoms = atoms_;
      break;
    case HeadKind::Quantile:
    case HeadKind::Tqc:
      d.kind = ValueDistribution::Kind::Quantiles;
      d.quantiles = raw.row(0).transpose();
      d.taus = taus_;
      break;
  }
  return d;
}

void CriticEnsemble::ema_update(double tau) {
  if (!(tau > 0.0 && tau <= 1.0)) throw ConfigError("EMA tau must lie in (0, 1]");
  for (int k = 0; k < size(); ++k) target_head(k).params().blend_from(head(k).params(), tau);
}

void CriticEnsemble::sync_targets() { target_ = online_; }

Matrix critic_input(const Matrix& obs, const Matrix& action) {
  if (obs.rows() != action.rows()) throw UsageError("critic_input: batch sizes differ");
  Matrix x(obs.rows(), obs.cols() + action.cols());
  x << obs, action;
  return x;
}

double q_value(const CriticEnsemble& critic, const Vector& obs, const Vector& action, QReduce reduce, int head) {
  Vector in(obs.size() + action.size());
  in << obs, action;
  const Matrix row = in.transpose();
  if (reduce == QReduce::Head) return critic.expectations(head, row)(0);
  const Matrix all = critic.all_expectations(row);
  return reduce == QReduce::Min ? all.minCoeff() : all.mean();
}

Matrix project_categorical(const Matrix& next_probs, const Vector& atoms, const Vector& reward,
                           const Vector& discount, const Vector& entropy) {
  const auto batch = next_probs.rows();
  const auto n = next_probs.cols();
  if (atoms.size() != n || reward.size() != batch || discount.size() != batch || entropy.size() != batch) {
    throw UsageError("project_categorical: shape mismatch");
  }
  const double v_min = atoms(0);
  const double v_max = atoms(n - 1);
  const double dz = (v_max - v_min) / static_cast<double>(n - 1);
  Matrix out = Matrix::Zero(batch, n);
  for (Eigen::Index b = 0; b < batch; ++b) {
    for (Eigen::Index i = 0; i < n; ++i) {
      const double p = next_probs(b, i);
      if (p == 0.0) continue;
      const double tz = std::clamp(reward(b) + discount(b) * (atoms(i) - entropy(b)), v_min, v_max);
      const double pos = (tz - v_min) / dz;
      auto lo = static_cast<Eigen::Index>(std::floor(pos));
      lo = std::clamp<Eigen::Index>(lo, 0, n - 1);
      const Eigen::Index hi = std::min<Eigen::Index>(lo + 1, n - 1);
      const double frac = pos - static_cast<double>(lo);
      if (hi == lo || frac <= 0.0) {
        out(b, lo) += p;
      } else {
        out(b, lo) += p * (1.0 - frac);
        out(b, hi) += p * frac;
      }
    }
  }
  return out;
}

Matrix truncated_pool(const std::vector<Matrix>& head_quantiles, int drop) {
  if (head_quantiles.empty()) throw UsageError("truncated_pool: no heads");
  const auto batch = head_quantiles.front().rows();
  const auto n = head_quantiles.front().cols();
  if (drop < 0 || drop >= n) throw ConfigError("TQC drop count must satisfy 0 <= d < N");
  const auto k = static_cast<Eigen::Index>(head_quantiles.size());
  const Eigen::Index keep = k * (n - drop);
  Matrix out(batch, keep);
  std::vector<double> row(static_cast<std::size_t>(k * n));
  for (Eigen::Index b = 0; b < batch; ++b) {
    std::size_t idx = 0;
    for (const auto& h : head_quantiles) {
      if (h.rows() != batch || h.cols() != n) throw UsageError("truncated_pool: heads differ in shape");
      for (Eigen::Index i = 0; i < n; ++i) row[idx++] = h(b, i);
    }
    std::partial_sort(row.begin(), row.begin() + keep, row.end());
    for (Eigen::Index j = 0; j < keep; ++j) out(b, j) = row[static_cast<std::size_t>(j)];
  }
  return out;
}

double quantile_huber_loss(const Matrix& theta, const Matrix& targets, const Vector& taus, double kappa) {
  if (theta.rows() != targets.rows() || taus.size() != theta.cols()) {
    throw UsageError("quantile_huber_loss: shape mismatch");
  }
  double total = 0.0;
  for (Eigen::Index b = 0; b < theta.rows(); ++b) {
    for (Eigen::Index i = 0; i < theta.cols(); ++i) {
      for (Eigen::Index j = 0; j < targets.cols(); ++j) {
        const double u = targets(b, j) - theta(b, i);
        const double h = std::abs(u) <= kappa ? 0.5 * u * u : kappa * (std::abs(u) - 0.5 * kappa);
        total += std::abs(taus(i) - (u < 0.0 ? 1.0 : 0.0)) * h;
      }
    }
  }
  return total / static_cast<double>(theta.rows() * theta.cols() * targets.cols());
}

}  // namespace dawn::agent
