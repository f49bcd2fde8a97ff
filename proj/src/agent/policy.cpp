#include "dawn/agent/policy.hpp"

#include "dawn/errors.hpp"

#include <cmath>
#include <numbers>

namespace dawn::agent {

namespace {

const double kHalfLog2Pi = 0.5 * std::log(2.0 * std::numbers::pi);

}  // namespace

void PolicySpec::validate() const {
  if (obs_dim < 1 || action_dim < 1) throw ConfigError("policy dims must be >= 1");
  if (!(log_std_min < log_std_max)) throw ConfigError("policy log-std bounds are inverted");
  if (!(final_weight_scale >= 0.0)) throw ConfigError("policy final weight scale must be >= 0");
}

void to_json(nlohmann::json& j, const PolicySpec& s) {
  j = {{"obs_dim", s.obs_dim},
       {"action_dim", s.action_dim},
       {"hidden_dims", s.hidden_dims},
       {"hidden_norm", diff::to_string(s.hidden_norm)},
       {"final_weight_scale", s.final_weight_scale},
       {"init_log_std", s.init_log_std},
       {"log_std_min", s.log_std_min},
       {"log_std_max", s.log_std_max}};
}

void from_json(const nlohmann::json& j, PolicySpec& s) {
  s.obs_dim = j.at("obs_dim").get<int>();
  s.action_dim = j.at("action_dim").get<int>();
  s.hidden_dims = j.at("hidden_dims").get<std::vector<int>>();
  s.hidden_norm = diff::hidden_norm_from_string(j.at("hidden_norm").get<std::string>());
  s.final_weight_scale = j.at("final_weight_scale").get<double>();
  s.init_log_std = j.at("init_log_std").get<double>();
  s.log_std_min = j.at("log_std_min").get<double>();
  s.log_std_max = j.at("log_std_max").get<double>();
}

ResidualPolicy::ResidualPolicy(PolicySpec spec, std::mt19937_64& rng) : spec_(std::move(spec)) {
  spec_.validate();
  diff::MlpSpec ms;
  ms.input_dim = spec_.obs_dim;
  ms.hidden_dims = spec_.hidden_dims;
  ms.output_dim = 2 * spec_.action_dim;
  ms.hidden_norm = spec_.hidden_norm;
  net_ = diff::Mlp(ms, rng);

  auto& w = net_.params()[net_.output_weight_index()].value;
  std::uniform_real_distribution<double> u(-spec_.final_weight_scale, spec_.final_weight_scale);
  for (Eigen::Index r = 0; r < w.rows(); ++r) {
    for (Eigen::Index c = 0; c < w.cols(); ++c) w(r, c) = spec_.final_weight_scale > 0.0 ? u(rng) : 0.0;
  }
  auto& b = net_.params()[net_.output_bias_index()].value;
  b.setZero();
  b.rightCols(spec_.action_dim).setConstant(spec_.init_log_std);
}

PolicySample ResidualPolicy::sample(Tape& tape, Var obs, const Matrix& noise, bool trainable) {
  const int d = spec_.action_dim;
  if (noise.rows() != obs.rows() || noise.cols() != d) throw UsageError("policy noise has the wrong shape");
  Var out = net_.forward(tape, obs, trainable);
  PolicySample s;
  s.mean = diff::slice_cols(out, 0, d);
  s.log_std = diff::clamp(diff::slice_cols(out, d, d), spec_.log_std_min, spec_.log_std_max);
  Var pre = diff::add(s.mean, diff::mul(diff::exp(s.log_std), tape.constant(noise)));
  s.action = diff::tanh(pre);
  // log N(pre; mean, std) = -xi^2/2 - log std - log(2 pi)/2, with xi fixed by reparameterization.
  Matrix gauss_const = (-0.5 * noise.array().square() - kHalfLog2Pi).matrix();
  Var gauss = diff::sub(tape.constant(std::move(gauss_const)), s.log_std);
  Var squash = diff::log(diff::add_scalar(diff::scale(diff::square(s.action), -1.0), 1.0 + kSquashEps));
  s.log_prob = diff::sub(diff::sum_rows(gauss), diff::sum_rows(squash));
  return s;
}

std::pair<Matrix, Matrix> ResidualPolicy::distribution(const Matrix& obs) const {
  const int d = spec_.action_dim;
  Matrix out = net_.predict(obs);
  Matrix mean = out.leftCols(d);
  Matrix log_std = out.rightCols(d).cwiseMax(spec_.log_std_min).cwiseMin(spec_.log_std_max);
  return {std::move(mean), std::move(log_std)};
}

PolicyDraw ResidualPolicy::evaluate(const Matrix& obs, const Matrix& noise) const {
  auto [mean, log_std] = distribution(obs);
  if (noise.rows() != mean.rows() || noise.cols() != mean.cols()) {
    throw UsageError("policy noise has the wrong shape");
  }
  PolicyDraw draw;
  const Matrix pre = (mean.array() + log_std.array().exp() * noise.array()).matrix();
  draw.action = pre.array().tanh().matrix();
  const Matrix gauss = (-0.5 * noise.array().square() - kHalfLog2Pi - log_std.array()).matrix();
  const Matrix squash = (1.0 - draw.action.array().square() + kSquashEps).log().matrix();
  draw.log_prob = gauss.rowwise().sum() - squash.rowwise().sum();
  return draw;
}

PolicyDraw ResidualPolicy::sample(const Matrix& obs, std::mt19937_64& rng) const {
  return evaluate(obs, standard_normal(obs.rows(), spec_.action_dim, rng));
}

Matrix ResidualPolicy::mean_action(const Matrix& obs) const {
  return distribution(obs).first.array().tanh().matrix();
}

Matrix standard_normal(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Matrix m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = n(rng);
  }
  return m;
}

Vector combine(const Vector& a_base, const Vector& a_res, double lambda) {
  if (a_base.size() != a_res.size()) throw UsageError("combine: base and residual dims differ");
  return (a_base + lambda * a_res).cwiseMax(-1.0).cwiseMin(1.0);
}

Matrix combine(const Matrix& a_base, const Matrix& a_res, double lambda) {
  if (a_base.rows() != a_res.rows() || a_base.cols() != a_res.cols()) {
    throw UsageError("combine: base and residual shapes differ");
  }
  return (a_base + lambda * a_res).cwiseMax(-1.0).cwiseMin(1.0);
}

Var combine(Tape& tape, const Matrix& a_base, Var a_res, double lambda) {
  if (a_base.rows() != a_res.rows() || a_base.cols() != a_res.cols()) {
    throw UsageError("combine: base and residual shapes differ");
  }
  return diff::clamp(diff::add(tape.constant(a_base), diff::scale(a_res, lambda)), -1.0, 1.0);
}

}  // namespace dawn::agent
