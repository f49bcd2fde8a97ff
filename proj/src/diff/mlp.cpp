#include "dawn/diff/mlp.hpp"

#include "dawn/errors.hpp"

#include <cmath>

namespace dawn::diff {

std::string to_string(HiddenNorm norm) {
  switch (norm) {
    case HiddenNorm::None: return "none";
    case HiddenNorm::LayerNorm: return "layer-norm";
    case HiddenNorm::Hyperspherical: return "hyperspherical";
  }
  return "none";
}

HiddenNorm hidden_norm_from_string(const std::string& name) {
  if (name == "none") return HiddenNorm::None;
  if (name == "layer-norm" || name == "ln") return HiddenNorm::LayerNorm;
  if (name == "hyperspherical" || name == "hn") return HiddenNorm::Hyperspherical;
  throw ConfigError("unknown normalization '" + name + "'");
}

void MlpSpec::validate() const {
  if (input_dim < 1 || output_dim < 1) throw ConfigError("MLP dims must be >= 1");
  for (int h : hidden_dims) {
    if (h < 1) throw ConfigError("MLP hidden dims must be >= 1");
  }
}

namespace {

Matrix uniform_matrix(Eigen::Index rows, Eigen::Index cols, double bound, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  Matrix m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = dist(rng);
  }
  return m;
}

Matrix unit_rows(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, 1.0);
  Matrix m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = dist(rng);
    m.row(r).normalize();
  }
  return m;
}

}  // namespace

Mlp::Mlp(MlpSpec spec, std::mt19937_64& rng) : spec_(std::move(spec)) {
  spec_.validate();
  int fan_in = spec_.input_dim;
  for (std::size_t k = 0; k < spec_.hidden_dims.size(); ++k) {
    const int width = spec_.hidden_dims[k];
    const std::string prefix = "hidden" + std::to_string(k);
    Hidden h{};
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    if (spec_.hidden_norm == HiddenNorm::Hyperspherical) {
      h.w = params_.add(prefix + ".directions", unit_rows(width, fan_in, rng));
      h.scale = params_.add(prefix + ".scale", Matrix::Ones(1, width));
    } else {
      h.w = params_.add(prefix + ".weight", uniform_matrix(fan_in, width, bound, rng));
      h.b = params_.add(prefix + ".bias", uniform_matrix(1, width, bound, rng));
      if (spec_.hidden_norm == HiddenNorm::LayerNorm) {
        h.gamma = params_.add(prefix + ".ln_gamma", Matrix::Ones(1, width));
        h.beta = params_.add(prefix + ".ln_beta", Matrix::Zero(1, width));
      }
    }
    hidden_.push_back(h);
    fan_in = width;
  }
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  out_w_ = params_.add("output.weight", uniform_matrix(fan_in, spec_.output_dim, bound, rng));
  out_b_ = params_.add("output.bias", uniform_matrix(1, spec_.output_dim, bound, rng));
}

Var Mlp::forward(Tape& tape, Var input, bool trainable) {
  if (input.cols() != spec_.input_dim) {
    throw ConfigError("MLP input has " + std::to_string(input.cols()) + " features, expected " +
                      std::to_string(spec_.input_dim));
  }
  Var x = input;
  for (const auto& h : hidden_) {
    if (spec_.hidden_norm == HiddenNorm::Hyperspherical) {
      x = hyperspherical(x, tape.param(params_[h.w], trainable), tape.param(params_[h.scale], trainable),
                         kHypersphericalGuard);
    } else {
      x = add_bias(matmul(x, tape.param(params_[h.w], trainable)), tape.param(params_[h.b], trainable));
      if (spec_.hidden_norm == HiddenNorm::LayerNorm) {
        x = layer_norm(x, tape.param(params_[h.gamma], trainable), tape.param(params_[h.beta], trainable),
                       kLayerNormEps);
      }
    }
    x = relu(x);
  }
  return add_bias(matmul(x, tape.param(params_[out_w_], trainable)), tape.param(params_[out_b_], trainable));
}

Matrix Mlp::predict(const Matrix& input) const {
  if (input.cols() != spec_.input_dim) throw ConfigError("MLP input width mismatch");
  Matrix x = input;
  for (const auto& h : hidden_) {
    Matrix z;
    if (spec_.hidden_norm == HiddenNorm::Hyperspherical) {
      const Matrix& w = params_[h.w].value;
      Vector xn = x.rowwise().norm();
      Vector xinv = (xn.array() < kHypersphericalGuard).select(0.0, xn.array().inverse());
      Vector wn = w.rowwise().norm();
      Matrix what = w.array().colwise() / wn.array();
      Matrix xhat = x.array().colwise() * xinv.array();
      z.noalias() = xhat * what.transpose();
      z.array().rowwise() *= params_[h.scale].value.row(0).array();
    } else {
      z.noalias() = x * params_[h.w].value;
      z.rowwise() += params_[h.b].value.row(0);
      if (spec_.hidden_norm == HiddenNorm::LayerNorm) {
        const Vector mu = z.rowwise().mean();
        z.colwise() -= mu;
        const Vector inv_std = (z.array().square().rowwise().mean() + kLayerNormEps).rsqrt();
        z.array().colwise() *= inv_std.array();
        z.array().rowwise() *= params_[h.gamma].value.row(0).array();
        z.rowwise() += params_[h.beta].value.row(0);
      }
    }
    x = z.cwiseMax(0.0);
  }
  Matrix out;
  out.noalias() = x * params_[out_w_].value;
  out.rowwise() += params_[out_b_].value.row(0);
  return out;
}

Vector layer_norm(const Vector& x, const Vector& gamma, const Vector& beta, double eps) {
  if (gamma.size() != x.size() || beta.size() != x.size()) throw ConfigError("layer_norm: length mismatch");
  if (!(eps > 0.0)) throw ConfigError("layer_norm: epsilon must be positive");
  const double mu = x.mean();
  const double var = (x.array() - mu).square().mean();
  const double denom = std::sqrt(var + eps);
  return (gamma.array() * (x.array() - mu) / denom + beta.array()).matrix();
}

Vector hyperspherical_layer(const Vector& x, const Matrix& weight_rows, const Vector& scale) {
  if (weight_rows.cols() != x.size() || scale.size() != weight_rows.rows()) {
    throw ConfigError("hyperspherical_layer: shape mismatch");
  }
  const double xn = x.norm();
  if (xn < kHypersphericalGuard) return Vector::Zero(weight_rows.rows());
  Vector out(weight_rows.rows());
  for (Eigen::Index j = 0; j < weight_rows.rows(); ++j) {
    const double wn = weight_rows.row(j).norm();
    out(j) = scale(j) * (weight_rows.row(j).dot(x) / (wn * xn));
  }
  return out;
}

Adam::Adam(const ParameterSet& params, Options options) : opt_(options) {
  for (const auto& p : params.all()) {
    m_.push_back(Matrix::Zero(p.value.rows(), p.value.cols()));
    v_.push_back(Matrix::Zero(p.value.rows(), p.value.cols()));
  }
}

void Adam::step(ParameterSet& params) {
  if (params.size() != m_.size()) throw UsageError("Adam: optimizer state does not match parameters");
  for (const auto& p : params.all()) {
    if (!p.grad.allFinite()) throw RunAbort("non-finite gradient in parameter '" + p.name + "'");
  }
  ++t_;
  const double bc1 = 1.0 - std::pow(opt_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(opt_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i];
    if (m_[i].rows() != p.value.rows() || m_[i].cols() != p.value.cols()) {
      throw UsageError("Adam: moment shape mismatch for '" + p.name + "'");
    }
    m_[i] = opt_.beta1 * m_[i] + (1.0 - opt_.beta1) * p.grad;
    v_[i] = opt_.beta2 * v_[i] + (1.0 - opt_.beta2) * p.grad.cwiseAbs2();
    p.value.array() -= opt_.lr * (m_[i].array() / bc1) / ((v_[i].array() / bc2).sqrt() + opt_.eps);
  }
}

}  // namespace dawn::diff
