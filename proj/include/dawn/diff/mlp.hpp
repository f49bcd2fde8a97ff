#pragma once

#include "dawn/diff/parameters.hpp"
#include "dawn/diff/tape.hpp"

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace dawn::diff {

enum class HiddenNorm { None, LayerNorm, Hyperspherical };

std::string to_string(HiddenNorm norm);
HiddenNorm hidden_norm_from_string(const std::string& name);

inline constexpr double kLayerNormEps = 1e-5;
inline constexpr double kHypersphericalGuard = 1e-12;

struct MlpSpec {
  int input_dim = 1;
  std::vector<int> hidden_dims;
  int output_dim = 1;
  HiddenNorm hidden_norm = HiddenNorm::None;

  void validate() const;
};

/// Plain rectified MLP with optional normalization on hidden layers.
///
/// Hidden layer k is `linear -> norm -> relu` (LayerNorm), `hyperspherical -> relu`
/// (the hyperspherical layer replaces the linear map), or `linear -> relu`.
/// The output layer is always plain linear.
class Mlp {
 public:
  Mlp() = default;
  Mlp(MlpSpec spec, std::mt19937_64& rng);

  const MlpSpec& spec() const { return spec_; }
  ParameterSet& params() { return params_; }
  const ParameterSet& params() const { return params_; }

  /// Records the forward pass for a batch (rows = samples) on the tape.
  Var forward(Tape& tape, Var input, bool trainable = true);
  /// Graph-free evaluation for a batch.
  Matrix predict(const Matrix& input) const;

  /// Index of the output-layer weight (in x out) and bias (1 x out).
  std::size_t output_weight_index() const { return out_w_; }
  std::size_t output_bias_index() const { return out_b_; }

 private:
  struct Hidden {
    std::size_t w;  // linear: in x out; hyperspherical: out x in (rows are directions)
    std::size_t b;  // linear bias, unused for hyperspherical
    std::size_t gamma;
    std::size_t beta;
    std::size_t scale;
  };

  MlpSpec spec_;
  ParameterSet params_;
  std::vector<Hidden> hidden_;
  std::size_t out_w_ = 0;
  std::size_t out_b_ = 0;
};

/// Standalone layer normalization of a single feature vector.
Vector layer_norm(const Vector& x, const Vector& gamma, const Vector& beta, double eps = kLayerNormEps);

/// Standalone hyperspherical layer: out_j = s_j * cos(angle(w_j, x)).
Vector hyperspherical_layer(const Vector& x, const Matrix& weight_rows, const Vector& scale);

/// Adam with bias correction. Aborts the run on non-finite gradients.
class Adam {
 public:
  struct Options {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
  };

  Adam() = default;
  Adam(const ParameterSet& params, Options options);

  void step(ParameterSet& params);
  std::int64_t steps() const { return t_; }
  const Options& options() const { return opt_; }
  void set_lr(double lr) { opt_.lr = lr; }
  const std::vector<Matrix>& first_moments() const { return m_; }
  const std::vector<Matrix>& second_moments() const { return v_; }

 private:
  Options opt_;
  std::vector<Matrix> m_;
  std::vector<Matrix> v_;
  std::int64_t t_ = 0;
};

}  // namespace dawn::diff
