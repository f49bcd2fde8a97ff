#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace dawn::diff {

/// Batch-major dense matrix: rows are samples, columns are features.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;  // same shape as value
};

/// Ordered, value-semantic collection of named parameters.
///
/// Copying a ParameterSet produces an independent snapshot, which is how target
/// networks and evaluation workers get their own weights.
class ParameterSet {
 public:
  std::size_t add(std::string name, Matrix init);

  Parameter& operator[](std::size_t i) { return params_[i]; }
  const Parameter& operator[](std::size_t i) const { return params_[i]; }
  std::size_t size() const { return params_.size(); }
  std::span<Parameter> all() { return params_; }
  std::span<const Parameter> all() const { return params_; }

  /// Total number of scalars.
  std::size_t numel() const;

  void zero_grad();
  double grad_norm() const;
  /// Rescales gradients so their global norm is at most max_norm. Returns the norm before clipping.
  double clip_grad_norm(double max_norm);
  bool all_finite() const;

  /// target <- tau * source + (1 - tau) * target, parameter-wise.
  void blend_from(const ParameterSet& source, double tau);
  bool same_shapes(const ParameterSet& other) const;

  /// Flat little-endian float64 blob plus a JSON shape manifest (path + ".json").
  void save(const std::filesystem::path& blob_path) const;
  /// Loads values into an existing set; names and shapes must match the manifest.
  void load(const std::filesystem::path& blob_path);

 private:
  std::vector<Parameter> params_;
};

}  // namespace dawn::diff
