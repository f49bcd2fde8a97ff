#include "dawn/diff/parameters.hpp"

#include "dawn/errors.hpp"

#include <json.hpp>

#include <bit>
#include <cmath>
#include <cstdint>
#include <fstream>

namespace dawn::diff {

std::size_t ParameterSet::add(std::string name, Matrix init) {
  Parameter p;
  p.name = std::move(name);
  p.grad = Matrix::Zero(init.rows(), init.cols());
  p.value = std::move(init);
  params_.push_back(std::move(p));
  return params_.size() - 1;
}

std::size_t ParameterSet::numel() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += static_cast<std::size_t>(p.value.size());
  return n;
}

void ParameterSet::zero_grad() {
  for (auto& p : params_) p.grad.setZero(p.value.rows(), p.value.cols());
}

double ParameterSet::grad_norm() const {
  double sq = 0.0;
  for (const auto& p : params_) sq += p.grad.squaredNorm();
  return std::sqrt(sq);
}

double ParameterSet::clip_grad_norm(double max_norm) {
  const double norm = grad_norm();
  if (std::isfinite(norm) && norm > max_norm) {
    const double s = max_norm / norm;
    for (auto& p : params_) p.grad *= s;
  }
  return norm;
}

bool ParameterSet::all_finite() const {
  for (const auto& p : params_) {
    if (!p.value.allFinite()) return false;
  }
  return true;
}

void ParameterSet::blend_from(const ParameterSet& source, double tau) {
  if (!same_shapes(source)) throw UsageError("blend_from: parameter sets differ in layout");
  for (std::size_t i = 0; i < params_.size(); ++i) {
    params_[i].value = tau * source.params_[i].value + (1.0 - tau) * params_[i].value;
  }
}

bool ParameterSet::same_shapes(const ParameterSet& other) const {
  if (other.params_.size() != params_.size()) return false;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (params_[i].value.rows() != other.params_[i].value.rows() ||
        params_[i].value.cols() != other.params_[i].value.cols()) {
      return false;
    }
  }
  return true;
}

namespace {

void write_le_double(std::ofstream& out, double v) {
  auto bits = std::bit_cast<std::uint64_t>(v);
  unsigned char bytes[8];
  for (int k = 0; k < 8; ++k) bytes[k] = static_cast<unsigned char>((bits >> (8 * k)) & 0xffU);
  out.write(reinterpret_cast<const char*>(bytes), 8);
}

double read_le_double(std::ifstream& in) {
  unsigned char bytes[8];
  in.read(reinterpret_cast<char*>(bytes), 8);
  if (!in) throw ConfigError("parameter blob truncated");
  std::uint64_t bits = 0;
  for (int k = 0; k < 8; ++k) bits |= static_cast<std::uint64_t>(bytes[k]) << (8 * k);
  return std::bit_cast<double>(bits);
}

std::filesystem::path manifest_path(const std::filesystem::path& blob) {
  auto p = blob;
  p += ".json";
  return p;
}

}  // namespace

void ParameterSet::save(const std::filesystem::path& blob_path) const {
  nlohmann::json manifest;
  manifest["format"] = "dawn-params-v1";
  manifest["dtype"] = "float64-le";
  manifest["parameters"] = nlohmann::json::array();
  std::ofstream out(blob_path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + blob_path.string());
  std::size_t offset = 0;
  for (const auto& p : params_) {
    manifest["parameters"].push_back(
        {{"name", p.name}, {"rows", p.value.rows()}, {"cols", p.value.cols()}, {"offset", offset}});
    for (Eigen::Index r = 0; r < p.value.rows(); ++r) {
      for (Eigen::Index c = 0; c < p.value.cols(); ++c) write_le_double(out, p.value(r, c));
    }
    offset += static_cast<std::size_t>(p.value.size());
  }
  manifest["count"] = offset;
  std::ofstream mf(manifest_path(blob_path));
  mf << manifest.dump(2) << '\n';
}

void ParameterSet::load(const std::filesystem::path& blob_path) {
  std::ifstream mf(manifest_path(blob_path));
  if (!mf) throw ConfigError("missing manifest for " + blob_path.string());
  const auto manifest = nlohmann::json::parse(mf);
  const auto& entries = manifest.at("parameters");
  if (entries.size() != params_.size()) throw ConfigError("manifest parameter count mismatch");
  std::ifstream in(blob_path, std::ios::binary);
  if (!in) throw ConfigError("cannot read " + blob_path.string());
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto& p = params_[i];
    const auto& e = entries[i];
    if (e.at("name").get<std::string>() != p.name || e.at("rows").get<Eigen::Index>() != p.value.rows() ||
        e.at("cols").get<Eigen::Index>() != p.value.cols()) {
      throw ConfigError("manifest entry " + std::to_string(i) + " does not match parameter " + p.name);
    }
    for (Eigen::Index r = 0; r < p.value.rows(); ++r) {
      for (Eigen::Index c = 0; c < p.value.cols(); ++c) p.value(r, c) = read_le_double(in);
    }
  }
}

}  // namespace dawn::diff
