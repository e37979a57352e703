#include "kbc/nn/tensor.hpp"

#include <cmath>

namespace kbc::nn {

Parameter& ParameterStore::add(const std::string& name, int rows, int cols) {
  if (find(name)) throw Error("duplicate parameter '" + name + "'");
  if (rows <= 0 || cols <= 0) throw ShapeError("parameter '" + name + "' must have positive dims");
  params_.push_back({name, Matrix::Zero(rows, cols), Matrix::Zero(rows, cols), true});
  return params_.back();
}

Parameter& ParameterStore::add_uniform(const std::string& name, int rows, int cols, Rng& rng) {
  Parameter& p = add(name, rows, cols);
  const double scale = std::sqrt(6.0 / static_cast<double>(rows + cols));
  std::uniform_real_distribution<double> dist(-scale, scale);
  for (Eigen::Index c = 0; c < p.value.cols(); ++c) {
    for (Eigen::Index r = 0; r < p.value.rows(); ++r) p.value(r, c) = dist(rng);
  }
  return p;
}

Parameter* ParameterStore::find(const std::string& name) {
  for (auto& p : params_) {
    if (p.name == name) return &p;
  }
  return nullptr;
}

const Parameter* ParameterStore::find(const std::string& name) const {
  for (const auto& p : params_) {
    if (p.name == name) return &p;
  }
  return nullptr;
}

Parameter& ParameterStore::get(const std::string& name) {
  Parameter* p = find(name);
  if (!p) throw Error("no parameter named '" + name + "'");
  return *p;
}

std::size_t ParameterStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += static_cast<std::size_t>(p.value.size());
  return n;
}

void ParameterStore::zero_grad() {
  for (auto& p : params_) p.grad.setZero();
}

bool ParameterStore::all_finite() const {
  for (const auto& p : params_) {
    if (!p.value.allFinite()) return false;
  }
  return true;
}

}  // namespace kbc::nn
