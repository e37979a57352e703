#pragma once
// Dense tensors are Eigen matrices in double precision; sequences are stored
// with one column per token. Higher-rank weights are flattened to 2-D with a
// documented layout (see conv1d).

#include <deque>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "kbc/common.hpp"

namespace kbc::nn {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

class ShapeError : public Error {
 public:
  using Error::Error;
};

inline void require_shape(bool ok, const std::string& what) {
  if (!ok) throw ShapeError("shape mismatch: " + what);
}

struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;
  bool trainable = true;

  int rows() const { return static_cast<int>(value.rows()); }
  int cols() const { return static_cast<int>(value.cols()); }
};

// Owns a model's parameters. Element addresses stay valid for the store's
// lifetime, including across moves, so models keep raw pointers into it.
class ParameterStore {
 public:
  ParameterStore() = default;
  ParameterStore(ParameterStore&&) = default;
  ParameterStore& operator=(ParameterStore&&) = default;
  ParameterStore(const ParameterStore&) = delete;
  ParameterStore& operator=(const ParameterStore&) = delete;

  Parameter& add(const std::string& name, int rows, int cols);
  // Glorot-style uniform init in [-scale, scale] with scale = sqrt(6/(rows+cols)).
  Parameter& add_uniform(const std::string& name, int rows, int cols, Rng& rng);
  Parameter* find(const std::string& name);
  const Parameter* find(const std::string& name) const;
  Parameter& get(const std::string& name);

  std::deque<Parameter>& all() { return params_; }
  const std::deque<Parameter>& all() const { return params_; }
  std::size_t size() const { return params_.size(); }
  std::size_t scalar_count() const;

  void zero_grad();
  bool all_finite() const;

 private:
  std::deque<Parameter> params_;
};

}  // namespace kbc::nn
