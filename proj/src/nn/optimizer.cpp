#include "kbc/nn/optimizer.hpp"

#include <cmath>

namespace kbc::nn {

void Adam::step(ParameterStore& params) {
  auto& all = params.all();
  for (const auto& p : all) {
    if (p.trainable && !p.grad.allFinite()) throw Error("non-finite gradient in parameter '" + p.name + "'");
  }
  if (m_.empty()) {
    for (const auto& p : all) {
      m_.push_back(Matrix::Zero(p.rows(), p.cols()));
      v_.push_back(Matrix::Zero(p.rows(), p.cols()));
    }
  }
  if (m_.size() != all.size()) throw Error("parameter store changed size between optimizer steps");
  ++t_;
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double correction1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double correction2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  std::size_t k = 0;
  for (auto& p : all) {
    if (p.trainable) {
      m_[k] = b1 * m_[k] + (1.0 - b1) * p.grad;
      v_[k] = b2 * v_[k] + (1.0 - b2) * p.grad.cwiseAbs2();
      p.value.array() -= config_.learning_rate * (m_[k].array() / correction1) /
                         ((v_[k].array() / correction2).sqrt() + config_.epsilon);
    }
    p.grad.setZero();
    ++k;
  }
}

}  // namespace kbc::nn
