#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "hetcs/autodiff.hpp"

namespace hetcs::ad {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  /// Decoupled decay: p -= lr * weight_decay * p before the moment update.
  double weight_decay = 1e-4;
};

struct ParamRef {
  std::string name;
  Matrix* value = nullptr;
  const Matrix* grad = nullptr;
};

/// Adam with bias correction. Moment buffers are bound to parameter order on
/// the first step; later steps must pass the same parameters in the same order.
class Adam {
 public:
  explicit Adam(AdamConfig config = {}) : config_(config) {}

  /// Throws std::domain_error naming the first parameter with a non-finite
  /// gradient; in that case no parameter is modified.
  void step(const std::vector<ParamRef>& params);

  std::size_t step_count() const { return t_; }
  const AdamConfig& config() const { return config_; }
  const std::vector<Matrix>& first_moments() const { return m_; }
  const std::vector<Matrix>& second_moments() const { return v_; }

 private:
  AdamConfig config_;
  std::vector<Matrix> m_;
  std::vector<Matrix> v_;
  std::size_t t_ = 0;
};

}  // namespace hetcs::ad
