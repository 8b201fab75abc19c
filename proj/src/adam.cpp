#include "hetcs/adam.hpp"

#include <cmath>
#include <stdexcept>

namespace hetcs::ad {

void Adam::step(const std::vector<ParamRef>& params) {
  if (m_.empty()) {
    for (const auto& p : params) {
      m_.emplace_back(p.value->rows, p.value->cols);
      v_.emplace_back(p.value->rows, p.value->cols);
    }
  }
  if (params.size() != m_.size()) {
    throw std::invalid_argument("Adam::step: parameter count changed from " +
                                std::to_string(m_.size()) + " to " + std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& p = params[i];
    if (!p.value->same_shape(*p.grad) || !p.value->same_shape(m_[i])) {
      throw ShapeError("Adam::step: shape mismatch for parameter '" + p.name + "': value " +
                       p.value->shape_str() + ", grad " + p.grad->shape_str() + ", moments " +
                       m_[i].shape_str());
    }
    for (double g : p.grad->data) {
      if (!std::isfinite(g)) {
        throw std::domain_error("Adam::step: non-finite gradient in parameter '" + p.name + "'");
      }
    }
  }

  ++t_;
  const double lr = config_.learning_rate;
  const double b1 = config_.beta1;
  const double b2 = config_.beta2;
  const double bc1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  const double decay = lr * config_.weight_decay;

  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& w = params[i].value->data;
    const auto& g = params[i].grad->data;
    auto& m = m_[i].data;
    auto& v = v_[i].data;
    for (std::size_t j = 0; j < w.size(); ++j) {
      w[j] -= decay * w[j];
      m[j] = b1 * m[j] + (1.0 - b1) * g[j];
      v[j] = b2 * v[j] + (1.0 - b2) * g[j] * g[j];
      const double m_hat = m[j] / bc1;
      const double v_hat = v[j] / bc2;
      w[j] -= lr * m_hat / (std::sqrt(v_hat) + config_.epsilon);
    }
  }
}

}  // namespace hetcs::ad
