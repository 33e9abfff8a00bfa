#include "selfgnn/adam.hpp"

#include <cmath>

namespace selfgnn {

void Adam::step(std::vector<Tensor*>& params, const std::vector<Tensor>& grads, double lr) {
  if (params.size() != m_.size() || grads.size() != m_.size()) {
    throw std::invalid_argument("Adam::step: parameter/gradient count mismatch");
  }
  ++step_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(step_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(step_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& p = *params[i];
    const Tensor& g = grads[i];
    if (!p.same_shape(m_[i]) || !g.same_shape(p)) {
      throw std::invalid_argument("Adam::step: shape mismatch at parameter " + std::to_string(i));
    }
    Tensor& m = m_[i];
    Tensor& v = v_[i];
    for (std::size_t k = 0; k < p.numel(); ++k) {
      m[k] = beta1_ * m[k] + (1.0 - beta1_) * g[k];
      v[k] = beta2_ * v[k] + (1.0 - beta2_) * g[k] * g[k];
      const double mhat = m[k] / bc1;
      const double vhat = v[k] / bc2;
      p[k] -= lr * mhat / (std::sqrt(vhat) + eps_);
    }
  }
}

}  // namespace selfgnn
