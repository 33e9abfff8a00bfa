#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

#include "selfgnn/tensor.hpp"

namespace selfgnn {

// Adam with bias correction over a fixed list of parameter tensors.
// Moment tensors are kept in the registration order of the parameters.
class Adam {
 public:
  Adam() = default;
  Adam(double beta1, double beta2, double eps) : beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void register_param(const Tensor& p) {
    m_.push_back(Tensor::zeros(p.shape()));
    v_.push_back(Tensor::zeros(p.shape()));
  }

  std::size_t num_params() const { return m_.size(); }
  std::uint64_t step_count() const { return step_; }
  double beta1() const { return beta1_; }
  double beta2() const { return beta2_; }
  double eps() const { return eps_; }

  std::vector<Tensor>& first_moments() { return m_; }
  std::vector<Tensor>& second_moments() { return v_; }
  const std::vector<Tensor>& first_moments() const { return m_; }
  const std::vector<Tensor>& second_moments() const { return v_; }
  void restore(std::vector<Tensor> m, std::vector<Tensor> v, std::uint64_t step) {
    m_ = std::move(m);
    v_ = std::move(v);
    step_ = step;
  }

  // One update over all registered parameters; grads[i] pairs with params[i].
  void step(std::vector<Tensor*>& params, const std::vector<Tensor>& grads, double lr);

 private:
  double beta1_ = 0.9;
  double beta2_ = 0.999;
  double eps_ = 1e-8;
  std::uint64_t step_ = 0;
  std::vector<Tensor> m_;
  std::vector<Tensor> v_;
};

}  // namespace selfgnn
