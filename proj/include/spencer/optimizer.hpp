#pragma once

#include <cstdint>
#include <vector>

#include "spencer/tensor.hpp"

namespace spencer {

struct AdamWConfig {
  double learning_rate = 1e-5;
  double weight_decay = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Adaptive moment estimation with decoupled weight decay and bias
// correction. Moment tensors mirror the parameter shapes; the step counter
// advances once per step() call.
class AdamW {
 public:
  AdamW(AdamWConfig cfg, const std::vector<const Tensor*>& params);

  // params and grads must line up with the construction order.
  void step(const std::vector<Tensor*>& params,
            const std::vector<const Tensor*>& grads);

  uint64_t step_count() const { return step_; }
  const AdamWConfig& config() const { return cfg_; }
  const Tensor& first_moment(size_t i) const { return m_[i]; }
  const Tensor& second_moment(size_t i) const { return v_[i]; }

 private:
  AdamWConfig cfg_;
  std::vector<Tensor> m_;
  std::vector<Tensor> v_;
  uint64_t step_ = 0;
};

}  // namespace spencer
