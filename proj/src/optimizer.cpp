#include "spencer/optimizer.hpp"

#include <cmath>

#include "spencer/errors.hpp"

namespace spencer {

AdamW::AdamW(AdamWConfig cfg, const std::vector<const Tensor*>& params)
    : cfg_(cfg) {
  if (cfg_.learning_rate < 0.0 || cfg_.beta1 < 0.0 || cfg_.beta1 >= 1.0 ||
      cfg_.beta2 < 0.0 || cfg_.beta2 >= 1.0 || cfg_.epsilon <= 0.0)
    throw ParameterError("adamw: invalid hyperparameters");
  m_.reserve(params.size());
  v_.reserve(params.size());
  for (const Tensor* p : params) {
    m_.emplace_back(p->shape());
    v_.emplace_back(p->shape());
  }
}

void AdamW::step(const std::vector<Tensor*>& params,
                 const std::vector<const Tensor*>& grads) {
  if (params.size() != m_.size() || grads.size() != m_.size())
    throw DimensionError("adamw: parameter count changed since construction");
  ++step_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
  for (size_t k = 0; k < params.size(); ++k) {
    Tensor& p = *params[k];
    const Tensor& g = *grads[k];
    if (!p.same_shape(m_[k]) || !g.same_shape(m_[k]))
      throw DimensionError("adamw: shape mismatch at parameter " +
                           std::to_string(k) + ", param " + shape_str(p) +
                           " grad " + shape_str(g) + " state " +
                           shape_str(m_[k]));
    double* pm = m_[k].data();
    double* pv = v_[k].data();
    double* pp = p.data();
    const double* pg = g.data();
    for (size_t i = 0; i < p.numel(); ++i) {
      pm[i] = cfg_.beta1 * pm[i] + (1.0 - cfg_.beta1) * pg[i];
      pv[i] = cfg_.beta2 * pv[i] + (1.0 - cfg_.beta2) * pg[i] * pg[i];
      const double mhat = pm[i] / bc1;
      const double vhat = pv[i] / bc2;
      pp[i] -= cfg_.learning_rate *
               (mhat / (std::sqrt(vhat) + cfg_.epsilon) +
                cfg_.weight_decay * pp[i]);
    }
  }
}

}  // namespace spencer
