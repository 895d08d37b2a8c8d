#include "cyto/nn/adam.hpp"

#include <cmath>
#include <utility>

#include "cyto/error.hpp"

namespace cyto::nn {

Adam::Adam(std::vector<Tensor> params, AdamConfig config) : params_(std::move(params)), config_(config) {
  if (!(config_.lr > 0.0) || config_.beta1 < 0.0 || config_.beta1 >= 1.0 || config_.beta2 < 0.0 ||
      config_.beta2 >= 1.0 || !(config_.eps > 0.0)) {
    throw ValidationError("adam: lr, eps must be positive and betas in [0,1)");
  }
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (const Tensor& p : params_) {
    m_.emplace_back(p.numel(), 0.0f);
    v_.emplace_back(p.numel(), 0.0f);
  }
}

void Adam::step() {
  ++t_;
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  for (size_t i = 0; i < params_.size(); ++i) {
    Tensor& p = params_[i];
    if (!p.has_grad()) continue;
    std::span<float> theta = p.data();
    std::span<const float> grad = std::as_const(p).grad();
    std::vector<float>& m = m_[i];
    std::vector<float>& v = v_[i];
    for (size_t k = 0; k < theta.size(); ++k) {
      const double gk = grad[k];
      const double mk = b1 * m[k] + (1.0 - b1) * gk;
      const double vk = b2 * v[k] + (1.0 - b2) * gk * gk;
      m[k] = static_cast<float>(mk);
      v[k] = static_cast<float>(vk);
      const double mhat = mk / c1;
      const double vhat = vk / c2;
      theta[k] = static_cast<float>(theta[k] - config_.lr * mhat / (std::sqrt(vhat) + config_.eps));
    }
  }
}

void Adam::zero_grad() {
  for (Tensor& p : params_) p.zero_grad();
}

}  // namespace cyto::nn
