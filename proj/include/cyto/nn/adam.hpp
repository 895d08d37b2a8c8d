#pragma once

#include <cstdint>
#include <vector>

#include "cyto/nn/tensor.hpp"

namespace cyto::nn {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adam with bias-corrected moments. Moments start at zero; the step counter
/// is incremented before bias correction, so the first update uses t = 1.
class Adam {
 public:
  Adam(std::vector<Tensor> params, AdamConfig config = {});

  /// Applies one update from each parameter's current gradient (parameters
  /// without a gradient buffer are treated as zero-gradient).
  void step();
  void zero_grad();

  int64_t step_count() const noexcept { return t_; }
  const AdamConfig& config() const noexcept { return config_; }
  const std::vector<float>& first_moment(size_t i) const { return m_.at(i); }
  const std::vector<float>& second_moment(size_t i) const { return v_.at(i); }

 private:
  std::vector<Tensor> params_;
  AdamConfig config_;
  std::vector<std::vector<float>> m_;
  std::vector<std::vector<float>> v_;
  int64_t t_ = 0;
};

}  // namespace cyto::nn
