#pragma once

#include "cyto/nn/tensor.hpp"
#include "cyto/rng.hpp"

namespace cyto::nn {

/// Trainable tensor filled uniformly in gain * [-sqrt(1/fan_in), sqrt(1/fan_in)].
Tensor fan_in_uniform(Shape shape, int fan_in, Rng& rng, double gain = 1.0);

/// Weight gain that keeps the activation second moment steady through
/// conv/linear + ReLU stacks (bound becomes sqrt(6/fan_in)).
inline constexpr double kReluGain = 2.449489742783178;

struct Conv2dParams {
  Tensor weight;  // [cout, cin, k, k]
  Tensor bias;    // [cout]
};

struct LinearParams {
  Tensor weight;  // [dout, din]
  Tensor bias;    // [dout]
};

/// Biases always use gain 1.
Conv2dParams make_conv(int cin, int cout, int kernel, Rng& rng, double weight_gain = 1.0);
LinearParams make_linear(int din, int dout, Rng& rng, double weight_gain = 1.0);

}  // namespace cyto::nn
