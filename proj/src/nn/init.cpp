#include "cyto/nn/init.hpp"

#include <cmath>

namespace cyto::nn {

Tensor fan_in_uniform(Shape shape, int fan_in, Rng& rng, double gain) {
  Tensor t(std::move(shape), 0.0f, true);
  const double bound = gain * std::sqrt(1.0 / fan_in);
  for (float& v : t.data()) v = static_cast<float>(rng.uniform(-bound, bound));
  return t;
}

Conv2dParams make_conv(int cin, int cout, int kernel, Rng& rng, double weight_gain) {
  const int fan_in = cin * kernel * kernel;
  Conv2dParams p;
  p.weight = fan_in_uniform({cout, cin, kernel, kernel}, fan_in, rng, weight_gain);
  p.bias = fan_in_uniform({cout}, fan_in, rng);
  return p;
}

LinearParams make_linear(int din, int dout, Rng& rng, double weight_gain) {
  LinearParams p;
  p.weight = fan_in_uniform({dout, din}, din, rng, weight_gain);
  p.bias = fan_in_uniform({dout}, din, rng);
  return p;
}

}  // namespace cyto::nn
