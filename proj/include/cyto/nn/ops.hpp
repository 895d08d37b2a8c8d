#pragma once

#include <span>
#include <vector>

#include "cyto/nn/graph.hpp"
#include "cyto/nn/tensor.hpp"

namespace cyto::nn {

/// Probability clamp used by the log terms of both losses.
inline constexpr float kProbClamp = 1e-7f;

/// 2-D cross-correlation (no kernel flip).
/// input [N,Cin,H,W], weight [Cout,Cin,kh,kw], bias [Cout] -> [N,Cout,H',W'],
/// H' = (H + 2*padding - kh) / stride + 1.
Tensor conv2d(Graph& g, const Tensor& input, const Tensor& weight, const Tensor& bias, int stride = 1,
              int padding = 0);

/// Max pooling; backward routes to the first maximal element in scan order.
Tensor maxpool2d(Graph& g, const Tensor& input, int kernel = 2, int stride = 2);

/// input [N,Din], weight [Dout,Din], bias [Dout] -> input * weight^T + bias.
Tensor linear(Graph& g, const Tensor& input, const Tensor& weight, const Tensor& bias);

Tensor relu(Graph& g, const Tensor& x);
Tensor sigmoid(Graph& g, const Tensor& x);

/// Row-wise softmax over [N,C], C >= 2, max-shifted.
Tensor softmax(Graph& g, const Tensor& logits);

/// Mean binary cross-entropy over every element. pred is clamped to
/// [kProbClamp, 1 - kProbClamp]; target must be exactly 0 or 1.
Tensor binary_cross_entropy(Graph& g, const Tensor& pred, const Tensor& target);

/// Mean over rows of -log probs[row, label[row]].
Tensor cross_entropy(Graph& g, const Tensor& probs, std::span<const int> labels);

/// Concatenate along axis 1 ([N,C,...] or [N,D]); trailing extents must agree.
Tensor concat(Graph& g, const std::vector<Tensor>& parts);

/// [N,...] -> [N, prod(rest)].
Tensor flatten(Graph& g, const Tensor& x);

/// Nearest-neighbour 2x upsampling of [N,C,H,W].
Tensor upsample_nearest2x(Graph& g, const Tensor& x);

/// [N,C,H,W] -> [N,C] spatial mean.
Tensor global_avg_pool(Graph& g, const Tensor& x);

/// Sum of all elements -> scalar.
Tensor sum(Graph& g, const Tensor& x);

/// alpha * a + beta * b, elementwise over equal shapes.
Tensor axpby(Graph& g, float alpha, const Tensor& a, float beta, const Tensor& b);

}  // namespace cyto::nn
