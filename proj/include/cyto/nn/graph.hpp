#pragma once

#include <functional>
#include <string>
#include <vector>

#include "cyto/nn/tensor.hpp"

namespace cyto::nn {

/// Tape of executed differentiable ops, in execution order.
///
/// Ops append a node when the graph is recording and at least one input
/// requires a gradient. backward() walks the tape once in reverse; each
/// node's closure reads its output gradient and accumulates into inputs.
class Graph {
 public:
  explicit Graph(bool recording = true) : recording_(recording) {}

  /// Non-recording graph for inference.
  static Graph inference() { return Graph(false); }

  bool recording() const noexcept { return recording_; }

  /// True when `inputs` make the op worth recording.
  bool should_record(std::initializer_list<const Tensor*> inputs) const;

  void record(std::string op, std::vector<Tensor> inputs, Tensor output, std::function<void()> backward);

  /// Seeds d(loss)/d(loss) = 1 and propagates. loss must hold one element.
  void backward(Tensor& loss);

  size_t size() const noexcept { return nodes_.size(); }
  const std::string& op_name(size_t i) const { return nodes_.at(i).op; }
  void clear() { nodes_.clear(); }

 private:
  struct Node {
    std::string op;
    std::vector<Tensor> inputs;
    Tensor output;
    std::function<void()> backward;
  };

  bool recording_;
  std::vector<Node> nodes_;
};

}  // namespace cyto::nn
