#include "cyto/nn/graph.hpp"

#include "cyto/error.hpp"

namespace cyto::nn {

bool Graph::should_record(std::initializer_list<const Tensor*> inputs) const {
  if (!recording_) return false;
  for (const Tensor* t : inputs) {
    if (t && t->requires_grad()) return true;
  }
  return false;
}

void Graph::record(std::string op, std::vector<Tensor> inputs, Tensor output, std::function<void()> backward) {
  nodes_.push_back(Node{std::move(op), std::move(inputs), std::move(output), std::move(backward)});
}

void Graph::backward(Tensor& loss) {
  if (loss.numel() != 1) {
    throw UsageError("backward() needs a scalar loss, got shape " + shape_to_string(loss.shape()));
  }
  loss.grad()[0] += 1.0f;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    // Nodes whose output never received a gradient are not on a path to the loss.
    if (!it->output.has_grad()) continue;
    it->backward();
  }
}

}  // namespace cyto::nn
