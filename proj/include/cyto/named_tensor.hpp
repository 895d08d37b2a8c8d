#pragma once

#include <string>
#include <vector>

#include "cyto/nn/tensor.hpp"

namespace cyto {

struct NamedTensor {
  std::string name;
  nn::Tensor tensor;
};

inline size_t total_elements(const std::vector<NamedTensor>& params) {
  size_t n = 0;
  for (const auto& p : params) n += p.tensor.numel();
  return n;
}

}  // namespace cyto
