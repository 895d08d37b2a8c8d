#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "cyto/classes.hpp"
#include "cyto/image.hpp"
#include "cyto/named_tensor.hpp"
#include "cyto/nn/adam.hpp"
#include "cyto/nn/graph.hpp"
#include "cyto/nn/init.hpp"
#include "cyto/rng.hpp"

namespace cyto {

/// One resolution branch: conv3x3(32) -> ReLU -> conv3x3(64) -> ReLU ->
/// pool_count x maxpool2x2 -> flatten -> FC(64) -> ReLU.
struct BranchConfig {
  int input_side = 32;
  int pool_count = 1;
  std::array<int, 2> conv_channels{32, 64};

  int pooled_side() const { return input_side >> pool_count; }
  int flatten_width() const { return conv_channels[1] * pooled_side() * pooled_side(); }
};

/// 32/64/128 branches pooled 1/3/4 times (16x16, 8x8, 8x8 maps).
std::array<BranchConfig, 3> default_branch_configs();

/// A batch of the same images at the three branch resolutions,
/// each [N, 3, side, side].
struct ResolutionTriple {
  std::array<nn::Tensor, 3> inputs;
  int batch() const { return inputs[0].dim(0); }
};

/// One training/inference item: the three CHW planes and a label.
struct MultiResSample {
  std::array<std::vector<float>, 3> planes;
  int label = -1;
};

MultiResSample make_multires_sample(const FloatImage& image, int label,
                                    const std::array<BranchConfig, 3>& branches = default_branch_configs());

/// Stacks samples into a ResolutionTriple.
ResolutionTriple stack_samples(std::span<const MultiResSample* const> samples,
                               const std::array<BranchConfig, 3>& branches);

class MrfDcn {
 public:
  static constexpr int kBranchWidth = 64;
  static constexpr int kFusionWidth = 3 * kBranchWidth;  // 192
  static constexpr int kFeatureWidth = 64;

  explicit MrfDcn(uint64_t seed, std::array<BranchConfig, 3> branches = default_branch_configs());

  struct Outputs {
    nn::Tensor features;  // [N, 64], post-ReLU fusion output
    nn::Tensor probs;     // [N, 5]
  };

  Outputs forward(nn::Graph& g, const ResolutionTriple& x) const;
  /// softmax(output_fc(features)).
  nn::Tensor head(nn::Graph& g, const nn::Tensor& features) const;

  nn::Tensor predict(const ResolutionTriple& x) const;
  nn::Tensor extract_features(const ResolutionTriple& x) const;

  uint64_t seed() const noexcept { return seed_; }
  const std::array<BranchConfig, 3>& branches() const noexcept { return branches_; }

  std::vector<NamedTensor> named_parameters() const;
  std::vector<nn::Tensor> parameters() const;

  const nn::LinearParams& fusion_layer() const noexcept { return fusion_fc_; }
  const nn::LinearParams& output_layer() const noexcept { return output_fc_; }
  const nn::Conv2dParams& branch_conv(int branch, int layer) const { return branch_.at(branch).conv.at(layer); }

 private:
  struct Branch {
    std::array<nn::Conv2dParams, 2> conv;
    nn::LinearParams fc;
  };

  void validate(const ResolutionTriple& x) const;

  uint64_t seed_;
  std::array<BranchConfig, 3> branches_;
  std::array<Branch, 3> branch_;
  nn::LinearParams fusion_fc_;
  nn::LinearParams output_fc_;
};

/// Exact count of weight and bias elements.
size_t count_parameters(const MrfDcn& model);

struct EpochReport {
  double mean_loss = 0.0;
  double accuracy = 0.0;
  int steps = 0;
};

/// One pass over `data` in a seeded random order, one Adam step per batch of
/// categorical cross-entropy. Loss and accuracy are computed on the
/// pre-update predictions of each batch.
EpochReport train_epoch(MrfDcn& model, std::span<const MultiResSample> data, nn::Adam& optimizer, int batch_size,
                        Rng& order_rng);

/// Class probabilities [N,5] for every sample, batched.
std::vector<std::array<float, kNumClasses>> predict_all(const MrfDcn& model, std::span<const MultiResSample> data,
                                                        int batch_size = 32);
std::vector<std::vector<float>> features_all(const MrfDcn& model, std::span<const MultiResSample> data,
                                             int batch_size = 32);

int argmax(std::span<const float> values);

}  // namespace cyto
