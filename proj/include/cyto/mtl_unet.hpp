#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "cyto/classes.hpp"
#include "cyto/named_tensor.hpp"
#include "cyto/nn/adam.hpp"
#include "cyto/nn/graph.hpp"
#include "cyto/nn/init.hpp"
#include "cyto/rng.hpp"

namespace cyto {

/// Relative task weights of the combined loss, each in [0,1].
struct LossWeights {
  float seg = 0.5f;
  float cls = 0.5f;
};

void validate(const LossWeights& w);

/// UNet with a channel-squeezed bottleneck feeding both the decoder and a
/// small classification head.
///
///   encoder   4 x (conv3x3 -> ReLU -> conv3x3 -> ReLU -> maxpool), 16/32/64/128 ch
///   bottleneck conv3x3 -> 128 ch, then 1x1 squeeze -> 32 ch
///   decoder   4 x (nearest 2x upsample, concat skip, conv3x3 x2), mirroring the encoder
///   seg head  1x1 conv -> 1 ch -> logistic
///   cls head  global average pool of the squeezed map -> FC 32->64 -> ReLU -> FC 64->5 -> softmax
class MtlUnet {
 public:
  static constexpr std::array<int, 4> kEncoderChannels = {16, 32, 64, 128};
  static constexpr int kBottleneckChannels = 128;
  static constexpr int kSqueezedChannels = 32;
  static constexpr int kClsHidden = 64;

  explicit MtlUnet(uint64_t seed, int input_side = 128);

  struct Outputs {
    nn::Tensor mask_probs;   // [N,1,S,S] in (0,1)
    nn::Tensor class_probs;  // [N,5]
  };

  /// x is [N,3,S,S] with S == input_side().
  Outputs forward(nn::Graph& g, const nn::Tensor& x) const;
  Outputs predict(const nn::Tensor& x) const;

  int input_side() const noexcept { return input_side_; }
  uint64_t seed() const noexcept { return seed_; }

  std::vector<NamedTensor> named_parameters() const;
  std::vector<nn::Tensor> parameters() const;

 private:
  struct DoubleConv {
    nn::Conv2dParams a, b;
  };

  nn::Tensor run(nn::Graph& g, const DoubleConv& block, const nn::Tensor& x) const;

  uint64_t seed_;
  int input_side_;
  std::array<DoubleConv, 4> encoder_;
  nn::Conv2dParams bottleneck_;
  nn::Conv2dParams squeeze_;
  std::array<DoubleConv, 4> decoder_;  // decoder_[i] restores encoder level i
  nn::Conv2dParams seg_head_;
  nn::LinearParams cls_fc1_;
  nn::LinearParams cls_fc2_;
};

/// w.seg * BCE(mask_probs, mask_gt) + w.cls * CE(class_probs, labels).
nn::Tensor multitask_loss(nn::Graph& g, const nn::Tensor& mask_probs, const nn::Tensor& mask_gt,
                          const nn::Tensor& class_probs, std::span<const int> labels, const LossWeights& w);

/// Patch, binary mask and label at the model's input side.
struct MtlSample {
  std::vector<float> image;  // 3*S*S, CHW
  std::vector<float> mask;   // S*S, 0 or 1
  int label = -1;
};

struct StepReport {
  double total_loss = 0.0;
  double seg_loss = 0.0;
  double cls_loss = 0.0;
};

/// Forward, combined loss, backward and one Adam step over the batch.
StepReport train_step(MtlUnet& model, std::span<const MtlSample* const> batch, nn::Adam& optimizer,
                      const LossWeights& w);

struct MtlEpochReport {
  double mean_loss = 0.0;
  int steps = 0;
};

MtlEpochReport train_mtl_epoch(MtlUnet& model, std::span<const MtlSample> data, nn::Adam& optimizer, int batch_size,
                               const LossWeights& w, Rng& order_rng);

/// Stacks images to [N,3,S,S] and masks to [N,1,S,S].
nn::Tensor stack_images(std::span<const MtlSample* const> batch, int side);
nn::Tensor stack_masks(std::span<const MtlSample* const> batch, int side);

struct MtlPrediction {
  std::vector<float> mask_probs;  // S*S
  std::array<float, kNumClasses> class_probs{};
};

std::vector<MtlPrediction> predict_all(const MtlUnet& model, std::span<const MtlSample> data, int batch_size = 16);

}  // namespace cyto
