#include "cyto/mtl_unet.hpp"

#include <algorithm>
#include <numeric>
#include <string>

#include "cyto/error.hpp"
#include "cyto/nn/ops.hpp"

namespace cyto {

void validate(const LossWeights& w) {
  if (!(w.seg >= 0.0f && w.seg <= 1.0f) || !(w.cls >= 0.0f && w.cls <= 1.0f)) {
    throw ValidationError("loss weights must lie in [0,1], got seg=" + std::to_string(w.seg) +
                          " cls=" + std::to_string(w.cls));
  }
}

MtlUnet::MtlUnet(uint64_t seed, int input_side) : seed_(seed), input_side_(input_side) {
  if (input_side < 16 || input_side % 16 != 0) {
    throw ValidationError("UNet input side must be a positive multiple of 16, got " + std::to_string(input_side));
  }
  Rng rng(seed);
  // Eighteen stacked ReLU layers: at gain 1 the input signal fades below the
  // biases before it reaches the bottleneck.
  const double g = nn::kReluGain;
  int in = 3;
  for (size_t i = 0; i < 4; ++i) {
    const int c = kEncoderChannels[i];
    encoder_[i] = {nn::make_conv(in, c, 3, rng, g), nn::make_conv(c, c, 3, rng, g)};
    in = c;
  }
  bottleneck_ = nn::make_conv(in, kBottleneckChannels, 3, rng, g);
  squeeze_ = nn::make_conv(kBottleneckChannels, kSqueezedChannels, 1, rng, g);
  int prev = kSqueezedChannels;
  for (int i = 3; i >= 0; --i) {
    const int c = kEncoderChannels[i];
    decoder_[i] = {nn::make_conv(prev + c, c, 3, rng, g), nn::make_conv(c, c, 3, rng, g)};
    prev = c;
  }
  seg_head_ = nn::make_conv(kEncoderChannels[0], 1, 1, rng);
  cls_fc1_ = nn::make_linear(kSqueezedChannels, kClsHidden, rng, g);
  cls_fc2_ = nn::make_linear(kClsHidden, kNumClasses, rng);
}

nn::Tensor MtlUnet::run(nn::Graph& g, const DoubleConv& block, const nn::Tensor& x) const {
  nn::Tensor h = nn::relu(g, nn::conv2d(g, x, block.a.weight, block.a.bias, 1, 1));
  return nn::relu(g, nn::conv2d(g, h, block.b.weight, block.b.bias, 1, 1));
}

MtlUnet::Outputs MtlUnet::forward(nn::Graph& g, const nn::Tensor& x) const {
  if (x.rank() != 4 || x.dim(1) != 3 || x.dim(2) != input_side_ || x.dim(3) != input_side_) {
    throw DimensionError("UNet expects [N,3," + std::to_string(input_side_) + "," + std::to_string(input_side_) +
                         "], got " + nn::shape_to_string(x.shape()));
  }
  std::array<nn::Tensor, 4> skips;
  nn::Tensor h = x;
  for (size_t i = 0; i < 4; ++i) {
    skips[i] = run(g, encoder_[i], h);
    h = nn::maxpool2d(g, skips[i], 2, 2);
  }
  h = nn::relu(g, nn::conv2d(g, h, bottleneck_.weight, bottleneck_.bias, 1, 1));
  const nn::Tensor squeezed = nn::relu(g, nn::conv2d(g, h, squeeze_.weight, squeeze_.bias, 1, 0));

  h = squeezed;
  for (int i = 3; i >= 0; --i) {
    nn::Tensor up = nn::upsample_nearest2x(g, h);
    h = run(g, decoder_[i], nn::concat(g, {up, skips[i]}));
  }
  Outputs out;
  out.mask_probs = nn::sigmoid(g, nn::conv2d(g, h, seg_head_.weight, seg_head_.bias, 1, 0));

  nn::Tensor c = nn::global_avg_pool(g, squeezed);
  c = nn::relu(g, nn::linear(g, c, cls_fc1_.weight, cls_fc1_.bias));
  out.class_probs = nn::softmax(g, nn::linear(g, c, cls_fc2_.weight, cls_fc2_.bias));
  return out;
}

MtlUnet::Outputs MtlUnet::predict(const nn::Tensor& x) const {
  nn::Graph g = nn::Graph::inference();
  return forward(g, x);
}

std::vector<NamedTensor> MtlUnet::named_parameters() const {
  std::vector<NamedTensor> out;
  auto conv = [&](const std::string& name, const nn::Conv2dParams& p) {
    out.push_back({name + ".weight", p.weight});
    out.push_back({name + ".bias", p.bias});
  };
  for (size_t i = 0; i < 4; ++i) {
    conv("enc" + std::to_string(i + 1) + ".conv1", encoder_[i].a);
    conv("enc" + std::to_string(i + 1) + ".conv2", encoder_[i].b);
  }
  conv("bottleneck", bottleneck_);
  conv("squeeze", squeeze_);
  for (int i = 3; i >= 0; --i) {
    conv("dec" + std::to_string(i + 1) + ".conv1", decoder_[i].a);
    conv("dec" + std::to_string(i + 1) + ".conv2", decoder_[i].b);
  }
  conv("seg_head", seg_head_);
  out.push_back({"cls_fc1.weight", cls_fc1_.weight});
  out.push_back({"cls_fc1.bias", cls_fc1_.bias});
  out.push_back({"cls_fc2.weight", cls_fc2_.weight});
  out.push_back({"cls_fc2.bias", cls_fc2_.bias});
  return out;
}

std::vector<nn::Tensor> MtlUnet::parameters() const {
  std::vector<nn::Tensor> out;
  for (auto& p : named_parameters()) out.push_back(p.tensor);
  return out;
}

nn::Tensor multitask_loss(nn::Graph& g, const nn::Tensor& mask_probs, const nn::Tensor& mask_gt,
                          const nn::Tensor& class_probs, std::span<const int> labels, const LossWeights& w) {
  validate(w);
  nn::Tensor seg = nn::binary_cross_entropy(g, mask_probs, mask_gt);
  nn::Tensor cls = nn::cross_entropy(g, class_probs, labels);
  return nn::axpby(g, w.seg, seg, w.cls, cls);
}

nn::Tensor stack_images(std::span<const MtlSample* const> batch, int side) {
  const size_t plane = static_cast<size_t>(3) * side * side;
  nn::Tensor x({static_cast<int>(batch.size()), 3, side, side});
  for (size_t i = 0; i < batch.size(); ++i) {
    if (batch[i]->image.size() != plane) throw DimensionError("sample image does not match UNet input side");
    std::copy(batch[i]->image.begin(), batch[i]->image.end(), x.data().begin() + static_cast<std::ptrdiff_t>(i * plane));
  }
  return x;
}

nn::Tensor stack_masks(std::span<const MtlSample* const> batch, int side) {
  const size_t plane = static_cast<size_t>(side) * side;
  nn::Tensor m({static_cast<int>(batch.size()), 1, side, side});
  for (size_t i = 0; i < batch.size(); ++i) {
    if (batch[i]->mask.size() != plane) throw DimensionError("sample mask does not match UNet input side");
    std::copy(batch[i]->mask.begin(), batch[i]->mask.end(), m.data().begin() + static_cast<std::ptrdiff_t>(i * plane));
  }
  return m;
}

StepReport train_step(MtlUnet& model, std::span<const MtlSample* const> batch, nn::Adam& optimizer,
                      const LossWeights& w) {
  if (batch.empty()) throw UsageError("train_step: empty batch");
  validate(w);
  const int side = model.input_side();
  nn::Tensor x = stack_images(batch, side);
  nn::Tensor gt = stack_masks(batch, side);
  std::vector<int> labels;
  for (const MtlSample* s : batch) labels.push_back(s->label);

  nn::Graph g;
  MtlUnet::Outputs out = model.forward(g, x);
  nn::Tensor seg = nn::binary_cross_entropy(g, out.mask_probs, gt);
  nn::Tensor cls = nn::cross_entropy(g, out.class_probs, labels);
  nn::Tensor total = nn::axpby(g, w.seg, seg, w.cls, cls);
  optimizer.zero_grad();
  g.backward(total);
  optimizer.step();
  return {total.item(), seg.item(), cls.item()};
}

MtlEpochReport train_mtl_epoch(MtlUnet& model, std::span<const MtlSample> data, nn::Adam& optimizer, int batch_size,
                               const LossWeights& w, Rng& order_rng) {
  if (data.empty()) throw UsageError("train_mtl_epoch: empty dataset");
  if (batch_size < 1) throw ValidationError("batch size must be >= 1");
  std::vector<size_t> order(data.size());
  std::iota(order.begin(), order.end(), size_t{0});
  order_rng.shuffle(std::span<size_t>(order));
  MtlEpochReport report;
  double loss_sum = 0.0;
  for (size_t start = 0; start < order.size(); start += static_cast<size_t>(batch_size)) {
    const size_t end = std::min(order.size(), start + static_cast<size_t>(batch_size));
    std::vector<const MtlSample*> batch;
    for (size_t i = start; i < end; ++i) batch.push_back(&data[order[i]]);
    loss_sum += train_step(model, batch, optimizer, w).total_loss * static_cast<double>(end - start);
    ++report.steps;
  }
  report.mean_loss = loss_sum / static_cast<double>(data.size());
  return report;
}

std::vector<MtlPrediction> predict_all(const MtlUnet& model, std::span<const MtlSample> data, int batch_size) {
  if (batch_size < 1) throw ValidationError("batch size must be >= 1");
  const int side = model.input_side();
  const size_t plane = static_cast<size_t>(side) * side;
  std::vector<MtlPrediction> out(data.size());
  for (size_t start = 0; start < data.size(); start += static_cast<size_t>(batch_size)) {
    const size_t end = std::min(data.size(), start + static_cast<size_t>(batch_size));
    std::vector<const MtlSample*> batch;
    for (size_t i = start; i < end; ++i) batch.push_back(&data[i]);
    MtlUnet::Outputs o = model.predict(stack_images(batch, side));
    for (size_t i = 0; i < batch.size(); ++i) {
      MtlPrediction& p = out[start + i];
      p.mask_probs.assign(o.mask_probs.data().begin() + static_cast<std::ptrdiff_t>(i * plane),
                          o.mask_probs.data().begin() + static_cast<std::ptrdiff_t>((i + 1) * plane));
      std::copy_n(o.class_probs.data().begin() + static_cast<std::ptrdiff_t>(i * kNumClasses), kNumClasses,
                  p.class_probs.begin());
    }
  }
  return out;
}

}  // namespace cyto
