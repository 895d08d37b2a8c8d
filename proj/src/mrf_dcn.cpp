#include "cyto/mrf_dcn.hpp"

#include <algorithm>
#include <numeric>
#include <string>

#include "cyto/error.hpp"
#include "cyto/nn/ops.hpp"

namespace cyto {

std::array<BranchConfig, 3> default_branch_configs() {
  return {BranchConfig{32, 1, {32, 64}}, BranchConfig{64, 3, {32, 64}}, BranchConfig{128, 4, {32, 64}}};
}

MultiResSample make_multires_sample(const FloatImage& image, int label, const std::array<BranchConfig, 3>& branches) {
  if (image.channels != 3) throw DimensionError("multi-resolution input must be RGB");
  MultiResSample s;
  s.label = label;
  for (size_t b = 0; b < 3; ++b) {
    const int side = branches[b].input_side;
    s.planes[b] = resize_bilinear(image, side, side).data;
  }
  return s;
}

ResolutionTriple stack_samples(std::span<const MultiResSample* const> samples,
                               const std::array<BranchConfig, 3>& branches) {
  if (samples.empty()) throw UsageError("cannot stack an empty batch");
  const int n = static_cast<int>(samples.size());
  ResolutionTriple t;
  for (size_t b = 0; b < 3; ++b) {
    const int side = branches[b].input_side;
    const size_t plane = static_cast<size_t>(3) * side * side;
    nn::Tensor x({n, 3, side, side});
    for (int i = 0; i < n; ++i) {
      const std::vector<float>& src = samples[i]->planes[b];
      if (src.size() != plane) throw DimensionError("sample plane size does not match branch resolution");
      std::copy(src.begin(), src.end(), x.data().begin() + static_cast<std::ptrdiff_t>(i * plane));
    }
    t.inputs[b] = x;
  }
  return t;
}

MrfDcn::MrfDcn(uint64_t seed, std::array<BranchConfig, 3> branches) : seed_(seed), branches_(branches) {
  Rng rng(seed);
  for (size_t b = 0; b < 3; ++b) {
    const BranchConfig& cfg = branches_[b];
    if (cfg.input_side <= 0 || cfg.pool_count < 0 || cfg.pooled_side() < 4 ||
        (cfg.input_side % (1 << cfg.pool_count)) != 0) {
      throw ValidationError("branch " + std::to_string(b) + ": input side " + std::to_string(cfg.input_side) +
                            " cannot be pooled " + std::to_string(cfg.pool_count) + " times down to >= 4");
    }
    branch_[b].conv[0] = nn::make_conv(3, cfg.conv_channels[0], 3, rng);
    branch_[b].conv[1] = nn::make_conv(cfg.conv_channels[0], cfg.conv_channels[1], 3, rng);
    branch_[b].fc = nn::make_linear(cfg.flatten_width(), kBranchWidth, rng);
  }
  fusion_fc_ = nn::make_linear(kFusionWidth, kFeatureWidth, rng);
  output_fc_ = nn::make_linear(kFeatureWidth, kNumClasses, rng);
}

void MrfDcn::validate(const ResolutionTriple& x) const {
  for (size_t b = 0; b < 3; ++b) {
    const nn::Tensor& t = x.inputs[b];
    const int side = branches_[b].input_side;
    if (!t.defined() || t.rank() != 4 || t.dim(1) != 3 || t.dim(2) != side || t.dim(3) != side ||
        t.dim(0) != x.inputs[0].dim(0)) {
      throw DimensionError("branch " + std::to_string(b) + " expects [N,3," + std::to_string(side) + "," +
                           std::to_string(side) + "], got " +
                           (t.defined() ? nn::shape_to_string(t.shape()) : std::string("nothing")));
    }
  }
}

MrfDcn::Outputs MrfDcn::forward(nn::Graph& g, const ResolutionTriple& x) const {
  validate(x);
  std::vector<nn::Tensor> branch_out;
  branch_out.reserve(3);
  for (size_t b = 0; b < 3; ++b) {
    const Branch& br = branch_[b];
    nn::Tensor h = nn::relu(g, nn::conv2d(g, x.inputs[b], br.conv[0].weight, br.conv[0].bias, 1, 1));
    h = nn::relu(g, nn::conv2d(g, h, br.conv[1].weight, br.conv[1].bias, 1, 1));
    for (int p = 0; p < branches_[b].pool_count; ++p) h = nn::maxpool2d(g, h, 2, 2);
    h = nn::flatten(g, h);
    branch_out.push_back(nn::relu(g, nn::linear(g, h, br.fc.weight, br.fc.bias)));
  }
  nn::Tensor fused = nn::concat(g, branch_out);
  Outputs out;
  out.features = nn::relu(g, nn::linear(g, fused, fusion_fc_.weight, fusion_fc_.bias));
  out.probs = head(g, out.features);
  return out;
}

nn::Tensor MrfDcn::head(nn::Graph& g, const nn::Tensor& features) const {
  return nn::softmax(g, nn::linear(g, features, output_fc_.weight, output_fc_.bias));
}

nn::Tensor MrfDcn::predict(const ResolutionTriple& x) const {
  nn::Graph g = nn::Graph::inference();
  return forward(g, x).probs;
}

nn::Tensor MrfDcn::extract_features(const ResolutionTriple& x) const {
  nn::Graph g = nn::Graph::inference();
  return forward(g, x).features;
}

std::vector<NamedTensor> MrfDcn::named_parameters() const {
  std::vector<NamedTensor> out;
  static constexpr const char* kBranchNames[3] = {"branch32", "branch64", "branch128"};
  for (size_t b = 0; b < 3; ++b) {
    const std::string prefix = kBranchNames[b];
    for (size_t l = 0; l < 2; ++l) {
      const std::string layer = prefix + ".conv" + std::to_string(l + 1);
      out.push_back({layer + ".weight", branch_[b].conv[l].weight});
      out.push_back({layer + ".bias", branch_[b].conv[l].bias});
    }
    out.push_back({prefix + ".fc.weight", branch_[b].fc.weight});
    out.push_back({prefix + ".fc.bias", branch_[b].fc.bias});
  }
  out.push_back({"fusion_fc.weight", fusion_fc_.weight});
  out.push_back({"fusion_fc.bias", fusion_fc_.bias});
  out.push_back({"output_fc.weight", output_fc_.weight});
  out.push_back({"output_fc.bias", output_fc_.bias});
  return out;
}

std::vector<nn::Tensor> MrfDcn::parameters() const {
  std::vector<nn::Tensor> out;
  for (auto& p : named_parameters()) out.push_back(p.tensor);
  return out;
}

size_t count_parameters(const MrfDcn& model) { return total_elements(model.named_parameters()); }

int argmax(std::span<const float> values) {
  return static_cast<int>(std::max_element(values.begin(), values.end()) - values.begin());
}

EpochReport train_epoch(MrfDcn& model, std::span<const MultiResSample> data, nn::Adam& optimizer, int batch_size,
                        Rng& order_rng) {
  if (data.empty()) throw UsageError("train_epoch: empty dataset");
  if (batch_size < 1) throw ValidationError("train_epoch: batch size must be >= 1");
  std::vector<size_t> order(data.size());
  std::iota(order.begin(), order.end(), size_t{0});
  order_rng.shuffle(std::span<size_t>(order));

  EpochReport report;
  double loss_sum = 0.0;
  size_t correct = 0;
  for (size_t start = 0; start < order.size(); start += static_cast<size_t>(batch_size)) {
    const size_t end = std::min(order.size(), start + static_cast<size_t>(batch_size));
    std::vector<const MultiResSample*> batch;
    std::vector<int> labels;
    for (size_t i = start; i < end; ++i) {
      batch.push_back(&data[order[i]]);
      labels.push_back(data[order[i]].label);
    }
    ResolutionTriple x = stack_samples(batch, model.branches());

    nn::Graph g;
    MrfDcn::Outputs out = model.forward(g, x);
    nn::Tensor loss = nn::cross_entropy(g, out.probs, labels);
    optimizer.zero_grad();
    g.backward(loss);
    optimizer.step();

    const size_t n = end - start;
    loss_sum += static_cast<double>(loss.item()) * static_cast<double>(n);
    std::span<const float> p = out.probs.data();
    for (size_t i = 0; i < n; ++i) {
      if (argmax(p.subspan(i * kNumClasses, kNumClasses)) == labels[i]) ++correct;
    }
    ++report.steps;
  }
  report.mean_loss = loss_sum / static_cast<double>(data.size());
  report.accuracy = static_cast<double>(correct) / static_cast<double>(data.size());
  return report;
}

namespace {

template <typename Fn>
void for_each_batch(const MrfDcn& model, std::span<const MultiResSample> data, int batch_size, Fn&& fn) {
  if (batch_size < 1) throw ValidationError("batch size must be >= 1");
  for (size_t start = 0; start < data.size(); start += static_cast<size_t>(batch_size)) {
    const size_t end = std::min(data.size(), start + static_cast<size_t>(batch_size));
    std::vector<const MultiResSample*> batch;
    for (size_t i = start; i < end; ++i) batch.push_back(&data[i]);
    fn(stack_samples(batch, model.branches()), start);
  }
}

}  // namespace

std::vector<std::array<float, kNumClasses>> predict_all(const MrfDcn& model, std::span<const MultiResSample> data,
                                                        int batch_size) {
  std::vector<std::array<float, kNumClasses>> out(data.size());
  for_each_batch(model, data, batch_size, [&](const ResolutionTriple& x, size_t start) {
    nn::Tensor p = model.predict(x);
    for (int i = 0; i < x.batch(); ++i) {
      std::copy_n(p.data().begin() + i * kNumClasses, kNumClasses, out[start + i].begin());
    }
  });
  return out;
}

std::vector<std::vector<float>> features_all(const MrfDcn& model, std::span<const MultiResSample> data,
                                             int batch_size) {
  std::vector<std::vector<float>> out(data.size());
  for_each_batch(model, data, batch_size, [&](const ResolutionTriple& x, size_t start) {
    nn::Tensor f = model.extract_features(x);
    const int w = MrfDcn::kFeatureWidth;
    for (int i = 0; i < x.batch(); ++i) {
      out[start + i].assign(f.data().begin() + i * w, f.data().begin() + (i + 1) * w);
    }
  });
  return out;
}

}  // namespace cyto
