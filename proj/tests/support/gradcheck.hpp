#pragma once

// Random small layer programs, evaluated twice: through the library (float,
// analytic gradients) and through ref:: (double, central differences).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "cyto/nn/graph.hpp"
#include "cyto/nn/ops.hpp"
#include "reference.hpp"

namespace gradcheck {

enum class Kind { Conv, Pool, Linear, Relu, Sigmoid, Flatten, Gap, Upsample, SkipConcat };

struct Layer {
  Kind kind;
  int param = -1;  // weight index; the bias follows it
  int stride = 1;
  int pad = 0;
};

struct Program {
  std::vector<int> input_shape;
  std::vector<std::vector<int>> param_shapes;
  std::vector<Layer> trunk;
  std::vector<Layer> cls;  // applied to the trunk output, softmax + CE at the end
  std::vector<Layer> seg;  // applied to the trunk output, sigmoid + BCE at the end
  std::vector<int> labels;
  std::vector<double> target;
  double w_seg = 1.0, w_cls = 1.0;

  size_t parameter_count() const {
    size_t n = 0;
    for (const auto& s : param_shapes) n += ref::T::count(s);
    return n;
  }
  std::string describe() const;
};

inline const char* name(Kind k) {
  switch (k) {
    case Kind::Conv: return "conv";
    case Kind::Pool: return "pool";
    case Kind::Linear: return "linear";
    case Kind::Relu: return "relu";
    case Kind::Sigmoid: return "sigmoid";
    case Kind::Flatten: return "flatten";
    case Kind::Gap: return "gap";
    case Kind::Upsample: return "up2x";
    case Kind::SkipConcat: return "skipcat";
  }
  return "?";
}

inline std::string Program::describe() const {
  std::string s;
  for (const Layer& l : trunk) s += std::string(name(l.kind)) + " ";
  if (!cls.empty()) {
    s += "| cls: ";
    for (const Layer& l : cls) s += std::string(name(l.kind)) + " ";
    s += "softmax ce ";
  }
  if (!seg.empty()) {
    s += "| seg: ";
    for (const Layer& l : seg) s += std::string(name(l.kind)) + " ";
    s += "sigmoid bce";
  }
  return s;
}

// ---- backends --------------------------------------------------------------

struct LibBackend {
  using V = cyto::nn::Tensor;
  cyto::nn::Graph g;
  const std::vector<V>* params = nullptr;

  V conv(const V& x, const Layer& l) {
    return cyto::nn::conv2d(g, x, (*params)[l.param], (*params)[l.param + 1], l.stride, l.pad);
  }
  V pool(const V& x) { return cyto::nn::maxpool2d(g, x, 2, 2); }
  V linear(const V& x, const Layer& l) { return cyto::nn::linear(g, x, (*params)[l.param], (*params)[l.param + 1]); }
  V relu(const V& x) { return cyto::nn::relu(g, x); }
  V sigmoid(const V& x) { return cyto::nn::sigmoid(g, x); }
  V flatten(const V& x) { return cyto::nn::flatten(g, x); }
  V gap(const V& x) { return cyto::nn::global_avg_pool(g, x); }
  V upsample(const V& x) { return cyto::nn::upsample_nearest2x(g, x); }
  V concat(const V& a, const V& b) { return cyto::nn::concat(g, {a, b}); }
  V softmax(const V& x) { return cyto::nn::softmax(g, x); }
  V ce(const V& p, const std::vector<int>& labels) { return cyto::nn::cross_entropy(g, p, labels); }
  V bce(const V& p, const std::vector<double>& target) {
    std::vector<float> t(target.begin(), target.end());
    return cyto::nn::binary_cross_entropy(g, p, V(p.shape(), std::move(t)));
  }
  V axpby(double a, const V& x, double b, const V& y) {
    return cyto::nn::axpby(g, static_cast<float>(a), x, static_cast<float>(b), y);
  }
};

struct RefBackend {
  using V = ref::T;
  const std::vector<V>* params = nullptr;
  // ReLU signs and pooling argmax positions seen during the evaluation.
  std::vector<int> pattern;

  V conv(const V& x, const Layer& l) { return ref::conv2d(x, (*params)[l.param], (*params)[l.param + 1], l.stride, l.pad); }
  V pool(const V& x) {
    for (int n = 0; n < x.d(0); ++n)
      for (int c = 0; c < x.d(1); ++c)
        for (int y = 0; y + 1 < x.d(2); y += 2)
          for (int xx = 0; xx + 1 < x.d(3); xx += 2) {
            int best = 0;
            double m = x.at4(n, c, y, xx);
            for (int k = 1; k < 4; ++k) {
              const double v = x.at4(n, c, y + k / 2, xx + k % 2);
              if (v > m) m = v, best = k;
            }
            pattern.push_back(best);
          }
    return ref::maxpool(x, 2, 2);
  }
  V linear(const V& x, const Layer& l) { return ref::linear(x, (*params)[l.param], (*params)[l.param + 1]); }
  V relu(const V& x) {
    for (double v : x.v) pattern.push_back(v > 0 ? 1 : 0);
    return ref::relu(x);
  }
  V sigmoid(const V& x) { return ref::sigmoid(x); }
  V flatten(const V& x) { return ref::flatten(x); }
  V gap(const V& x) { return ref::gap(x); }
  V upsample(const V& x) { return ref::upsample2x(x); }
  V concat(const V& a, const V& b) { return ref::concat({a, b}); }
  V softmax(const V& x) { return ref::softmax(x); }
  V ce(const V& p, const std::vector<int>& labels) {
    V s({1});
    s.v[0] = ref::ce(p, labels);
    return s;
  }
  V bce(const V& p, const std::vector<double>& target) {
    V t(p.shape);
    t.v = target;
    V s({1});
    s.v[0] = ref::bce(p, t);
    return s;
  }
  V axpby(double a, const V& x, double b, const V& y) {
    V s({1});
    s.v[0] = a * x.v[0] + b * y.v[0];
    return s;
  }
};

template <class B>
typename B::V apply(B& b, const std::vector<Layer>& layers, typename B::V h) {
  for (const Layer& l : layers) {
    switch (l.kind) {
      case Kind::Conv: h = b.conv(h, l); break;
      case Kind::Pool: h = b.pool(h); break;
      case Kind::Linear: h = b.linear(h, l); break;
      case Kind::Relu: h = b.relu(h); break;
      case Kind::Sigmoid: h = b.sigmoid(h); break;
      case Kind::Flatten: h = b.flatten(h); break;
      case Kind::Gap: h = b.gap(h); break;
      case Kind::Upsample: h = b.upsample(h); break;
      case Kind::SkipConcat: h = b.concat(b.conv(h, l), h); break;
    }
  }
  return h;
}

template <class B>
typename B::V loss(B& b, const Program& p, const typename B::V& x) {
  const typename B::V h = apply(b, p.trunk, x);
  typename B::V lc, ls;
  if (!p.cls.empty()) lc = b.ce(b.softmax(apply(b, p.cls, h)), p.labels);
  if (!p.seg.empty()) ls = b.bce(b.sigmoid(apply(b, p.seg, h)), p.target);
  if (p.cls.empty()) return ls;
  if (p.seg.empty()) return lc;
  return b.axpby(p.w_seg, ls, p.w_cls, lc);
}

// ---- random programs --------------------------------------------------------

class Builder {
 public:
  explicit Builder(uint64_t seed) : rng_(seed) {}

  int pick(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng_); }
  bool coin(double p = 0.5) { return std::uniform_real_distribution<double>(0, 1)(rng_) < p; }

  Program build() {
    Program p;
    int n = pick(2, 3), c = pick(1, 3), side = 2 * pick(2, 4);
    p.input_shape = {n, c, side, side};

    const int blocks = pick(1, 2);
    for (int b = 0; b < blocks; ++b) {
      const int k = coin(0.75) ? 3 : 1;
      const int pad = k == 3 ? (side >= 4 ? pick(0, 1) : 1) : 0;
      const int stride = side >= 6 && coin(0.3) ? 2 : 1;
      const int cout = pick(2, 4);
      p.trunk.push_back({Kind::Conv, add_param(p, {cout, c, k, k}, {cout}), stride, pad});
      side = (side + 2 * pad - k) / stride + 1;
      c = cout;
      p.trunk.push_back({coin(0.8) ? Kind::Relu : Kind::Sigmoid});
      if (side >= 4 && side % 2 == 0 && coin(0.5)) {
        p.trunk.push_back({Kind::Pool});
        side /= 2;
      }
    }
    if (coin(0.35)) {
      const int cout = pick(1, 3);
      p.trunk.push_back({Kind::SkipConcat, add_param(p, {cout, c, 3, 3}, {cout}), 1, 1});
      c += cout;
    }
    if (side <= 3 && coin(0.5)) {
      p.trunk.push_back({Kind::Upsample});
      side *= 2;
    }

    const int heads = pick(0, 2);  // 0 cls, 1 seg, 2 both
    if (heads != 1) {
      int width;
      if (coin(0.5)) {
        p.cls.push_back({Kind::Flatten});
        width = c * side * side;
      } else {
        p.cls.push_back({Kind::Gap});
        width = c;
      }
      const int classes = pick(2, 4);
      // At most five parameterised layers in total.
      const size_t layers = p.param_shapes.size() / 2 + 1 + (heads == 2 ? 1 : 0);
      if (layers < 5 && coin(0.6)) {
        const int hidden = pick(3, 6);
        p.cls.push_back({Kind::Linear, add_param(p, {hidden, width}, {hidden})});
        p.cls.push_back({Kind::Relu});
        width = hidden;
      }
      p.cls.push_back({Kind::Linear, add_param(p, {classes, width}, {classes})});
      for (int i = 0; i < n; ++i) p.labels.push_back(pick(0, classes - 1));
    }
    if (heads != 0) {
      p.seg.push_back({Kind::Conv, add_param(p, {1, c, 1, 1}, {1})});
      for (int i = 0; i < n * side * side; ++i) p.target.push_back(coin() ? 1.0 : 0.0);
    }
    if (heads == 2) {
      p.w_seg = std::uniform_real_distribution<double>(0.1, 1.0)(rng_);
      p.w_cls = std::uniform_real_distribution<double>(0.1, 1.0)(rng_);
    }
    return p;
  }

  // Values are rounded to float so both backends see the same numbers.
  std::vector<ref::T> values(const Program& p) {
    std::vector<ref::T> out;
    auto fill = [&](const std::vector<int>& shape, double bound) {
      ref::T t(shape);
      for (double& v : t.v) v = static_cast<float>(std::uniform_real_distribution<double>(-bound, bound)(rng_));
      out.push_back(std::move(t));
    };
    fill(p.input_shape, 1.0);
    for (const auto& s : p.param_shapes) {
      size_t fan = 1;
      for (size_t k = 1; k < s.size(); ++k) fan *= static_cast<size_t>(s[k]);
      fill(s, s.size() == 1 ? 0.5 : 1.5 / std::sqrt(static_cast<double>(fan)));
    }
    return out;
  }

 private:
  int add_param(Program& p, std::vector<int> w, std::vector<int> b) {
    const int idx = static_cast<int>(p.param_shapes.size());
    p.param_shapes.push_back(std::move(w));
    p.param_shapes.push_back(std::move(b));
    return idx;
  }

  std::mt19937_64 rng_;
};

// ---- the check --------------------------------------------------------------

struct Result {
  double max_rel_error = 0.0;  // worst tensor
  size_t checked = 0;
  size_t skipped = 0;  // probes that crossed a ReLU or pooling switch
  std::string worst_tensor;
};

// values[0] is the input, values[1..] the parameters. Per tensor the error is
// max|analytic - numeric| / max(max|analytic|, max|numeric|, floor).
inline Result check(const Program& p, const std::vector<ref::T>& values, double h = 1e-3, double floor = 1e-6) {
  using cyto::nn::Tensor;
  std::vector<Tensor> lib;
  for (const ref::T& v : values) {
    std::vector<float> f(v.v.begin(), v.v.end());
    lib.emplace_back(v.shape, std::move(f), true);
  }
  LibBackend lb;
  std::vector<Tensor> lib_params(lib.begin() + 1, lib.end());
  lb.params = &lib_params;
  Tensor l = loss(lb, p, lib[0]);
  lb.g.backward(l);

  std::vector<ref::T> work = values;
  auto eval = [&](std::vector<int>& pattern) {
    RefBackend rb;
    std::vector<ref::T> params(work.begin() + 1, work.end());
    rb.params = &params;
    const double f = loss(rb, p, work[0]).v[0];
    pattern = std::move(rb.pattern);
    return f;
  };
  std::vector<int> base, plus, minus;
  eval(base);

  Result r;
  for (size_t t = 0; t < work.size(); ++t) {
    const auto analytic = lib[t].grad();
    double max_diff = 0.0, max_a = 0.0, max_n = 0.0;
    for (size_t i = 0; i < work[t].v.size(); ++i) {
      const double orig = work[t].v[i];
      work[t].v[i] = orig + h;
      const double fp = eval(plus);
      work[t].v[i] = orig - h;
      const double fm = eval(minus);
      work[t].v[i] = orig;
      if (plus != base || minus != base) {
        ++r.skipped;
        continue;
      }
      const double numeric = (fp - fm) / (2 * h);
      const double a = analytic[i];
      max_diff = std::max(max_diff, std::abs(a - numeric));
      max_a = std::max(max_a, std::abs(a));
      max_n = std::max(max_n, std::abs(numeric));
      ++r.checked;
    }
    const double rel = max_diff / std::max({max_a, max_n, floor});
    if (rel > r.max_rel_error) {
      r.max_rel_error = rel;
      r.worst_tensor = t == 0 ? "input" : "param" + std::to_string(t - 1);
    }
  }
  return r;
}

}  // namespace gradcheck
