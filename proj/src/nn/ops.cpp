#include "cyto/nn/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "cyto/error.hpp"

namespace cyto::nn {
namespace {

using MatRM = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapRM = Eigen::Map<MatRM>;
using CMapRM = Eigen::Map<const MatRM>;
using CMapVec = Eigen::Map<const Eigen::VectorXf>;

Tensor make_output(Shape shape, bool requires_grad) { return Tensor(std::move(shape), 0.0f, requires_grad); }

void expect_rank(const Tensor& t, size_t rank, const char* op, const char* what) {
  if (t.rank() != rank) {
    throw DimensionError(std::string(op) + ": " + what + " must have rank " + std::to_string(rank) + ", got " +
                         shape_to_string(t.shape()));
  }
}

// Reused im2col buffers; conv layers run one after another on a thread.
// Built from Tensors so they share the tensor storage alignment.
float* scratch(int slot, size_t size) {
  thread_local Tensor buffers[2];
  Tensor& b = buffers[slot];
  if (!b.defined() || b.numel() < size) b = Tensor({static_cast<int>(size)});
  return b.data().data();
}

// Fixed left-to-right order; Eigen's vectorised reductions regroup the sum
// depending on where each row starts in memory.
float ordered_sum(const float* p, size_t n) {
  float s = 0.0f;
  for (size_t i = 0; i < n; ++i) s += p[i];
  return s;
}

void accumulate(std::span<float> dst, std::span<const float> src) {
  for (size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

struct ConvGeom {
  int n, cin, h, w;
  int cout, kh, kw;
  int stride, pad;
  int ho, wo;

  int patch() const { return cin * kh * kw; }
  int positions() const { return ho * wo; }
  bool is_pointwise() const { return kh == 1 && kw == 1 && stride == 1 && pad == 0; }
};

// col is [cin*kh*kw, (r1-r0)*wo] for output rows [r0, r1); row (c, ki, kj)
// holds the input pixel each output position sees through that kernel tap,
// zero where it falls in padding.
void im2col(const float* x, const ConvGeom& g, int r0, int r1, float* col) {
  const int p = (r1 - r0) * g.wo;
  for (int c = 0; c < g.cin; ++c) {
    for (int ki = 0; ki < g.kh; ++ki) {
      for (int kj = 0; kj < g.kw; ++kj) {
        float* dst = col + static_cast<size_t>((c * g.kh + ki) * g.kw + kj) * p;
        for (int oy = r0; oy < r1; ++oy) {
          float* drow = dst + static_cast<size_t>(oy - r0) * g.wo;
          const int iy = oy * g.stride - g.pad + ki;
          if (iy < 0 || iy >= g.h) {
            std::fill(drow, drow + g.wo, 0.0f);
            continue;
          }
          const float* src = x + (static_cast<size_t>(c) * g.h + iy) * g.w;
          if (g.stride == 1) {
            const int lo = std::clamp(g.pad - kj, 0, g.wo);
            const int hi = std::clamp(g.w + g.pad - kj, lo, g.wo);
            std::fill(drow, drow + lo, 0.0f);
            std::copy(src + lo - g.pad + kj, src + hi - g.pad + kj, drow + lo);
            std::fill(drow + hi, drow + g.wo, 0.0f);
          } else {
            for (int ox = 0; ox < g.wo; ++ox) {
              const int ix = ox * g.stride - g.pad + kj;
              drow[ox] = (ix >= 0 && ix < g.w) ? src[ix] : 0.0f;
            }
          }
        }
      }
    }
  }
}

void col2im_add(const float* col, const ConvGeom& g, int r0, int r1, float* dx) {
  const int p = (r1 - r0) * g.wo;
  for (int c = 0; c < g.cin; ++c) {
    for (int ki = 0; ki < g.kh; ++ki) {
      for (int kj = 0; kj < g.kw; ++kj) {
        const float* src = col + static_cast<size_t>((c * g.kh + ki) * g.kw + kj) * p;
        for (int oy = r0; oy < r1; ++oy) {
          const int iy = oy * g.stride - g.pad + ki;
          if (iy < 0 || iy >= g.h) continue;
          const float* srow = src + static_cast<size_t>(oy - r0) * g.wo;
          float* drow = dx + (static_cast<size_t>(c) * g.h + iy) * g.w;
          if (g.stride == 1) {
            const int lo = std::clamp(g.pad - kj, 0, g.wo);
            const int hi = std::clamp(g.w + g.pad - kj, lo, g.wo);
            for (int ox = lo; ox < hi; ++ox) drow[ox - g.pad + kj] += srow[ox];
          } else {
            for (int ox = 0; ox < g.wo; ++ox) {
              const int ix = ox * g.stride - g.pad + kj;
              if (ix >= 0 && ix < g.w) drow[ix] += srow[ox];
            }
          }
        }
      }
    }
  }
}

// Output rows per im2col block, sized so a block stays cache resident.
int rows_per_block(const ConvGeom& g) {
  constexpr size_t kBlockFloats = size_t{1} << 17;
  const size_t per_row = static_cast<size_t>(g.patch()) * g.wo;
  return static_cast<int>(std::clamp<size_t>(kBlockFloats / std::max<size_t>(per_row, 1), 1, g.ho));
}

using StridedRM = Eigen::Map<MatRM, 0, Eigen::OuterStride<>>;
using CStridedRM = Eigen::Map<const MatRM, 0, Eigen::OuterStride<>>;

}  // namespace

Tensor conv2d(Graph& g, const Tensor& input, const Tensor& weight, const Tensor& bias, int stride, int padding) {
  expect_rank(input, 4, "conv2d", "input");
  expect_rank(weight, 4, "conv2d", "weight");
  expect_rank(bias, 1, "conv2d", "bias");
  if (stride < 1 || padding < 0) throw ValidationError("conv2d: stride must be >= 1 and padding >= 0");
  ConvGeom geo{input.dim(0), input.dim(1), input.dim(2), input.dim(3), weight.dim(0), weight.dim(2), weight.dim(3),
               stride, padding, 0, 0};
  if (weight.dim(1) != geo.cin) {
    throw DimensionError("conv2d: weight expects " + std::to_string(weight.dim(1)) + " input channels, input has " +
                         std::to_string(geo.cin));
  }
  if (bias.dim(0) != geo.cout) throw DimensionError("conv2d: bias length must equal output channels");
  if (geo.kh % 2 == 0 || geo.kw % 2 == 0) throw DimensionError("conv2d: kernel extents must be odd");
  if (geo.h + 2 * padding < geo.kh || geo.w + 2 * padding < geo.kw) {
    throw DimensionError("conv2d: kernel larger than padded input " + shape_to_string(input.shape()));
  }
  geo.ho = (geo.h + 2 * padding - geo.kh) / stride + 1;
  geo.wo = (geo.w + 2 * padding - geo.kw) / stride + 1;

  const bool rec = g.should_record({&input, &weight, &bias});
  Tensor out = make_output({geo.n, geo.cout, geo.ho, geo.wo}, rec);

  const int K = geo.patch();
  const int P = geo.positions();
  const size_t in_stride = static_cast<size_t>(geo.cin) * geo.h * geo.w;
  const size_t out_stride = static_cast<size_t>(geo.cout) * P;
  CMapRM wmat(weight.data().data(), geo.cout, K);
  CMapVec bvec(bias.data().data(), geo.cout);
  const int block = rows_per_block(geo);
  float* col = geo.is_pointwise() ? nullptr : scratch(0, static_cast<size_t>(K) * block * geo.wo);
  for (int n = 0; n < geo.n; ++n) {
    const float* x = input.data().data() + n * in_stride;
    MapRM y(out.data().data() + n * out_stride, geo.cout, P);
    y.colwise() = bvec;
    if (!col) {
      y.noalias() += wmat * CMapRM(x, K, P);
      continue;
    }
    for (int r0 = 0; r0 < geo.ho; r0 += block) {
      const int r1 = std::min(geo.ho, r0 + block);
      const int cols = (r1 - r0) * geo.wo;
      im2col(x, geo, r0, r1, col);
      StridedRM(y.data() + r0 * geo.wo, geo.cout, cols, Eigen::OuterStride<>(P)).noalias() +=
          wmat * CMapRM(col, K, cols);
    }
  }
  check_finite(out, "conv2d");

  if (rec) {
    g.record("conv2d", {input, weight, bias}, out, [input, weight, bias, out, geo]() mutable {
      const int K = geo.patch();
      const int P = geo.positions();
      const size_t in_stride = static_cast<size_t>(geo.cin) * geo.h * geo.w;
      const size_t out_stride = static_cast<size_t>(geo.cout) * P;
      const bool need_dx = input.requires_grad();
      const bool need_dw = weight.requires_grad();
      const bool need_db = bias.requires_grad();
      CMapRM wmat(weight.data().data(), geo.cout, K);
      const int block = rows_per_block(geo);
      const size_t cap = static_cast<size_t>(K) * block * geo.wo;
      float* col = geo.is_pointwise() || !need_dw ? nullptr : scratch(0, cap);
      float* dcol = geo.is_pointwise() || !need_dx ? nullptr : scratch(1, cap);
      std::span<const float> dy_all = out.grad();
      for (int n = 0; n < geo.n; ++n) {
        CMapRM dy(dy_all.data() + n * out_stride, geo.cout, P);
        const float* x = input.data().data() + n * in_stride;
        if (need_db) {
          float* db = bias.grad().data();
          for (int c = 0; c < geo.cout; ++c) db[c] += ordered_sum(dy.data() + static_cast<size_t>(c) * P, P);
        }
        if (geo.is_pointwise()) {
          if (need_dw) MapRM(weight.grad().data(), geo.cout, K).noalias() += dy * CMapRM(x, K, P).transpose();
          if (need_dx) {
            MapRM(input.grad().data() + n * in_stride, K, P).noalias() += wmat.transpose() * dy;
          }
          continue;
        }
        for (int r0 = 0; r0 < geo.ho; r0 += block) {
          const int r1 = std::min(geo.ho, r0 + block);
          const int cols = (r1 - r0) * geo.wo;
          CStridedRM dy_blk(dy.data() + r0 * geo.wo, geo.cout, cols, Eigen::OuterStride<>(P));
          if (need_dw) {
            im2col(x, geo, r0, r1, col);
            MapRM(weight.grad().data(), geo.cout, K).noalias() += dy_blk * CMapRM(col, K, cols).transpose();
          }
          if (need_dx) {
            MapRM(dcol, K, cols).noalias() = wmat.transpose() * dy_blk;
            col2im_add(dcol, geo, r0, r1, input.grad().data() + n * in_stride);
          }
        }
      }
    });
  }
  return out;
}

Tensor maxpool2d(Graph& g, const Tensor& input, int kernel, int stride) {
  expect_rank(input, 4, "maxpool2d", "input");
  if (kernel < 1 || stride < 1) throw ValidationError("maxpool2d: kernel and stride must be >= 1");
  const int n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
  if (h < kernel || w < kernel || (h - kernel) % stride != 0 || (w - kernel) % stride != 0) {
    throw DimensionError("maxpool2d: extents of " + shape_to_string(input.shape()) + " not divisible by window " +
                         std::to_string(kernel) + "/" + std::to_string(stride));
  }
  const int ho = (h - kernel) / stride + 1;
  const int wo = (w - kernel) / stride + 1;
  const bool rec = g.should_record({&input});
  Tensor out = make_output({n, c, ho, wo}, rec);
  std::vector<uint32_t> argmax(rec ? out.numel() : 0);

  const float* x = input.data().data();
  float* y = out.data().data();
  size_t o = 0;
  for (int plane = 0; plane < n * c; ++plane) {
    const size_t base = static_cast<size_t>(plane) * h * w;
    for (int oy = 0; oy < ho; ++oy) {
      for (int ox = 0; ox < wo; ++ox, ++o) {
        size_t best = base + static_cast<size_t>(oy * stride) * w + ox * stride;
        for (int ky = 0; ky < kernel; ++ky) {
          for (int kx = 0; kx < kernel; ++kx) {
            const size_t idx = base + static_cast<size_t>(oy * stride + ky) * w + ox * stride + kx;
            if (x[idx] > x[best]) best = idx;
          }
        }
        y[o] = x[best];
        if (rec) argmax[o] = static_cast<uint32_t>(best);
      }
    }
  }
  if (rec) {
    g.record("maxpool2d", {input}, out, [input, out, argmax = std::move(argmax)]() mutable {
      std::span<float> dx = input.grad();
      std::span<const float> dy = out.grad();
      for (size_t i = 0; i < dy.size(); ++i) dx[argmax[i]] += dy[i];
    });
  }
  return out;
}

Tensor linear(Graph& g, const Tensor& input, const Tensor& weight, const Tensor& bias) {
  expect_rank(input, 2, "linear", "input");
  expect_rank(weight, 2, "linear", "weight");
  expect_rank(bias, 1, "linear", "bias");
  const int n = input.dim(0), din = input.dim(1), dout = weight.dim(0);
  if (weight.dim(1) != din) {
    throw DimensionError("linear: weight " + shape_to_string(weight.shape()) + " incompatible with input " +
                         shape_to_string(input.shape()));
  }
  if (bias.dim(0) != dout) throw DimensionError("linear: bias length must equal output width");
  const bool rec = g.should_record({&input, &weight, &bias});
  Tensor out = make_output({n, dout}, rec);
  MapRM y(out.data().data(), n, dout);
  y.noalias() = CMapRM(input.data().data(), n, din) * CMapRM(weight.data().data(), dout, din).transpose();
  y.rowwise() += CMapVec(bias.data().data(), dout).transpose();
  check_finite(out, "linear");

  if (rec) {
    g.record("linear", {input, weight, bias}, out, [input, weight, bias, out, n, din, dout]() mutable {
      CMapRM dy(out.grad().data(), n, dout);
      if (input.requires_grad()) {
        MapRM(input.grad().data(), n, din).noalias() += dy * CMapRM(weight.data().data(), dout, din);
      }
      if (weight.requires_grad()) {
        MapRM(weight.grad().data(), dout, din).noalias() += dy.transpose() * CMapRM(input.data().data(), n, din);
      }
      if (bias.requires_grad()) {
        float* db = bias.grad().data();
        const float* d = out.grad().data();
        for (int r = 0; r < n; ++r)
          for (int o = 0; o < dout; ++o) db[o] += d[static_cast<size_t>(r) * dout + o];
      }
    });
  }
  return out;
}

Tensor relu(Graph& g, const Tensor& x) {
  const bool rec = g.should_record({&x});
  Tensor out = make_output(x.shape(), rec);
  std::span<const float> xs = x.data();
  std::span<float> ys = out.data();
  for (size_t i = 0; i < xs.size(); ++i) ys[i] = xs[i] > 0.0f ? xs[i] : 0.0f;
  if (rec) {
    g.record("relu", {x}, out, [x, out]() mutable {
      std::span<const float> xs = x.data();
      std::span<const float> dy = out.grad();
      std::span<float> dx = x.grad();
      for (size_t i = 0; i < xs.size(); ++i) {
        if (xs[i] > 0.0f) dx[i] += dy[i];
      }
    });
  }
  return out;
}

Tensor sigmoid(Graph& g, const Tensor& x) {
  const bool rec = g.should_record({&x});
  Tensor out = make_output(x.shape(), rec);
  std::span<const float> xs = x.data();
  std::span<float> ys = out.data();
  for (size_t i = 0; i < xs.size(); ++i) {
    const float v = xs[i];
    if (v >= 0.0f) {
      ys[i] = 1.0f / (1.0f + std::exp(-v));
    } else {
      const float e = std::exp(v);
      ys[i] = e / (1.0f + e);
    }
  }
  if (rec) {
    g.record("sigmoid", {x}, out, [x, out]() mutable {
      std::span<const float> ys = out.data();
      std::span<const float> dy = out.grad();
      std::span<float> dx = x.grad();
      for (size_t i = 0; i < ys.size(); ++i) dx[i] += dy[i] * ys[i] * (1.0f - ys[i]);
    });
  }
  return out;
}

Tensor softmax(Graph& g, const Tensor& logits) {
  expect_rank(logits, 2, "softmax", "logits");
  const int n = logits.dim(0), c = logits.dim(1);
  if (c < 2) throw DimensionError("softmax: need at least 2 classes");
  const bool rec = g.should_record({&logits});
  Tensor out = make_output(logits.shape(), rec);
  std::span<const float> z = logits.data();
  std::span<float> p = out.data();
  for (int r = 0; r < n; ++r) {
    const float* zr = z.data() + static_cast<size_t>(r) * c;
    float* pr = p.data() + static_cast<size_t>(r) * c;
    const float mx = *std::max_element(zr, zr + c);
    double total = 0.0;
    for (int j = 0; j < c; ++j) total += std::exp(static_cast<double>(zr[j]) - mx);
    for (int j = 0; j < c; ++j) pr[j] = static_cast<float>(std::exp(static_cast<double>(zr[j]) - mx) / total);
  }
  if (rec) {
    g.record("softmax", {logits}, out, [logits, out, n, c]() mutable {
      std::span<const float> p = out.data();
      std::span<const float> dp = out.grad();
      std::span<float> dz = logits.grad();
      for (int r = 0; r < n; ++r) {
        const size_t off = static_cast<size_t>(r) * c;
        double dot = 0.0;
        for (int j = 0; j < c; ++j) dot += static_cast<double>(dp[off + j]) * p[off + j];
        for (int j = 0; j < c; ++j) dz[off + j] += p[off + j] * static_cast<float>(dp[off + j] - dot);
      }
    });
  }
  return out;
}

Tensor binary_cross_entropy(Graph& g, const Tensor& pred, const Tensor& target) {
  if (pred.shape() != target.shape()) {
    throw DimensionError("binary_cross_entropy: pred " + shape_to_string(pred.shape()) + " vs target " +
                         shape_to_string(target.shape()));
  }
  std::span<const float> p = pred.data();
  std::span<const float> y = target.data();
  double total = 0.0;
  for (size_t i = 0; i < p.size(); ++i) {
    if (y[i] != 0.0f && y[i] != 1.0f) throw ValidationError("binary_cross_entropy: targets must be 0 or 1");
    const double pc = std::clamp(static_cast<double>(p[i]), double{kProbClamp}, 1.0 - double{kProbClamp});
    total -= y[i] == 1.0f ? std::log(pc) : std::log(1.0 - pc);
  }
  const double count = static_cast<double>(p.size());
  const bool rec = g.should_record({&pred});
  Tensor out = Tensor::scalar(static_cast<float>(total / count), rec);
  check_finite(out, "binary_cross_entropy");
  if (rec) {
    g.record("binary_cross_entropy", {pred, target}, out, [pred, target, out, count]() mutable {
      const double upstream = out.grad()[0];
      std::span<const float> p = pred.data();
      std::span<const float> y = target.data();
      std::span<float> dp = pred.grad();
      // Gradient evaluated at the clamped probability so saturated outputs
      // still receive a finite push back toward the target.
      for (size_t i = 0; i < p.size(); ++i) {
        const double pc = std::clamp(static_cast<double>(p[i]), double{kProbClamp}, 1.0 - double{kProbClamp});
        dp[i] += static_cast<float>(upstream * (pc - y[i]) / (pc * (1.0 - pc)) / count);
      }
    });
  }
  return out;
}

Tensor cross_entropy(Graph& g, const Tensor& probs, std::span<const int> labels) {
  expect_rank(probs, 2, "cross_entropy", "probs");
  const int n = probs.dim(0), c = probs.dim(1);
  if (static_cast<int>(labels.size()) != n) throw DimensionError("cross_entropy: one label per row required");
  std::span<const float> p = probs.data();
  double total = 0.0;
  for (int r = 0; r < n; ++r) {
    if (labels[r] < 0 || labels[r] >= c) {
      throw ValidationError("cross_entropy: label " + std::to_string(labels[r]) + " outside [0," + std::to_string(c) +
                            ")");
    }
    total -= std::log(std::max(static_cast<double>(p[static_cast<size_t>(r) * c + labels[r]]), double{kProbClamp}));
  }
  const bool rec = g.should_record({&probs});
  Tensor out = Tensor::scalar(static_cast<float>(total / n), rec);
  check_finite(out, "cross_entropy");
  if (rec) {
    std::vector<int> lab(labels.begin(), labels.end());
    g.record("cross_entropy", {probs}, out, [probs, out, lab = std::move(lab), n, c]() mutable {
      const double upstream = out.grad()[0];
      std::span<const float> p = probs.data();
      std::span<float> dp = probs.grad();
      for (int r = 0; r < n; ++r) {
        const size_t idx = static_cast<size_t>(r) * c + lab[r];
        dp[idx] -= static_cast<float>(upstream / (n * std::max(static_cast<double>(p[idx]), double{kProbClamp})));
      }
    });
  }
  return out;
}

Tensor concat(Graph& g, const std::vector<Tensor>& parts) {
  if (parts.empty()) throw UsageError("concat: no inputs");
  const Shape& first = parts.front().shape();
  if (first.size() < 2) throw DimensionError("concat: inputs need rank >= 2");
  const int n = first[0];
  int total_axis = 0;
  bool rec = false;
  std::vector<size_t> inner(parts.size());
  for (size_t i = 0; i < parts.size(); ++i) {
    const Shape& s = parts[i].shape();
    bool ok = s.size() == first.size() && s[0] == n;
    for (size_t a = 2; ok && a < s.size(); ++a) ok = s[a] == first[a];
    if (!ok) {
      throw DimensionError("concat: " + shape_to_string(s) + " does not match " + shape_to_string(first) +
                           " outside axis 1");
    }
    total_axis += s[1];
    inner[i] = parts[i].numel() / n;
    rec = rec || g.should_record({&parts[i]});
  }
  Shape out_shape = first;
  out_shape[1] = total_axis;
  Tensor out = make_output(out_shape, rec);
  const size_t row = out.numel() / n;
  std::span<float> y = out.data();
  for (int b = 0; b < n; ++b) {
    size_t off = static_cast<size_t>(b) * row;
    for (size_t i = 0; i < parts.size(); ++i) {
      const float* src = parts[i].data().data() + b * inner[i];
      std::copy(src, src + inner[i], y.data() + off);
      off += inner[i];
    }
  }
  if (rec) {
    g.record("concat", parts, out, [parts, out, inner, n, row]() mutable {
      std::span<const float> dy = out.grad();
      for (int b = 0; b < n; ++b) {
        size_t off = static_cast<size_t>(b) * row;
        for (size_t i = 0; i < parts.size(); ++i) {
          if (parts[i].requires_grad()) {
            float* dx = parts[i].grad().data() + b * inner[i];
            for (size_t k = 0; k < inner[i]; ++k) dx[k] += dy[off + k];
          }
          off += inner[i];
        }
      }
    });
  }
  return out;
}

Tensor flatten(Graph& g, const Tensor& x) {
  if (x.rank() < 2) throw DimensionError("flatten: need rank >= 2");
  const int n = x.dim(0);
  Tensor out = x.reshaped({n, static_cast<int>(x.numel() / n)});
  const bool rec = g.should_record({&x});
  out.set_requires_grad(rec);
  if (rec) {
    g.record("flatten", {x}, out, [x, out]() mutable { accumulate(x.grad(), out.grad()); });
  }
  return out;
}

Tensor upsample_nearest2x(Graph& g, const Tensor& x) {
  expect_rank(x, 4, "upsample_nearest2x", "input");
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const bool rec = g.should_record({&x});
  Tensor out = make_output({n, c, 2 * h, 2 * w}, rec);
  std::span<const float> xs = x.data();
  std::span<float> ys = out.data();
  for (int plane = 0; plane < n * c; ++plane) {
    const float* src = xs.data() + static_cast<size_t>(plane) * h * w;
    float* dst = ys.data() + static_cast<size_t>(plane) * 4 * h * w;
    for (int oy = 0; oy < 2 * h; ++oy) {
      for (int ox = 0; ox < 2 * w; ++ox) dst[static_cast<size_t>(oy) * 2 * w + ox] = src[(oy / 2) * w + ox / 2];
    }
  }
  if (rec) {
    g.record("upsample_nearest2x", {x}, out, [x, out, n, c, h, w]() mutable {
      std::span<const float> dy = out.grad();
      std::span<float> dx = x.grad();
      for (int plane = 0; plane < n * c; ++plane) {
        const float* src = dy.data() + static_cast<size_t>(plane) * 4 * h * w;
        float* dst = dx.data() + static_cast<size_t>(plane) * h * w;
        for (int oy = 0; oy < 2 * h; ++oy) {
          for (int ox = 0; ox < 2 * w; ++ox) dst[(oy / 2) * w + ox / 2] += src[static_cast<size_t>(oy) * 2 * w + ox];
        }
      }
    });
  }
  return out;
}

Tensor global_avg_pool(Graph& g, const Tensor& x) {
  expect_rank(x, 4, "global_avg_pool", "input");
  const int n = x.dim(0), c = x.dim(1);
  const size_t area = static_cast<size_t>(x.dim(2)) * x.dim(3);
  const bool rec = g.should_record({&x});
  Tensor out = make_output({n, c}, rec);
  std::span<const float> xs = x.data();
  std::span<float> ys = out.data();
  for (int plane = 0; plane < n * c; ++plane) {
    double s = 0.0;
    for (size_t i = 0; i < area; ++i) s += xs[plane * area + i];
    ys[plane] = static_cast<float>(s / static_cast<double>(area));
  }
  if (rec) {
    g.record("global_avg_pool", {x}, out, [x, out, n, c, area]() mutable {
      std::span<const float> dy = out.grad();
      std::span<float> dx = x.grad();
      const float scale = 1.0f / static_cast<float>(area);
      for (int plane = 0; plane < n * c; ++plane) {
        const float v = dy[plane] * scale;
        for (size_t i = 0; i < area; ++i) dx[plane * area + i] += v;
      }
    });
  }
  return out;
}

Tensor sum(Graph& g, const Tensor& x) {
  double s = 0.0;
  for (float v : x.data()) s += v;
  const bool rec = g.should_record({&x});
  Tensor out = Tensor::scalar(static_cast<float>(s), rec);
  if (rec) {
    g.record("sum", {x}, out, [x, out]() mutable {
      const float up = out.grad()[0];
      for (float& d : x.grad()) d += up;
    });
  }
  return out;
}

Tensor axpby(Graph& g, float alpha, const Tensor& a, float beta, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError("axpby: " + shape_to_string(a.shape()) + " vs " + shape_to_string(b.shape()));
  }
  const bool rec = g.should_record({&a, &b});
  Tensor out = make_output(a.shape(), rec);
  std::span<const float> as = a.data();
  std::span<const float> bs = b.data();
  std::span<float> ys = out.data();
  for (size_t i = 0; i < ys.size(); ++i) ys[i] = alpha * as[i] + beta * bs[i];
  if (rec) {
    g.record("axpby", {a, b}, out, [a, b, out, alpha, beta]() mutable {
      std::span<const float> dy = out.grad();
      if (a.requires_grad()) {
        std::span<float> da = a.grad();
        for (size_t i = 0; i < dy.size(); ++i) da[i] += alpha * dy[i];
      }
      if (b.requires_grad()) {
        std::span<float> db = b.grad();
        for (size_t i = 0; i < dy.size(); ++i) db[i] += beta * dy[i];
      }
    });
  }
  return out;
}

}  // namespace cyto::nn
