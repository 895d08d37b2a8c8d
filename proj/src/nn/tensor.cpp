#include "cyto/nn/tensor.hpp"

#include <Eigen/Core>
#include <cmath>
#include <new>
#include <sstream>

#include "cyto/error.hpp"

namespace cyto::nn {

namespace {

// Eigen picks vectorised code paths by pointer alignment, and the summation
// order follows. A fixed alignment keeps results independent of heap layout.
template <typename T>
struct CacheAligned {
  using value_type = T;
  static constexpr std::align_val_t kAlign{64};

  CacheAligned() = default;
  template <typename U>
  CacheAligned(const CacheAligned<U>&) {}

  T* allocate(size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlign)); }
  void deallocate(T* p, size_t) { ::operator delete(p, kAlign); }
  template <typename U>
  bool operator==(const CacheAligned<U>&) const { return true; }
};

using Buffer = std::vector<float, CacheAligned<float>>;

}  // namespace

struct Tensor::Impl {
  Shape shape;
  std::shared_ptr<Buffer> data;
  std::shared_ptr<Buffer> grad;
  bool requires_grad = false;
};

size_t shape_numel(const Shape& shape) {
  size_t n = 1;
  for (int extent : shape) {
    if (extent <= 0) throw DimensionError("tensor extents must be positive, got " + shape_to_string(shape));
    n *= static_cast<size_t>(extent);
  }
  return n;
}

std::string shape_to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

Tensor::Tensor(Shape shape, float fill, bool requires_grad) : impl_(std::make_shared<Impl>()) {
  const size_t n = shape_numel(shape);
  impl_->shape = std::move(shape);
  impl_->data = std::make_shared<Buffer>(n, fill);
  impl_->requires_grad = requires_grad;
}

Tensor::Tensor(Shape shape, std::vector<float> values, bool requires_grad) : impl_(std::make_shared<Impl>()) {
  const size_t n = shape_numel(shape);
  if (values.size() != n) {
    throw DimensionError("tensor " + shape_to_string(shape) + " needs " + std::to_string(n) + " values, got " +
                         std::to_string(values.size()));
  }
  impl_->shape = std::move(shape);
  impl_->data = std::make_shared<Buffer>(values.begin(), values.end());
  impl_->requires_grad = requires_grad;
}

Tensor Tensor::scalar(float value, bool requires_grad) { return Tensor(Shape{1}, value, requires_grad); }

const Shape& Tensor::shape() const {
  if (!impl_) throw UsageError("undefined tensor");
  return impl_->shape;
}

int Tensor::dim(size_t axis) const {
  const Shape& s = shape();
  if (axis >= s.size()) throw DimensionError("axis out of range for " + shape_to_string(s));
  return s[axis];
}

size_t Tensor::numel() const { return impl_ ? impl_->data->size() : 0; }

std::span<float> Tensor::data() const {
  if (!impl_) throw UsageError("undefined tensor");
  return *impl_->data;
}

float Tensor::item() const {
  if (numel() != 1) throw UsageError("item() on tensor of shape " + shape_to_string(shape()));
  return (*impl_->data)[0];
}

bool Tensor::requires_grad() const { return impl_ && impl_->requires_grad; }

void Tensor::set_requires_grad(bool on) {
  if (!impl_) throw UsageError("undefined tensor");
  impl_->requires_grad = on;
}

std::span<float> Tensor::grad() const {
  if (!impl_) throw UsageError("undefined tensor");
  if (!impl_->grad) impl_->grad = std::make_shared<Buffer>(impl_->data->size(), 0.0f);
  return *impl_->grad;
}

bool Tensor::has_grad() const { return impl_ && impl_->grad; }

void Tensor::zero_grad() {
  if (impl_ && impl_->grad) std::fill(impl_->grad->begin(), impl_->grad->end(), 0.0f);
}

void Tensor::clear_grad() {
  if (impl_) impl_->grad.reset();
}

Tensor Tensor::clone() const {
  if (!impl_) return {};
  Tensor out;
  out.impl_ = std::make_shared<Impl>();
  out.impl_->shape = impl_->shape;
  out.impl_->data = std::make_shared<Buffer>(*impl_->data);
  out.impl_->requires_grad = impl_->requires_grad;
  return out;
}

Tensor Tensor::reshaped(Shape new_shape) const {
  if (shape_numel(new_shape) != numel()) {
    throw DimensionError("cannot reshape " + shape_to_string(shape()) + " to " + shape_to_string(new_shape));
  }
  Tensor out;
  out.impl_ = std::make_shared<Impl>(*impl_);
  out.impl_->shape = std::move(new_shape);
  out.impl_->grad.reset();
  return out;
}

void check_finite(const Tensor& t, const char* what) {
  const std::span<const float> d = t.data();
  if (!Eigen::Map<const Eigen::ArrayXf>(d.data(), static_cast<Eigen::Index>(d.size())).allFinite()) {
    throw NumericError(std::string("non-finite value produced by ") + what);
  }
}

}  // namespace cyto::nn
