#pragma once

#include <cstddef>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace cyto::nn {

using Shape = std::vector<int>;

size_t shape_numel(const Shape& shape);
std::string shape_to_string(const Shape& shape);

/// Dense float32 array, row-major, NCHW for images.
///
/// A Tensor is a handle: copies share storage (and the gradient slot), which
/// is what lets the autodiff tape refer back to the tensors an op consumed.
/// Use clone() for an independent deep copy.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, float fill = 0.0f, bool requires_grad = false);
  Tensor(Shape shape, std::vector<float> values, bool requires_grad = false);

  static Tensor scalar(float value, bool requires_grad = false);

  bool defined() const noexcept { return static_cast<bool>(impl_); }
  const Shape& shape() const;
  int dim(size_t axis) const;
  size_t rank() const { return shape().size(); }
  size_t numel() const;

  // Handle semantics: constness of the handle does not make the buffer const.
  std::span<float> data() const;
  float item() const;
  float& at(size_t flat) const { return data()[flat]; }

  bool requires_grad() const;
  void set_requires_grad(bool on);

  /// Gradient buffer, allocated (zeroed) on first access.
  std::span<float> grad() const;
  bool has_grad() const;
  void zero_grad();
  void clear_grad();

  Tensor clone() const;
  /// Shares the data buffer under a new shape; the gradient slot is fresh.
  Tensor reshaped(Shape shape) const;

  bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }

 private:
  struct Impl;
  std::shared_ptr<Impl> impl_;
};

/// Throws NumericError naming `what` if any element is NaN or Inf.
void check_finite(const Tensor& t, const char* what);

}  // namespace cyto::nn
