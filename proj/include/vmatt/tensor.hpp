#pragma once

#include <Eigen/Core>
#include <atomic>
#include <cstring>
#include <memory>

#include "vmatt/common.hpp"

namespace vmatt {

namespace detail {
inline std::int64_t next_tensor_id() {
  static std::atomic<std::int64_t> counter{1};
  return counter.fetch_add(1, std::memory_order_relaxed);
}
}  // namespace detail

// Dense numeric array with value semantics over shared storage. Copies alias
// the same buffer; ops never mutate their inputs and return fresh tensors.
// Scalar type is float for training/inference and double for gradient checks.
template <typename T>
class Tensor {
 public:
  using Scalar = T;
  using ArrayMap = Eigen::Map<Eigen::Array<T, Eigen::Dynamic, 1>>;
  using ConstArrayMap = Eigen::Map<const Eigen::Array<T, Eigen::Dynamic, 1>>;

  Tensor() = default;

  explicit Tensor(Shape shape)
      : store_(std::make_shared<Storage>(shape.numel())), shape_(std::move(shape)) {}

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }

  static Tensor full(Shape shape, T value) {
    Tensor t(std::move(shape));
    t.array().setConstant(value);
    return t;
  }

  static Tensor ones(Shape shape) { return full(std::move(shape), T(1)); }

  static Tensor scalar(T value) { return full(Shape{1}, value); }

  static Tensor from_vector(Shape shape, const std::vector<T>& values) {
    Tensor t(shape);
    check_shape(static_cast<std::int64_t>(values.size()) == shape.numel(),
                "element count " + std::to_string(values.size()) +
                    " does not fill shape " + shape.str());
    std::memcpy(t.data(), values.data(), values.size() * sizeof(T));
    return t;
  }

  static Tensor uniform(Shape shape, Rng& rng, T lo, T hi) {
    Tensor t(std::move(shape));
    T* p = t.data();
    const std::int64_t n = t.numel();
    for (std::int64_t i = 0; i < n; ++i)
      p[i] = static_cast<T>(rng.uniform(static_cast<double>(lo), static_cast<double>(hi)));
    return t;
  }

  bool defined() const { return store_ != nullptr; }
  const Shape& shape() const { return shape_; }
  int rank() const { return shape_.rank(); }
  int dim(int i) const { return shape_[i]; }
  std::int64_t numel() const { return store_ ? static_cast<std::int64_t>(store_->data.size()) : 0; }

  std::int64_t id() const { return store_ ? store_->id : 0; }

  bool requires_grad() const { return store_ && store_->requires_grad; }
  Tensor& set_requires_grad(bool v) {
    store_->requires_grad = v;
    return *this;
  }

  const T* data() const { return store_->data.data(); }
  T* data() { return store_->data.data(); }

  T item() const {
    check_shape(numel() == 1, "item() on tensor of shape " + shape_.str());
    return store_->data[0];
  }

  // NCHW accessors for rank-4 tensors.
  T& at(int n, int c, int h, int w) {
    return store_->data[static_cast<size_t>(offset(n, c, h, w))];
  }
  T at(int n, int c, int h, int w) const {
    return store_->data[static_cast<size_t>(offset(n, c, h, w))];
  }

  T operator[](std::int64_t i) const { return store_->data[static_cast<size_t>(i)]; }
  T& operator[](std::int64_t i) { return store_->data[static_cast<size_t>(i)]; }

  ArrayMap array() { return ArrayMap(data(), numel()); }
  ConstArrayMap array() const { return ConstArrayMap(data(), numel()); }

  // Deep copy with a fresh identity.
  Tensor clone() const {
    Tensor t(shape_);
    std::memcpy(t.data(), data(), static_cast<size_t>(numel()) * sizeof(T));
    return t;
  }

  // Copying reshape. A view would share the buffer under two shapes and one
  // identity, which the tape cannot express, so this always copies.
  Tensor reshaped_copy(Shape s) const {
    check_shape(s.numel() == numel(),
                "reshape " + shape_.str() + " -> " + s.str() + " changes element count");
    Tensor t(std::move(s));
    std::memcpy(t.data(), data(), static_cast<size_t>(numel()) * sizeof(T));
    return t;
  }

  Tensor squeeze0() const {
    check_shape(rank() >= 2 && shape_[0] == 1, "squeeze0 on " + shape_.str());
    return reshaped_copy(Shape(std::vector<int>(shape_.dims().begin() + 1, shape_.dims().end())));
  }

  Tensor unsqueeze0() const {
    std::vector<int> dims{1};
    dims.insert(dims.end(), shape_.dims().begin(), shape_.dims().end());
    return reshaped_copy(Shape(dims));
  }

  template <typename U>
  Tensor<U> cast() const {
    Tensor<U> t(shape_);
    const T* src = data();
    U* dst = t.data();
    const std::int64_t n = numel();
    for (std::int64_t i = 0; i < n; ++i) dst[i] = static_cast<U>(src[i]);
    return t;
  }

 private:
  struct Storage {
    explicit Storage(std::int64_t n)
        : data(static_cast<size_t>(n), T(0)), id(detail::next_tensor_id()) {}
    std::vector<T> data;
    std::int64_t id;
    bool requires_grad = false;
  };

  std::int64_t offset(int n, int c, int h, int w) const {
    return ((static_cast<std::int64_t>(n) * shape_[1] + c) * shape_[2] + h) * shape_[3] + w;
  }

  std::shared_ptr<Storage> store_;
  Shape shape_;
};

template <typename T>
Tensor<T> zeros_like(const Tensor<T>& t) {
  return Tensor<T>::zeros(t.shape());
}

template <typename T>
Tensor<T> ones_like(const Tensor<T>& t) {
  return Tensor<T>::ones(t.shape());
}

}  // namespace vmatt
