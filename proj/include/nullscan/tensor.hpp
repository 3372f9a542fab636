#pragma once

#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "nullscan/errors.hpp"

namespace nullscan {

using Shape = std::vector<std::size_t>;

inline std::size_t element_count(const Shape &shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

std::string shape_string(const Shape &shape);

/// Dense row-major tensor. Only rank 1 and rank 2 are used by the models,
/// so element access helpers exist for those ranks.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(Shape shape, T fill = T{0})
      : shape_(std::move(shape)), data_(element_count(shape_), fill) {}
  Tensor(Shape shape, std::vector<T> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    if (data_.size() != element_count(shape_))
      throw ShapeError("tensor data size " + std::to_string(data_.size()) +
                       " does not match shape " + shape_string(shape_));
  }

  static Tensor matrix(std::size_t rows, std::size_t cols, T fill = T{0}) {
    return Tensor({rows, cols}, fill);
  }
  static Tensor vector(std::size_t n, T fill = T{0}) { return Tensor({n}, fill); }

  const Shape &shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::size_t rows() const noexcept { return shape_.empty() ? 0 : shape_[0]; }
  std::size_t cols() const noexcept {
    return shape_.size() < 2 ? 1 : shape_[1];
  }

  T *data() noexcept { return data_.data(); }
  const T *data() const noexcept { return data_.data(); }
  std::span<T> span() noexcept { return data_; }
  std::span<const T> span() const noexcept { return data_; }
  std::vector<T> &values() noexcept { return data_; }
  const std::vector<T> &values() const noexcept { return data_; }

  T &operator[](std::size_t i) noexcept { return data_[i]; }
  const T &operator[](std::size_t i) const noexcept { return data_[i]; }
  T &operator()(std::size_t r, std::size_t c) noexcept {
    return data_[r * shape_[1] + c];
  }
  const T &operator()(std::size_t r, std::size_t c) const noexcept {
    return data_[r * shape_[1] + c];
  }

  std::span<T> row(std::size_t r) noexcept {
    return {data_.data() + r * cols(), cols()};
  }
  std::span<const T> row(std::size_t r) const noexcept {
    return {data_.data() + r * cols(), cols()};
  }

  void fill(T value) { std::fill(data_.begin(), data_.end(), value); }
  bool all_finite() const;

  template <typename U>
  Tensor<U> cast() const {
    return Tensor<U>(shape_, std::vector<U>(data_.begin(), data_.end()));
  }

  friend bool operator==(const Tensor &, const Tensor &) = default;

 private:
  Shape shape_;
  std::vector<T> data_;
};

/// A trainable tensor with its gradient accumulator.
template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;

  Parameter() = default;
  Parameter(std::string n, Tensor<T> v)
      : name(std::move(n)), value(std::move(v)), grad(value.shape()) {}

  const Shape &shape() const noexcept { return value.shape(); }
  void zero_grad() { grad.fill(T{0}); }
};

template <typename T>
using ParameterRefs = std::vector<Parameter<T> *>;

void require_shape(const Shape &actual, const Shape &expected,
                   const std::string &what);

// ---- linear algebra kernels on rank-2 tensors ----------------------------

/// C = A·B
template <typename T>
Tensor<T> matmul(const Tensor<T> &a, const Tensor<T> &b);
/// C += Aᵀ·B  (C shaped [a.cols, b.cols])
template <typename T>
void matmul_at_b_accumulate(const Tensor<T> &a, const Tensor<T> &b,
                            Tensor<T> &c);
/// C = A·Bᵀ
template <typename T>
Tensor<T> matmul_a_bt(const Tensor<T> &a, const Tensor<T> &b);

template <typename T>
void add_inplace(Tensor<T> &dst, const Tensor<T> &src);

}  // namespace nullscan
