#include "nullscan/tensor.hpp"

#include <cmath>
#include <sstream>

namespace nullscan {

std::string shape_string(const Shape &shape) {
  std::ostringstream out;
  out << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << ", ";
    out << shape[i];
  }
  out << ')';
  return out.str();
}

void require_shape(const Shape &actual, const Shape &expected,
                   const std::string &what) {
  if (actual != expected)
    throw ShapeError(what + ": expected shape " + shape_string(expected) +
                     ", got " + shape_string(actual));
}

template <typename T>
bool Tensor<T>::all_finite() const {
  for (T v : data_)
    if (!std::isfinite(v)) return false;
  return true;
}

template <typename T>
Tensor<T> matmul(const Tensor<T> &a, const Tensor<T> &b) {
  if (a.rank() != 2 || b.rank() != 2 || a.cols() != b.rows())
    throw ShapeError("matmul: incompatible shapes " + shape_string(a.shape()) +
                     " x " + shape_string(b.shape()));
  const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
  Tensor<T> c = Tensor<T>::matrix(n, m);
  const T *pa = a.data();
  const T *pb = b.data();
  T *pc = c.data();
  for (std::size_t i = 0; i < n; ++i) {
    T *crow = pc + i * m;
    for (std::size_t p = 0; p < k; ++p) {
      const T av = pa[i * k + p];
      if (av == T{0}) continue;
      const T *brow = pb + p * m;
      for (std::size_t j = 0; j < m; ++j) crow[j] += av * brow[j];
    }
  }
  return c;
}

template <typename T>
void matmul_at_b_accumulate(const Tensor<T> &a, const Tensor<T> &b,
                            Tensor<T> &c) {
  if (a.rank() != 2 || b.rank() != 2 || a.rows() != b.rows() ||
      c.shape() != Shape{a.cols(), b.cols()})
    throw ShapeError("matmul_at_b: incompatible shapes " +
                     shape_string(a.shape()) + ", " + shape_string(b.shape()));
  const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
  const T *pa = a.data();
  const T *pb = b.data();
  T *pc = c.data();
  for (std::size_t r = 0; r < n; ++r) {
    const T *brow = pb + r * m;
    for (std::size_t i = 0; i < k; ++i) {
      const T av = pa[r * k + i];
      if (av == T{0}) continue;
      T *crow = pc + i * m;
      for (std::size_t j = 0; j < m; ++j) crow[j] += av * brow[j];
    }
  }
}

template <typename T>
Tensor<T> matmul_a_bt(const Tensor<T> &a, const Tensor<T> &b) {
  if (a.rank() != 2 || b.rank() != 2 || a.cols() != b.cols())
    throw ShapeError("matmul_a_bt: incompatible shapes " +
                     shape_string(a.shape()) + ", " + shape_string(b.shape()));
  const std::size_t n = a.rows(), k = a.cols(), m = b.rows();
  Tensor<T> c = Tensor<T>::matrix(n, m);
  const T *pa = a.data();
  const T *pb = b.data();
  for (std::size_t i = 0; i < n; ++i) {
    const T *arow = pa + i * k;
    for (std::size_t j = 0; j < m; ++j) {
      const T *brow = pb + j * k;
      T acc{0};
      for (std::size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
      c(i, j) = acc;
    }
  }
  return c;
}

template <typename T>
void add_inplace(Tensor<T> &dst, const Tensor<T> &src) {
  require_shape(src.shape(), dst.shape(), "add_inplace");
  T *d = dst.data();
  const T *s = src.data();
  for (std::size_t i = 0; i < dst.size(); ++i) d[i] += s[i];
}

#define NULLSCAN_INSTANTIATE(T)                                              \
  template class Tensor<T>;                                                  \
  template Tensor<T> matmul(const Tensor<T> &, const Tensor<T> &);           \
  template void matmul_at_b_accumulate(const Tensor<T> &, const Tensor<T> &, \
                                       Tensor<T> &);                         \
  template Tensor<T> matmul_a_bt(const Tensor<T> &, const Tensor<T> &);      \
  template void add_inplace(Tensor<T> &, const Tensor<T> &);

NULLSCAN_INSTANTIATE(float)
NULLSCAN_INSTANTIATE(double)
#undef NULLSCAN_INSTANTIATE

}  // namespace nullscan
