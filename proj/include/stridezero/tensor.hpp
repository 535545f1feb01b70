#pragma once

#include <algorithm>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "stridezero/common.hpp"

namespace sz {

// Dense multi-dimensional array in row-major order.  Activations and kernels
// use [N,C,H,W] or [C,H,W]; nothing in the container itself assumes a rank.
// T is float in normal operation and double for gradient checking.
template <typename T>
class TensorT {
 public:
  TensorT() = default;

  explicit TensorT(std::vector<int64_t> shape) : shape_(std::move(shape)) {
    check_shape();
    data_.assign(static_cast<size_t>(numel()), T(0));
  }

  TensorT(std::vector<int64_t> shape, std::vector<T> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    check_shape();
    if (static_cast<int64_t>(data_.size()) != numel()) {
      throw DimensionError("tensor data length " + std::to_string(data_.size()) +
                           " does not match shape product " + std::to_string(numel()));
    }
  }

  static TensorT zeros(std::vector<int64_t> shape) { return TensorT(std::move(shape)); }

  static TensorT full(std::vector<int64_t> shape, T value) {
    TensorT t(std::move(shape));
    std::fill(t.data_.begin(), t.data_.end(), value);
    return t;
  }

  int64_t rank() const { return static_cast<int64_t>(shape_.size()); }

  int64_t extent(int64_t axis) const { return shape_[static_cast<size_t>(axis)]; }

  const std::vector<int64_t>& shape() const { return shape_; }

  int64_t numel() const {
    int64_t n = 1;
    for (int64_t e : shape_) n *= e;
    return shape_.empty() ? 0 : n;
  }

  bool empty() const { return data_.empty(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::vector<T>& vec() { return data_; }
  const std::vector<T>& vec() const { return data_; }

  T& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
  const T& operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }

  // Rank-3 [C,H,W] access.
  T& at(int64_t c, int64_t y, int64_t x) {
    return data_[static_cast<size_t>((c * shape_[1] + y) * shape_[2] + x)];
  }
  const T& at(int64_t c, int64_t y, int64_t x) const {
    return data_[static_cast<size_t>((c * shape_[1] + y) * shape_[2] + x)];
  }

  // Rank-4 [N,C,H,W] access.
  T& at(int64_t n, int64_t c, int64_t y, int64_t x) {
    return data_[static_cast<size_t>(((n * shape_[1] + c) * shape_[2] + y) * shape_[3] + x)];
  }
  const T& at(int64_t n, int64_t c, int64_t y, int64_t x) const {
    return data_[static_cast<size_t>(((n * shape_[1] + c) * shape_[2] + y) * shape_[3] + x)];
  }

  bool same_shape(const TensorT& other) const { return shape_ == other.shape_; }

  std::string shape_str() const {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < shape_.size(); ++i) os << (i ? "," : "") << shape_[i];
    os << "]";
    return os.str();
  }

  template <typename U>
  TensorT<U> cast() const {
    std::vector<U> out(data_.size());
    for (size_t i = 0; i < data_.size(); ++i) out[i] = static_cast<U>(data_[i]);
    return TensorT<U>(shape_, std::move(out));
  }

 private:
  void check_shape() const {
    if (shape_.empty()) throw DimensionError("tensor shape must have at least one extent");
    for (int64_t e : shape_) {
      if (e < 1) throw DimensionError("tensor extents must be >= 1, got " + std::to_string(e));
    }
  }

  std::vector<int64_t> shape_;
  std::vector<T> data_;
};

using Tensor = TensorT<float>;
using TensorD = TensorT<double>;

// Geometry of one convolution or pooling stage.  Symmetric padding; dilation 1
// means a dense kernel.  The effective extent along an axis is
// dilation*(kernel-1)+1.
struct ConvParams {
  int64_t kernel_h = 1;
  int64_t kernel_w = 1;
  int64_t stride = 1;
  int64_t pad = 0;
  int64_t dilation = 1;

  void validate() const {
    if (stride < 1) throw ParameterError("stride must be >= 1, got " + std::to_string(stride));
    if (dilation < 1) throw ParameterError("dilation must be >= 1, got " + std::to_string(dilation));
    if (pad < 0) throw ParameterError("pad must be >= 0, got " + std::to_string(pad));
    if (kernel_h < 1 || kernel_w < 1) throw ParameterError("kernel extents must be >= 1");
  }

  int64_t effective_h() const { return dilation * (kernel_h - 1) + 1; }
  int64_t effective_w() const { return dilation * (kernel_w - 1) + 1; }
};

// Output extent of a strided, padded, dilated window sweep.
inline int64_t conv_out_extent(int64_t in, int64_t kernel, int64_t stride, int64_t pad,
                               int64_t dilation) {
  return (in + 2 * pad - dilation * (kernel - 1) - 1) / stride + 1;
}

inline int64_t pool_out_extent(int64_t in, int64_t window, int64_t stride, int64_t pad) {
  return (in + 2 * pad - window) / stride + 1;
}

template <typename T>
double max_abs_diff(const TensorT<T>& a, const TensorT<T>& b) {
  if (!a.same_shape(b)) {
    throw DimensionError("max_abs_diff: shapes " + a.shape_str() + " vs " + b.shape_str());
  }
  double m = 0.0;
  for (int64_t i = 0; i < a.numel(); ++i) {
    m = std::max(m, std::abs(static_cast<double>(a[i]) - static_cast<double>(b[i])));
  }
  return m;
}

}  // namespace sz
