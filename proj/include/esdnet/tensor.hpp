#pragma once

#include <algorithm>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <string>
#include <vector>

#include "esdnet/common.hpp"

namespace esdnet {

// Dense row-major tensor. Images and feature maps use the N,C,H,W layout;
// pooled features are N,C and biases are flat vectors. float is the working
// precision, double is used for gradient checking.
template <class T>
struct TensorT {
  std::vector<int> shape;
  std::vector<T> data;

  TensorT() = default;

  explicit TensorT(std::vector<int> s) : shape(std::move(s)) {
    data.assign(std::size_t(numel_of(shape)), T(0));
  }

  TensorT(std::vector<int> s, std::vector<T> d)
      : shape(std::move(s)), data(std::move(d)) {
    if (std::int64_t(data.size()) != numel_of(shape))
      throw ContractError("tensor data length does not match shape");
  }

  static TensorT zeros(std::vector<int> s) { return TensorT(std::move(s)); }

  static TensorT full(std::vector<int> s, T v) {
    TensorT t(std::move(s));
    std::fill(t.data.begin(), t.data.end(), v);
    return t;
  }

  static std::int64_t numel_of(const std::vector<int>& s) {
    std::int64_t n = 1;
    for (int e : s) {
      if (e <= 0) throw ContractError("tensor extents must be positive");
      n *= e;
    }
    return n;
  }

  std::int64_t numel() const { return std::int64_t(data.size()); }
  int rank() const { return int(shape.size()); }

  int dim(int i) const { return shape[std::size_t(i)]; }

  // N,C,H,W accessors for rank-4 tensors.
  int n() const { return shape[0]; }
  int c() const { return shape[1]; }
  int h() const { return shape[2]; }
  int w() const { return shape[3]; }

  T& at(int n_, int c_, int y, int x) {
    return data[std::size_t(((std::int64_t(n_) * shape[1] + c_) * shape[2] + y) * shape[3] + x)];
  }
  const T& at(int n_, int c_, int y, int x) const {
    return data[std::size_t(((std::int64_t(n_) * shape[1] + c_) * shape[2] + y) * shape[3] + x)];
  }

  bool same_shape(const TensorT& o) const { return shape == o.shape; }

  template <class U>
  TensorT<U> cast() const {
    TensorT<U> out;
    out.shape = shape;
    out.data.resize(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) out.data[i] = U(data[i]);
    return out;
  }
};

using Tensor = TensorT<float>;
using TensorD = TensorT<double>;

template <class T>
std::string shape_str(const TensorT<T>& t) {
  std::string s = "(";
  for (std::size_t i = 0; i < t.shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(t.shape[i]);
  }
  return s + ")";
}

inline std::string shape_str(const std::vector<int>& v) {
  std::string s = "(";
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(v[i]);
  }
  return s + ")";
}

}  // namespace esdnet
