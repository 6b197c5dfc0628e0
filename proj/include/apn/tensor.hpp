#ifndef APN_TENSOR_HPP
#define APN_TENSOR_HPP

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <string>
#include <vector>

#include "apn/error.hpp"

namespace apn {

// Dense row-major N-d array. This is the value carrier; gradient tracking
// lives in Graph (graph.hpp), which stores one value/grad pair per node.
template <typename T>
struct Tensor {
  std::vector<size_t> shape;
  std::vector<T> data;

  Tensor() = default;
  explicit Tensor(std::vector<size_t> s, T fill = T(0)) : shape(std::move(s)) {
    data.assign(count(shape), fill);
  }
  Tensor(std::vector<size_t> s, std::vector<T> d) : shape(std::move(s)), data(std::move(d)) {
    check(data.size() == count(shape), ErrKind::data, "shape-mismatch",
          "tensor data size does not match shape");
  }

  static size_t count(const std::vector<size_t>& s) {
    size_t n = 1;
    for (size_t d : s) n *= d;
    return n;
  }

  size_t numel() const { return data.size(); }
  bool empty() const { return data.empty(); }
  size_t dim(size_t i) const { return shape[i]; }
  size_t ndim() const { return shape.size(); }

  T& operator[](size_t i) { return data[i]; }
  const T& operator[](size_t i) const { return data[i]; }

  T& at(size_t i, size_t j) { return data[i * shape[1] + j]; }
  const T& at(size_t i, size_t j) const { return data[i * shape[1] + j]; }
  T& at(size_t i, size_t j, size_t k) { return data[(i * shape[1] + j) * shape[2] + k]; }
  const T& at(size_t i, size_t j, size_t k) const {
    return data[(i * shape[1] + j) * shape[2] + k];
  }
  T& at(size_t i, size_t j, size_t k, size_t l) {
    return data[((i * shape[1] + j) * shape[2] + k) * shape[3] + l];
  }
  const T& at(size_t i, size_t j, size_t k, size_t l) const {
    return data[((i * shape[1] + j) * shape[2] + k) * shape[3] + l];
  }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  bool operator==(const Tensor& o) const { return shape == o.shape && data == o.data; }

  void fill(T v) { data.assign(data.size(), v); }
};

template <typename To, typename From>
Tensor<To> cast(const Tensor<From>& t) {
  Tensor<To> out(t.shape);
  for (size_t i = 0; i < t.data.size(); ++i) out.data[i] = static_cast<To>(t.data[i]);
  return out;
}

// FNV-1a over raw bytes; used for golden digests and determinism checks.
uint64_t fnv1a(const void* p, size_t n, uint64_t h = 0xcbf29ce484222325ull);

template <typename T>
uint64_t digest(const Tensor<T>& t) {
  uint64_t h = fnv1a(t.shape.data(), t.shape.size() * sizeof(size_t));
  return fnv1a(t.data.data(), t.data.size() * sizeof(T), h);
}

std::string hex64(uint64_t v);

}  // namespace apn

#endif
