#pragma once

#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <vector>

namespace popcode::nn {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}
std::string shape_string(const Shape& s);

/// Dense row-major array. Batches are the leading dimension.
template <typename T>
struct Tensor {
  Shape shape;
  std::vector<T> data;

  Tensor() = default;
  explicit Tensor(Shape s, T fill = T(0)) : shape(std::move(s)), data(shape_size(shape), fill) {}

  std::size_t size() const { return data.size(); }
  std::size_t dim(std::size_t i) const { return shape.at(i); }
  // Product of all dimensions after the first.
  std::size_t row_size() const { return shape.empty() ? 0 : data.size() / shape[0]; }
  void reshape_to(const Shape& s) {
    shape = s;
    data.resize(shape_size(s));
  }
  void fill(T v) { std::fill(data.begin(), data.end(), v); }
  std::span<T> span() { return data; }
  std::span<const T> span() const { return data; }
  T* row(std::size_t n) { return data.data() + n * row_size(); }
  const T* row(std::size_t n) const { return data.data() + n * row_size(); }
};

template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;
};

}  // namespace popcode::nn
