#pragma once

// Data-parallel inner loops. Every kernel exists twice: `serial` is the
// straightforward reference kept for testing, `parallel` is the fast path
// (OpenMP over independent work items, Eigen GEMM for convolutions and
// dense layers). Both produce results independent of thread scheduling:
// reductions are written per item and then combined in index order.

#include <cstddef>
#include <span>
#include <vector>

#include "popcode/geometry.hpp"

namespace popcode::kernels {

struct ConvShape {
  std::size_t batch = 1;
  std::size_t in_channels = 1;
  std::size_t in_h = 1;
  std::size_t in_w = 1;
  std::size_t out_channels = 1;
  std::size_t kernel = 1;
  std::size_t stride = 1;
  std::size_t pad = 0;

  std::size_t out_h() const { return (in_h + 2 * pad - kernel) / stride + 1; }
  std::size_t out_w() const { return (in_w + 2 * pad - kernel) / stride + 1; }
  std::size_t patch() const { return in_channels * kernel * kernel; }
};

// Per-thread im2col buffers, kept between calls to avoid reallocation.
template <typename T>
struct ConvWorkspace {
  std::vector<T> columns;  // threads x [patch, out_h * out_w]
  std::vector<T> scratch;  // threads x [patch, out_h * out_w]
};

namespace serial {

// Tensors are NCHW; weights are [out, in, k, k].
template <typename T>
void conv2d_forward(const ConvShape& s, std::span<const T> in, std::span<const T> weight,
                    std::span<const T> bias, std::span<T> out);
// Accumulates into grad_weight/grad_bias; overwrites grad_in unless empty.
template <typename T>
void conv2d_backward(const ConvShape& s, std::span<const T> in, std::span<const T> weight,
                     std::span<const T> grad_out, std::span<T> grad_in, std::span<T> grad_weight,
                     std::span<T> grad_bias);

// in [batch, in_f], weight [out_f, in_f], out [batch, out_f].
template <typename T>
void linear_forward(std::size_t batch, std::size_t in_f, std::size_t out_f, std::span<const T> in,
                    std::span<const T> weight, std::span<const T> bias, std::span<T> out);
template <typename T>
void linear_backward(std::size_t batch, std::size_t in_f, std::size_t out_f, std::span<const T> in,
                     std::span<const T> weight, std::span<const T> grad_out, std::span<T> grad_in,
                     std::span<T> grad_weight, std::span<T> grad_bias);

// Lowest index of the maximum. Requires a non-empty input.
std::size_t argmax(std::span<const double> values);
// out[a * m + b] += exp(-(axis_d2[a] + angle_d2[b]) * inv_two_sigma2)
void accumulate_gaussian_grid(std::span<const double> axis_d2, std::span<const double> angle_d2,
                              double inv_two_sigma2, std::span<double> out);
// avg over b in `targets` of min over a in `candidates` of |a - b|.
double mean_nearest_distance(std::span<const Vec3> candidates, std::span<const Vec3> targets);
double max_pairwise_distance(std::span<const Vec3> points);

}  // namespace serial

namespace parallel {

template <typename T>
void conv2d_forward(const ConvShape& s, std::span<const T> in, std::span<const T> weight,
                    std::span<const T> bias, std::span<T> out, ConvWorkspace<T>& ws);
// One GEMM per sample on cache-sized im2col columns. Weight gradients are
// accumulated in sample order.
template <typename T>
void conv2d_backward(const ConvShape& s, std::span<const T> in, std::span<const T> weight,
                     std::span<const T> grad_out, std::span<T> grad_in, std::span<T> grad_weight,
                     std::span<T> grad_bias, ConvWorkspace<T>& ws);

template <typename T>
void linear_forward(std::size_t batch, std::size_t in_f, std::size_t out_f, std::span<const T> in,
                    std::span<const T> weight, std::span<const T> bias, std::span<T> out);
template <typename T>
void linear_backward(std::size_t batch, std::size_t in_f, std::size_t out_f, std::span<const T> in,
                     std::span<const T> weight, std::span<const T> grad_out, std::span<T> grad_in,
                     std::span<T> grad_weight, std::span<T> grad_bias);

std::size_t argmax(std::span<const double> values);
void accumulate_gaussian_grid(std::span<const double> axis_d2, std::span<const double> angle_d2,
                              double inv_two_sigma2, std::span<double> out);
double mean_nearest_distance(std::span<const Vec3> candidates, std::span<const Vec3> targets);
double max_pairwise_distance(std::span<const Vec3> points);

}  // namespace parallel

// Sets the OpenMP/Eigen thread count for the parallel kernels.
void set_num_threads(int n);
int num_threads();

}  // namespace popcode::kernels
