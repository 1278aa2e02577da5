#include "popcode/kernels.hpp"

#include <omp.h>

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>

namespace popcode::kernels {

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapMat = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMapMat = Eigen::Map<const RowMat<T>>;

using Index = std::ptrdiff_t;

}  // namespace

void set_num_threads(int n) {
  n = std::max(1, n);
  omp_set_num_threads(n);
  Eigen::setNbThreads(n);
}

int num_threads() { return omp_get_max_threads(); }

// ---------------------------------------------------------------------------
// serial reference

namespace serial {

template <typename T>
void conv2d_forward(const ConvShape& s, std::span<const T> in, std::span<const T> weight,
                    std::span<const T> bias, std::span<T> out) {
  const std::size_t oh = s.out_h(), ow = s.out_w(), k = s.kernel;
  for (std::size_t n = 0; n < s.batch; ++n) {
    for (std::size_t o = 0; o < s.out_channels; ++o) {
      for (std::size_t oy = 0; oy < oh; ++oy) {
        for (std::size_t ox = 0; ox < ow; ++ox) {
          T sum = bias.empty() ? T(0) : bias[o];
          for (std::size_t c = 0; c < s.in_channels; ++c) {
            for (std::size_t ky = 0; ky < k; ++ky) {
              const Index iy = static_cast<Index>(oy * s.stride + ky) - static_cast<Index>(s.pad);
              if (iy < 0 || iy >= static_cast<Index>(s.in_h)) continue;
              for (std::size_t kx = 0; kx < k; ++kx) {
                const Index ix = static_cast<Index>(ox * s.stride + kx) - static_cast<Index>(s.pad);
                if (ix < 0 || ix >= static_cast<Index>(s.in_w)) continue;
                sum += in[((n * s.in_channels + c) * s.in_h + iy) * s.in_w + ix] *
                       weight[((o * s.in_channels + c) * k + ky) * k + kx];
              }
            }
          }
          out[((n * s.out_channels + o) * oh + oy) * ow + ox] = sum;
        }
      }
    }
  }
}

template <typename T>
void conv2d_backward(const ConvShape& s, std::span<const T> in, std::span<const T> weight,
                     std::span<const T> grad_out, std::span<T> grad_in, std::span<T> grad_weight,
                     std::span<T> grad_bias) {
  const std::size_t oh = s.out_h(), ow = s.out_w(), k = s.kernel;
  if (!grad_in.empty()) std::fill(grad_in.begin(), grad_in.end(), T(0));
  for (std::size_t n = 0; n < s.batch; ++n) {
    for (std::size_t o = 0; o < s.out_channels; ++o) {
      for (std::size_t oy = 0; oy < oh; ++oy) {
        for (std::size_t ox = 0; ox < ow; ++ox) {
          const T g = grad_out[((n * s.out_channels + o) * oh + oy) * ow + ox];
          if (!grad_bias.empty()) grad_bias[o] += g;
          for (std::size_t c = 0; c < s.in_channels; ++c) {
            for (std::size_t ky = 0; ky < k; ++ky) {
              const Index iy = static_cast<Index>(oy * s.stride + ky) - static_cast<Index>(s.pad);
              if (iy < 0 || iy >= static_cast<Index>(s.in_h)) continue;
              for (std::size_t kx = 0; kx < k; ++kx) {
                const Index ix = static_cast<Index>(ox * s.stride + kx) - static_cast<Index>(s.pad);
                if (ix < 0 || ix >= static_cast<Index>(s.in_w)) continue;
                const std::size_t ii = ((n * s.in_channels + c) * s.in_h + iy) * s.in_w + ix;
                const std::size_t wi = ((o * s.in_channels + c) * k + ky) * k + kx;
                grad_weight[wi] += g * in[ii];
                if (!grad_in.empty()) grad_in[ii] += g * weight[wi];
              }
            }
          }
        }
      }
    }
  }
}

template <typename T>
void linear_forward(std::size_t batch, std::size_t in_f, std::size_t out_f, std::span<const T> in,
                    std::span<const T> weight, std::span<const T> bias, std::span<T> out) {
  for (std::size_t n = 0; n < batch; ++n) {
    for (std::size_t o = 0; o < out_f; ++o) {
      T sum = bias.empty() ? T(0) : bias[o];
      for (std::size_t f = 0; f < in_f; ++f) sum += in[n * in_f + f] * weight[o * in_f + f];
      out[n * out_f + o] = sum;
    }
  }
}

template <typename T>
void linear_backward(std::size_t batch, std::size_t in_f, std::size_t out_f, std::span<const T> in,
                     std::span<const T> weight, std::span<const T> grad_out, std::span<T> grad_in,
                     std::span<T> grad_weight, std::span<T> grad_bias) {
  if (!grad_in.empty()) std::fill(grad_in.begin(), grad_in.end(), T(0));
  for (std::size_t n = 0; n < batch; ++n) {
    for (std::size_t o = 0; o < out_f; ++o) {
      const T g = grad_out[n * out_f + o];
      if (!grad_bias.empty()) grad_bias[o] += g;
      for (std::size_t f = 0; f < in_f; ++f) {
        grad_weight[o * in_f + f] += g * in[n * in_f + f];
        if (!grad_in.empty()) grad_in[n * in_f + f] += g * weight[o * in_f + f];
      }
    }
  }
}

std::size_t argmax(std::span<const double> values) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = i;
  }
  return best;
}

void accumulate_gaussian_grid(std::span<const double> axis_d2, std::span<const double> angle_d2,
                              double inv_two_sigma2, std::span<double> out) {
  const std::size_t m = angle_d2.size();
  for (std::size_t a = 0; a < axis_d2.size(); ++a) {
    for (std::size_t b = 0; b < m; ++b) {
      out[a * m + b] += std::exp(-(axis_d2[a] + angle_d2[b]) * inv_two_sigma2);
    }
  }
}

double mean_nearest_distance(std::span<const Vec3> candidates, std::span<const Vec3> targets) {
  double total = 0.0;
  for (const Vec3& t : targets) {
    double best = std::numeric_limits<double>::infinity();
    for (const Vec3& c : candidates) best = std::min(best, (c - t).norm());
    total += best;
  }
  return total / static_cast<double>(targets.size());
}

double max_pairwise_distance(std::span<const Vec3> points) {
  double best = 0.0;
  for (std::size_t i = 0; i < points.size(); ++i) {
    for (std::size_t j = i + 1; j < points.size(); ++j) best = std::max(best, (points[i] - points[j]).norm());
  }
  return best;
}

}  // namespace serial

// ---------------------------------------------------------------------------
// parallel

namespace parallel {

namespace {

// Columns of one sample: [patch, out_h * out_w].
template <typename T>
void im2col_sample(const ConvShape& s, const T* src, T* columns) {
  const std::size_t oh = s.out_h(), ow = s.out_w(), k = s.kernel, plane = oh * ow;
  for (std::size_t c = 0; c < s.in_channels; ++c) {
    const T* chan = src + c * s.in_h * s.in_w;
    for (std::size_t ky = 0; ky < k; ++ky) {
      for (std::size_t kx = 0; kx < k; ++kx) {
        T* dst = columns + ((c * k + ky) * k + kx) * plane;
        for (std::size_t oy = 0; oy < oh; ++oy) {
          const Index iy = static_cast<Index>(oy * s.stride + ky) - static_cast<Index>(s.pad);
          T* row = dst + oy * ow;
          if (iy < 0 || iy >= static_cast<Index>(s.in_h)) {
            std::fill(row, row + ow, T(0));
            continue;
          }
          const T* srow = chan + iy * s.in_w;
          for (std::size_t ox = 0; ox < ow; ++ox) {
            const Index ix = static_cast<Index>(ox * s.stride + kx) - static_cast<Index>(s.pad);
            row[ox] = (ix < 0 || ix >= static_cast<Index>(s.in_w)) ? T(0) : srow[ix];
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_sample(const ConvShape& s, const T* columns, T* dst) {
  const std::size_t oh = s.out_h(), ow = s.out_w(), k = s.kernel, plane = oh * ow;
  std::fill(dst, dst + s.in_channels * s.in_h * s.in_w, T(0));
  for (std::size_t c = 0; c < s.in_channels; ++c) {
    T* chan = dst + c * s.in_h * s.in_w;
    for (std::size_t ky = 0; ky < k; ++ky) {
      for (std::size_t kx = 0; kx < k; ++kx) {
        const T* src = columns + ((c * k + ky) * k + kx) * plane;
        for (std::size_t oy = 0; oy < oh; ++oy) {
          const Index iy = static_cast<Index>(oy * s.stride + ky) - static_cast<Index>(s.pad);
          if (iy < 0 || iy >= static_cast<Index>(s.in_h)) continue;
          T* drow = chan + iy * s.in_w;
          const T* srow = src + oy * ow;
          for (std::size_t ox = 0; ox < ow; ++ox) {
            const Index ix = static_cast<Index>(ox * s.stride + kx) - static_cast<Index>(s.pad);
            if (ix >= 0 && ix < static_cast<Index>(s.in_w)) drow[ix] += srow[ox];
          }
        }
      }
    }
  }
}

// A 1x1 convolution without stride or padding reads its input as columns.
bool pointwise(const ConvShape& s) { return s.kernel == 1 && s.stride == 1 && s.pad == 0; }

}  // namespace

template <typename T>
void conv2d_forward(const ConvShape& s, std::span<const T> in, std::span<const T> weight,
                    std::span<const T> bias, std::span<T> out, ConvWorkspace<T>& ws) {
  const std::size_t plane = s.out_h() * s.out_w(), patch = s.patch();
  const std::size_t in_sample = s.in_channels * s.in_h * s.in_w;
  const int threads = omp_get_max_threads();
  if (!pointwise(s)) ws.columns.resize(static_cast<std::size_t>(threads) * patch * plane);
  ConstMapMat<T> w(weight.data(), static_cast<Index>(s.out_channels), static_cast<Index>(patch));

#pragma omp parallel for schedule(static) num_threads(threads)
  for (Index n = 0; n < static_cast<Index>(s.batch); ++n) {
    const T* cols = in.data() + n * in_sample;
    if (!pointwise(s)) {
      T* buf = ws.columns.data() + static_cast<std::size_t>(omp_get_thread_num()) * patch * plane;
      im2col_sample(s, in.data() + n * in_sample, buf);
      cols = buf;
    }
    ConstMapMat<T> c(cols, static_cast<Index>(patch), static_cast<Index>(plane));
    MapMat<T> y(out.data() + n * s.out_channels * plane, static_cast<Index>(s.out_channels),
                static_cast<Index>(plane));
    y.noalias() = w * c;
    if (!bias.empty()) {
      for (std::size_t o = 0; o < s.out_channels; ++o) y.row(static_cast<Index>(o)).array() += bias[o];
    }
  }
}

template <typename T>
void conv2d_backward(const ConvShape& s, std::span<const T> in, std::span<const T> weight,
                     std::span<const T> grad_out, std::span<T> grad_in, std::span<T> grad_weight,
                     std::span<T> grad_bias, ConvWorkspace<T>& ws) {
  const std::size_t plane = s.out_h() * s.out_w(), patch = s.patch();
  const std::size_t in_sample = s.in_channels * s.in_h * s.in_w;
  const int threads = omp_get_max_threads();
  ConstMapMat<T> w(weight.data(), static_cast<Index>(s.out_channels), static_cast<Index>(patch));

  // input gradients are independent per sample
  if (!grad_in.empty()) {
    if (!pointwise(s)) ws.scratch.resize(static_cast<std::size_t>(threads) * patch * plane);
#pragma omp parallel for schedule(static) num_threads(threads)
    for (Index n = 0; n < static_cast<Index>(s.batch); ++n) {
      ConstMapMat<T> gy(grad_out.data() + n * s.out_channels * plane, static_cast<Index>(s.out_channels),
                        static_cast<Index>(plane));
      if (pointwise(s)) {
        MapMat<T> gx(grad_in.data() + n * in_sample, static_cast<Index>(patch), static_cast<Index>(plane));
        gx.noalias() = w.transpose() * gy;
      } else {
        T* buf = ws.scratch.data() + static_cast<std::size_t>(omp_get_thread_num()) * patch * plane;
        MapMat<T> gc(buf, static_cast<Index>(patch), static_cast<Index>(plane));
        gc.noalias() = w.transpose() * gy;
        col2im_sample(s, buf, grad_in.data() + n * in_sample);
      }
    }
  }

  // weight and bias gradients accumulate in sample order
  MapMat<T> gw(grad_weight.data(), static_cast<Index>(s.out_channels), static_cast<Index>(patch));
  if (!pointwise(s)) ws.columns.resize(std::max(ws.columns.size(), patch * plane));
  for (std::size_t n = 0; n < s.batch; ++n) {
    const T* cols = in.data() + n * in_sample;
    if (!pointwise(s)) {
      im2col_sample(s, in.data() + n * in_sample, ws.columns.data());
      cols = ws.columns.data();
    }
    ConstMapMat<T> c(cols, static_cast<Index>(patch), static_cast<Index>(plane));
    ConstMapMat<T> gy(grad_out.data() + n * s.out_channels * plane, static_cast<Index>(s.out_channels),
                      static_cast<Index>(plane));
    gw.noalias() += gy * c.transpose();
    if (!grad_bias.empty()) {
      // plain loops: vectorized Eigen reductions change order with alignment
      for (std::size_t o = 0; o < s.out_channels; ++o) {
        const T* row = grad_out.data() + (n * s.out_channels + o) * plane;
        T acc = T(0);
        for (std::size_t p = 0; p < plane; ++p) acc += row[p];
        grad_bias[o] += acc;
      }
    }
  }
}

template <typename T>
void linear_forward(std::size_t batch, std::size_t in_f, std::size_t out_f, std::span<const T> in,
                    std::span<const T> weight, std::span<const T> bias, std::span<T> out) {
  ConstMapMat<T> x(in.data(), static_cast<Index>(batch), static_cast<Index>(in_f));
  ConstMapMat<T> w(weight.data(), static_cast<Index>(out_f), static_cast<Index>(in_f));
  MapMat<T> y(out.data(), static_cast<Index>(batch), static_cast<Index>(out_f));
  y.noalias() = x * w.transpose();
  if (!bias.empty()) {
    Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>> b(bias.data(), static_cast<Index>(out_f));
    y.rowwise() += b;
  }
}

template <typename T>
void linear_backward(std::size_t batch, std::size_t in_f, std::size_t out_f, std::span<const T> in,
                     std::span<const T> weight, std::span<const T> grad_out, std::span<T> grad_in,
                     std::span<T> grad_weight, std::span<T> grad_bias) {
  ConstMapMat<T> x(in.data(), static_cast<Index>(batch), static_cast<Index>(in_f));
  ConstMapMat<T> w(weight.data(), static_cast<Index>(out_f), static_cast<Index>(in_f));
  ConstMapMat<T> gy(grad_out.data(), static_cast<Index>(batch), static_cast<Index>(out_f));
  MapMat<T> gw(grad_weight.data(), static_cast<Index>(out_f), static_cast<Index>(in_f));
  gw.noalias() += gy.transpose() * x;
  if (!grad_bias.empty()) {
    for (std::size_t r = 0; r < batch; ++r) {
      for (std::size_t o = 0; o < out_f; ++o) grad_bias[o] += grad_out[r * out_f + o];
    }
  }
  if (!grad_in.empty()) {
    MapMat<T> gx(grad_in.data(), static_cast<Index>(batch), static_cast<Index>(in_f));
    gx.noalias() = gy * w;
  }
}

std::size_t argmax(std::span<const double> values) {
  const Index n = static_cast<Index>(values.size());
  const int threads = omp_get_max_threads();
  std::vector<Index> best(static_cast<std::size_t>(threads), -1);
#pragma omp parallel num_threads(threads)
  {
    const int t = omp_get_thread_num();
    const int nt = omp_get_num_threads();
    const Index lo = n * t / nt, hi = n * (t + 1) / nt;
    if (lo < hi) {
      Index b = lo;
      double v = values[lo];
      for (Index i = lo + 1; i < hi; ++i) {
        if (values[i] > v) {
          v = values[i];
          b = i;
        }
      }
      best[static_cast<std::size_t>(t)] = b;
    }
  }
  // chunks are contiguous and ordered, so strict '>' keeps the lowest index
  Index result = -1;
  for (Index b : best) {
    if (b >= 0 && (result < 0 || values[b] > values[result])) result = b;
  }
  return static_cast<std::size_t>(std::max<Index>(result, 0));
}

void accumulate_gaussian_grid(std::span<const double> axis_d2, std::span<const double> angle_d2,
                              double inv_two_sigma2, std::span<double> out) {
  const std::size_t m = angle_d2.size();
#pragma omp parallel for schedule(static)
  for (Index a = 0; a < static_cast<Index>(axis_d2.size()); ++a) {
    double* row = out.data() + a * m;
    const double ad = axis_d2[a];
    for (std::size_t b = 0; b < m; ++b) row[b] += std::exp(-(ad + angle_d2[b]) * inv_two_sigma2);
  }
}

double mean_nearest_distance(std::span<const Vec3> candidates, std::span<const Vec3> targets) {
  std::vector<double> nearest(targets.size());
#pragma omp parallel for schedule(static)
  for (Index i = 0; i < static_cast<Index>(targets.size()); ++i) {
    double best = std::numeric_limits<double>::infinity();
    for (const Vec3& c : candidates) best = std::min(best, (c - targets[i]).squaredNorm());
    nearest[i] = std::sqrt(best);
  }
  double total = 0.0;
  for (double d : nearest) total += d;
  return total / static_cast<double>(targets.size());
}

double max_pairwise_distance(std::span<const Vec3> points) {
  std::vector<double> row_max(points.size(), 0.0);
#pragma omp parallel for schedule(dynamic, 16)
  for (Index i = 0; i < static_cast<Index>(points.size()); ++i) {
    double best = 0.0;
    for (std::size_t j = i + 1; j < points.size(); ++j) best = std::max(best, (points[i] - points[j]).squaredNorm());
    row_max[i] = best;
  }
  double best = 0.0;
  for (double d : row_max) best = std::max(best, d);
  return std::sqrt(best);
}

}  // namespace parallel

#define POPCODE_INSTANTIATE(T)                                                                              \
  template void serial::conv2d_forward<T>(const ConvShape&, std::span<const T>, std::span<const T>,        \
                                          std::span<const T>, std::span<T>);                              \
  template void serial::conv2d_backward<T>(const ConvShape&, std::span<const T>, std::span<const T>,       \
                                           std::span<const T>, std::span<T>, std::span<T>, std::span<T>); \
  template void serial::linear_forward<T>(std::size_t, std::size_t, std::size_t, std::span<const T>,       \
                                          std::span<const T>, std::span<const T>, std::span<T>);          \
  template void serial::linear_backward<T>(std::size_t, std::size_t, std::size_t, std::span<const T>,      \
                                           std::span<const T>, std::span<const T>, std::span<T>,          \
                                           std::span<T>, std::span<T>);                                   \
  template void parallel::conv2d_forward<T>(const ConvShape&, std::span<const T>, std::span<const T>,      \
                                            std::span<const T>, std::span<T>, ConvWorkspace<T>&);         \
  template void parallel::conv2d_backward<T>(const ConvShape&, std::span<const T>, std::span<const T>,     \
                                             std::span<const T>, std::span<T>, std::span<T>, std::span<T>,  \
                                             ConvWorkspace<T>&);                                            \
  template void parallel::linear_forward<T>(std::size_t, std::size_t, std::size_t, std::span<const T>,     \
                                            std::span<const T>, std::span<const T>, std::span<T>);        \
  template void parallel::linear_backward<T>(std::size_t, std::size_t, std::size_t, std::span<const T>,    \
                                             std::span<const T>, std::span<const T>, std::span<T>,        \
                                             std::span<T>, std::span<T>);

POPCODE_INSTANTIATE(float)
POPCODE_INSTANTIATE(double)

#undef POPCODE_INSTANTIATE

}  // namespace popcode::kernels
