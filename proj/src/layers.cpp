#include "popcode/layers.hpp"

#include <cmath>
#include <sstream>

#include "popcode/error.hpp"

namespace popcode::nn {

std::string shape_string(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ']';
  return os.str();
}

std::string to_string(LayerKind k) {
  switch (k) {
    case LayerKind::Conv2d: return "conv2d";
    case LayerKind::BatchNorm2d: return "batchnorm2d";
    case LayerKind::MaxPool2d: return "maxpool2d";
    case LayerKind::Linear: return "linear";
    case LayerKind::ReLU: return "relu";
    case LayerKind::LeakyReLU: return "leaky_relu";
    case LayerKind::GELU: return "gelu";
  }
  return "?";
}

LayerKind layer_kind_from_string(const std::string& s) {
  for (auto k : {LayerKind::Conv2d, LayerKind::BatchNorm2d, LayerKind::MaxPool2d, LayerKind::Linear,
                 LayerKind::ReLU, LayerKind::LeakyReLU, LayerKind::GELU}) {
    if (to_string(k) == s) return k;
  }
  throw InvalidArgument("unknown layer kind '" + s + "'");
}

namespace {

void require_rank(const Shape& in, std::size_t rank, const char* who) {
  if (in.size() != rank) {
    throw ShapeMismatch(std::string(who) + ": expected rank " + std::to_string(rank) + " input, got " +
                        shape_string(in));
  }
}

// Weights U(-b, b) with b = 1 / sqrt(fan_in); biases start at zero.
template <typename T>
void fan_in_uniform(Parameter<T>& w, std::size_t fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  for (T& v : w.value.data) v = static_cast<T>(rng.uniform(-bound, bound));
}

template <typename T>
Parameter<T> make_param(std::string name, Shape shape) {
  Parameter<T> p;
  p.name = std::move(name);
  p.value = Tensor<T>(shape);
  p.grad = Tensor<T>(shape);
  return p;
}

}  // namespace

// --- Conv2d ----------------------------------------------------------------

template <typename T>
Conv2d<T>::Conv2d(std::size_t in_channels, const LayerSpec& spec)
    : in_channels_(in_channels),
      spec_(spec),
      weight_(make_param<T>("weight", {spec.out, in_channels, spec.kernel, spec.kernel})),
      bias_(make_param<T>("bias", {spec.out})) {
  if (spec.out == 0 || spec.kernel == 0 || spec.stride == 0) throw InvalidArgument("conv2d: zero size");
}

template <typename T>
kernels::ConvShape Conv2d<T>::conv_shape(const Shape& in) const {
  require_rank(in, 4, "conv2d");
  if (in[1] != in_channels_) {
    throw ShapeMismatch("conv2d: expected " + std::to_string(in_channels_) + " channels, got " + shape_string(in));
  }
  if (in[2] + 2 * spec_.pad < spec_.kernel || in[3] + 2 * spec_.pad < spec_.kernel) {
    throw ShapeMismatch("conv2d: input " + shape_string(in) + " smaller than kernel");
  }
  return {in[0], in[1], in[2], in[3], spec_.out, spec_.kernel, spec_.stride, spec_.pad};
}

template <typename T>
Shape Conv2d<T>::output_shape(const Shape& in) const {
  const auto s = conv_shape(in);
  return {s.batch, s.out_channels, s.out_h(), s.out_w()};
}

template <typename T>
void Conv2d<T>::forward(const Tensor<T>& in, Tensor<T>& out, bool) {
  const auto s = conv_shape(in.shape);
  out.reshape_to(output_shape(in.shape));
  kernels::parallel::conv2d_forward<T>(s, in.data, weight_.value.data, bias_.value.data, out.data, ws_);
}

template <typename T>
void Conv2d<T>::backward(const Tensor<T>& in, const Tensor<T>&, const Tensor<T>& grad_out, Tensor<T>* grad_in) {
  const auto s = conv_shape(in.shape);
  std::span<T> gi;
  if (grad_in) {
    grad_in->reshape_to(in.shape);
    gi = grad_in->data;
  }
  kernels::parallel::conv2d_backward<T>(s, in.data, weight_.value.data, grad_out.data, gi, weight_.grad.data, bias_.grad.data,
                                        ws_);
}

template <typename T>
void Conv2d<T>::initialize(Rng& rng) {
  fan_in_uniform(weight_, in_channels_ * spec_.kernel * spec_.kernel, rng);
  bias_.value.fill(T(0));
}

// --- BatchNorm2d -----------------------------------------------------------

template <typename T>
BatchNorm2d<T>::BatchNorm2d(std::size_t channels)
    : channels_(channels),
      gamma_(make_param<T>("gamma", {channels})),
      beta_(make_param<T>("beta", {channels})),
      running_mean_(Shape{channels}),
      running_var_(Shape{channels}, T(1)) {
  gamma_.value.fill(T(1));
}

template <typename T>
void BatchNorm2d<T>::initialize(Rng&) {
  gamma_.value.fill(T(1));
  beta_.value.fill(T(0));
  running_mean_.fill(T(0));
  running_var_.fill(T(1));
}

template <typename T>
Shape BatchNorm2d<T>::output_shape(const Shape& in) const {
  require_rank(in, 4, "batchnorm2d");
  if (in[1] != channels_) throw ShapeMismatch("batchnorm2d: channel count mismatch, got " + shape_string(in));
  return in;
}

template <typename T>
void BatchNorm2d<T>::forward(const Tensor<T>& in, Tensor<T>& out, bool training) {
  output_shape(in.shape);
  const std::size_t n = in.shape[0], c = channels_, plane = in.shape[2] * in.shape[3];
  const std::size_t count = n * plane;
  out.reshape_to(in.shape);
  xhat_.reshape_to(in.shape);
  inv_std_.assign(c, T(0));
  last_training_ = training;
  if (training && count < 2) throw ShapeMismatch("batchnorm2d: training needs more than one value per channel");

#pragma omp parallel for schedule(static)
  for (long long ch = 0; ch < static_cast<long long>(c); ++ch) {
    double mean, var;
    if (training) {
      double sum = 0.0;
      for (std::size_t b = 0; b < n; ++b) {
        const T* x = in.data.data() + (b * c + ch) * plane;
        for (std::size_t p = 0; p < plane; ++p) sum += x[p];
      }
      mean = sum / count;
      double sq = 0.0;
      for (std::size_t b = 0; b < n; ++b) {
        const T* x = in.data.data() + (b * c + ch) * plane;
        for (std::size_t p = 0; p < plane; ++p) sq += (x[p] - mean) * (x[p] - mean);
      }
      var = sq / count;
      const double m = kBatchNormMomentum;
      running_mean_.data[ch] = static_cast<T>((1 - m) * running_mean_.data[ch] + m * mean);
      running_var_.data[ch] = static_cast<T>((1 - m) * running_var_.data[ch] + m * sq / (count - 1));
    } else {
      mean = running_mean_.data[ch];
      var = running_var_.data[ch];
    }
    const T inv = static_cast<T>(1.0 / std::sqrt(var + kBatchNormEps));
    inv_std_[ch] = inv;
    const T g = gamma_.value.data[ch], be = beta_.value.data[ch], mu = static_cast<T>(mean);
    for (std::size_t b = 0; b < n; ++b) {
      const std::size_t off = (b * c + ch) * plane;
      for (std::size_t p = 0; p < plane; ++p) {
        const T xh = (in.data[off + p] - mu) * inv;
        xhat_.data[off + p] = xh;
        out.data[off + p] = g * xh + be;
      }
    }
  }
}

template <typename T>
void BatchNorm2d<T>::backward(const Tensor<T>& in, const Tensor<T>&, const Tensor<T>& grad_out, Tensor<T>* grad_in) {
  const std::size_t n = in.shape[0], c = channels_, plane = in.shape[2] * in.shape[3];
  const double count = static_cast<double>(n * plane);
  if (grad_in) grad_in->reshape_to(in.shape);
#pragma omp parallel for schedule(static)
  for (long long ch = 0; ch < static_cast<long long>(c); ++ch) {
    double sum_dy = 0.0, sum_dy_xh = 0.0;
    for (std::size_t b = 0; b < n; ++b) {
      const std::size_t off = (b * c + ch) * plane;
      for (std::size_t p = 0; p < plane; ++p) {
        sum_dy += grad_out.data[off + p];
        sum_dy_xh += grad_out.data[off + p] * xhat_.data[off + p];
      }
    }
    gamma_.grad.data[ch] += static_cast<T>(sum_dy_xh);
    beta_.grad.data[ch] += static_cast<T>(sum_dy);
    if (!grad_in) continue;
    const double g = gamma_.value.data[ch], inv = inv_std_[ch];
    for (std::size_t b = 0; b < n; ++b) {
      const std::size_t off = (b * c + ch) * plane;
      for (std::size_t p = 0; p < plane; ++p) {
        double d;
        if (last_training_) {
          d = g * inv * (grad_out.data[off + p] - sum_dy / count - xhat_.data[off + p] * sum_dy_xh / count);
        } else {
          d = g * inv * grad_out.data[off + p];
        }
        grad_in->data[off + p] = static_cast<T>(d);
      }
    }
  }
}

// --- MaxPool2d -------------------------------------------------------------

template <typename T>
Shape MaxPool2d<T>::output_shape(const Shape& in) const {
  require_rank(in, 4, "maxpool2d");
  if (in[2] < 2 || in[3] < 2) throw ShapeMismatch("maxpool2d: input " + shape_string(in) + " smaller than 2x2");
  return {in[0], in[1], in[2] / 2, in[3] / 2};
}

template <typename T>
void MaxPool2d<T>::forward(const Tensor<T>& in, Tensor<T>& out, bool) {
  const Shape os = output_shape(in.shape);
  out.reshape_to(os);
  argmax_.resize(out.size());
  const std::size_t planes = in.shape[0] * in.shape[1], ih = in.shape[2], iw = in.shape[3], oh = os[2], ow = os[3];
#pragma omp parallel for schedule(static)
  for (long long pl = 0; pl < static_cast<long long>(planes); ++pl) {
    const T* src = in.data.data() + pl * ih * iw;
    for (std::size_t y = 0; y < oh; ++y) {
      for (std::size_t x = 0; x < ow; ++x) {
        std::uint32_t best = static_cast<std::uint32_t>(2 * y * iw + 2 * x);
        for (std::uint32_t off : {std::uint32_t(1), static_cast<std::uint32_t>(iw), static_cast<std::uint32_t>(iw + 1)}) {
          const std::uint32_t cand = static_cast<std::uint32_t>(2 * y * iw + 2 * x) + off;
          if (src[cand] > src[best]) best = cand;
        }
        const std::size_t o = pl * oh * ow + y * ow + x;
        argmax_[o] = best;
        out.data[o] = src[best];
      }
    }
  }
}

template <typename T>
void MaxPool2d<T>::backward(const Tensor<T>& in, const Tensor<T>& out, const Tensor<T>& grad_out, Tensor<T>* grad_in) {
  if (!grad_in) return;
  grad_in->reshape_to(in.shape);
  grad_in->fill(T(0));
  const std::size_t planes = in.shape[0] * in.shape[1], in_plane = in.shape[2] * in.shape[3];
  const std::size_t out_plane = out.shape[2] * out.shape[3];
#pragma omp parallel for schedule(static)
  for (long long pl = 0; pl < static_cast<long long>(planes); ++pl) {
    for (std::size_t o = 0; o < out_plane; ++o) {
      const std::size_t idx = pl * out_plane + o;
      grad_in->data[pl * in_plane + argmax_[idx]] += grad_out.data[idx];
    }
  }
}

// --- Linear ----------------------------------------------------------------

template <typename T>
Linear<T>::Linear(std::size_t in_features, std::size_t out_features)
    : in_(in_features),
      out_(out_features),
      weight_(make_param<T>("weight", {out_features, in_features})),
      bias_(make_param<T>("bias", {out_features})) {
  if (in_ == 0 || out_ == 0) throw InvalidArgument("linear: zero size");
}

template <typename T>
Shape Linear<T>::output_shape(const Shape& in) const {
  if (in.size() < 2) throw ShapeMismatch("linear: input needs a batch dimension, got " + shape_string(in));
  const std::size_t features = shape_size(in) / in[0];
  if (features != in_) {
    throw ShapeMismatch("linear: expected " + std::to_string(in_) + " features, got " + shape_string(in));
  }
  return {in[0], out_};
}

template <typename T>
void Linear<T>::forward(const Tensor<T>& in, Tensor<T>& out, bool) {
  out.reshape_to(output_shape(in.shape));
  kernels::parallel::linear_forward<T>(in.shape[0], in_, out_, in.data, weight_.value.data, bias_.value.data,
                                       out.data);
}

template <typename T>
void Linear<T>::backward(const Tensor<T>& in, const Tensor<T>&, const Tensor<T>& grad_out, Tensor<T>* grad_in) {
  std::span<T> gi;
  if (grad_in) {
    grad_in->reshape_to(in.shape);
    gi = grad_in->data;
  }
  kernels::parallel::linear_backward<T>(in.shape[0], in_, out_, in.data, weight_.value.data, grad_out.data, gi,
                                        weight_.grad.data, bias_.grad.data);
}

template <typename T>
void Linear<T>::initialize(Rng& rng) {
  fan_in_uniform(weight_, in_, rng);
  bias_.value.fill(T(0));
}

// --- activations -----------------------------------------------------------

template <typename T>
T gelu(T x) {
  constexpr double k = 0.7978845608028654;  // sqrt(2 / pi)
  const double xd = x;
  return static_cast<T>(0.5 * xd * (1.0 + std::tanh(k * (xd + 0.044715 * xd * xd * xd))));
}

template <typename T>
T gelu_derivative(T x) {
  constexpr double k = 0.7978845608028654;
  const double xd = x;
  const double t = std::tanh(k * (xd + 0.044715 * xd * xd * xd));
  return static_cast<T>(0.5 * (1.0 + t) + 0.5 * xd * (1.0 - t * t) * k * (1.0 + 3.0 * 0.044715 * xd * xd));
}

template <typename T>
Activation<T>::Activation(LayerKind kind) : kind_(kind) {
  if (kind != LayerKind::ReLU && kind != LayerKind::LeakyReLU && kind != LayerKind::GELU) {
    throw InvalidArgument("activation: unsupported kind " + to_string(kind));
  }
}

template <typename T>
void Activation<T>::forward(const Tensor<T>& in, Tensor<T>& out, bool) {
  out.reshape_to(in.shape);
  const std::size_t n = in.size();
  const T* x = in.data.data();
  T* y = out.data.data();
  switch (kind_) {
    case LayerKind::ReLU:
#pragma omp parallel for simd schedule(static)
      for (std::size_t i = 0; i < n; ++i) y[i] = x[i] > T(0) ? x[i] : T(0);
      break;
    case LayerKind::LeakyReLU:
#pragma omp parallel for simd schedule(static)
      for (std::size_t i = 0; i < n; ++i) y[i] = x[i] > T(0) ? x[i] : static_cast<T>(kLeakySlope) * x[i];
      break;
    default:
#pragma omp parallel for schedule(static)
      for (std::size_t i = 0; i < n; ++i) y[i] = gelu(x[i]);
      break;
  }
}

template <typename T>
void Activation<T>::backward(const Tensor<T>& in, const Tensor<T>&, const Tensor<T>& grad_out, Tensor<T>* grad_in) {
  if (!grad_in) return;
  grad_in->reshape_to(in.shape);
  const std::size_t n = in.size();
  const T* x = in.data.data();
  const T* g = grad_out.data.data();
  T* d = grad_in->data.data();
  switch (kind_) {
    case LayerKind::ReLU:
#pragma omp parallel for simd schedule(static)
      for (std::size_t i = 0; i < n; ++i) d[i] = x[i] > T(0) ? g[i] : T(0);
      break;
    case LayerKind::LeakyReLU:
#pragma omp parallel for simd schedule(static)
      for (std::size_t i = 0; i < n; ++i) d[i] = x[i] > T(0) ? g[i] : static_cast<T>(kLeakySlope) * g[i];
      break;
    default:
#pragma omp parallel for schedule(static)
      for (std::size_t i = 0; i < n; ++i) d[i] = g[i] * gelu_derivative(x[i]);
      break;
  }
}

// --- factory ---------------------------------------------------------------

template <typename T>
std::unique_ptr<Layer<T>> make_layer(const LayerSpec& spec, const Shape& sample_shape) {
  switch (spec.kind) {
    case LayerKind::Conv2d:
      if (sample_shape.size() != 3) throw ShapeMismatch("conv2d needs a (C, H, W) input");
      return std::make_unique<Conv2d<T>>(sample_shape[0], spec);
    case LayerKind::BatchNorm2d:
      if (sample_shape.size() != 3) throw ShapeMismatch("batchnorm2d needs a (C, H, W) input");
      return std::make_unique<BatchNorm2d<T>>(sample_shape[0]);
    case LayerKind::MaxPool2d:
      return std::make_unique<MaxPool2d<T>>();
    case LayerKind::Linear:
      return std::make_unique<Linear<T>>(shape_size(sample_shape), spec.out);
    default:
      return std::make_unique<Activation<T>>(spec.kind);
  }
}

#define POPCODE_LAYERS(T)                                                                  \
  template class Conv2d<T>;                                                                \
  template class BatchNorm2d<T>;                                                           \
  template class MaxPool2d<T>;                                                             \
  template class Linear<T>;                                                                \
  template class Activation<T>;                                                            \
  template T gelu<T>(T);                                                                   \
  template T gelu_derivative<T>(T);                                                        \
  template std::unique_ptr<Layer<T>> make_layer<T>(const LayerSpec&, const Shape&);

POPCODE_LAYERS(float)
POPCODE_LAYERS(double)

}  // namespace popcode::nn
