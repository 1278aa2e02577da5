#pragma once

// Layers with explicit forward and backward passes. A layer keeps whatever
// it needs from the last forward call (pool indices, normalized inputs,
// im2col columns), so backward must follow the forward it differentiates.

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "popcode/kernels.hpp"
#include "popcode/rng.hpp"
#include "popcode/tensor.hpp"

namespace popcode::nn {

enum class LayerKind : std::uint8_t { Conv2d, BatchNorm2d, MaxPool2d, Linear, ReLU, LeakyReLU, GELU };

std::string to_string(LayerKind k);
LayerKind layer_kind_from_string(const std::string& s);

struct LayerSpec {
  LayerKind kind = LayerKind::ReLU;
  std::size_t out = 0;  // conv output channels or linear output features
  std::size_t kernel = 0;
  std::size_t stride = 1;
  std::size_t pad = 0;

  static LayerSpec conv2d(std::size_t out, std::size_t kernel, std::size_t stride = 1, std::size_t pad = 0) {
    return {LayerKind::Conv2d, out, kernel, stride, pad};
  }
  static LayerSpec batchnorm2d() { return {LayerKind::BatchNorm2d}; }
  static LayerSpec maxpool2d() { return {LayerKind::MaxPool2d}; }
  static LayerSpec linear(std::size_t out) { return {LayerKind::Linear, out}; }
  static LayerSpec relu() { return {LayerKind::ReLU}; }
  static LayerSpec leaky_relu() { return {LayerKind::LeakyReLU}; }
  static LayerSpec gelu() { return {LayerKind::GELU}; }

  bool operator==(const LayerSpec&) const = default;
};

inline constexpr double kLeakySlope = 0.01;
inline constexpr double kBatchNormMomentum = 0.1;
inline constexpr double kBatchNormEps = 1e-5;

template <typename T>
class Layer {
 public:
  virtual ~Layer() = default;
  virtual LayerSpec spec() const = 0;
  // Throws ShapeMismatch when the input shape (with batch) is unsupported.
  virtual Shape output_shape(const Shape& in) const = 0;
  virtual void forward(const Tensor<T>& in, Tensor<T>& out, bool training) = 0;
  // Accumulates parameter gradients. grad_in may be null for the first layer.
  virtual void backward(const Tensor<T>& in, const Tensor<T>& out, const Tensor<T>& grad_out,
                        Tensor<T>* grad_in) = 0;
  virtual std::vector<Parameter<T>*> parameters() { return {}; }
  // Non-trainable state that belongs in a checkpoint.
  virtual std::vector<Tensor<T>*> buffers() { return {}; }
  virtual void initialize(Rng&) {}
};

// Builds a layer for the given per-sample input shape (C, H, W) or (F).
template <typename T>
std::unique_ptr<Layer<T>> make_layer(const LayerSpec& spec, const Shape& sample_shape);

template <typename T>
class Conv2d final : public Layer<T> {
 public:
  Conv2d(std::size_t in_channels, const LayerSpec& spec);
  LayerSpec spec() const override { return spec_; }
  Shape output_shape(const Shape& in) const override;
  void forward(const Tensor<T>& in, Tensor<T>& out, bool training) override;
  void backward(const Tensor<T>& in, const Tensor<T>& out, const Tensor<T>& grad_out, Tensor<T>* grad_in) override;
  std::vector<Parameter<T>*> parameters() override { return {&weight_, &bias_}; }
  void initialize(Rng& rng) override;

  Parameter<T>& weight() { return weight_; }
  Parameter<T>& bias() { return bias_; }

 private:
  kernels::ConvShape conv_shape(const Shape& in) const;
  std::size_t in_channels_;
  LayerSpec spec_;
  Parameter<T> weight_, bias_;
  kernels::ConvWorkspace<T> ws_;
};

template <typename T>
class BatchNorm2d final : public Layer<T> {
 public:
  explicit BatchNorm2d(std::size_t channels);
  LayerSpec spec() const override { return LayerSpec::batchnorm2d(); }
  Shape output_shape(const Shape& in) const override;
  void forward(const Tensor<T>& in, Tensor<T>& out, bool training) override;
  void backward(const Tensor<T>& in, const Tensor<T>& out, const Tensor<T>& grad_out, Tensor<T>* grad_in) override;
  std::vector<Parameter<T>*> parameters() override { return {&gamma_, &beta_}; }
  std::vector<Tensor<T>*> buffers() override { return {&running_mean_, &running_var_}; }
  void initialize(Rng&) override;

  Parameter<T>& gamma() { return gamma_; }
  Parameter<T>& beta() { return beta_; }
  Tensor<T>& running_mean() { return running_mean_; }
  Tensor<T>& running_var() { return running_var_; }

 private:
  std::size_t channels_;
  Parameter<T> gamma_, beta_;
  Tensor<T> running_mean_, running_var_;
  // from the last forward
  bool last_training_ = false;
  std::vector<T> inv_std_;
  Tensor<T> xhat_;
};

// 2 x 2 window, stride 2; odd trailing rows/columns are dropped.
template <typename T>
class MaxPool2d final : public Layer<T> {
 public:
  LayerSpec spec() const override { return LayerSpec::maxpool2d(); }
  Shape output_shape(const Shape& in) const override;
  void forward(const Tensor<T>& in, Tensor<T>& out, bool training) override;
  void backward(const Tensor<T>& in, const Tensor<T>& out, const Tensor<T>& grad_out, Tensor<T>* grad_in) override;

 private:
  std::vector<std::uint32_t> argmax_;
};

// Flattens everything after the batch dimension.
template <typename T>
class Linear final : public Layer<T> {
 public:
  Linear(std::size_t in_features, std::size_t out_features);
  LayerSpec spec() const override { return LayerSpec::linear(out_); }
  Shape output_shape(const Shape& in) const override;
  void forward(const Tensor<T>& in, Tensor<T>& out, bool training) override;
  void backward(const Tensor<T>& in, const Tensor<T>& out, const Tensor<T>& grad_out, Tensor<T>* grad_in) override;
  std::vector<Parameter<T>*> parameters() override { return {&weight_, &bias_}; }
  void initialize(Rng& rng) override;

  Parameter<T>& weight() { return weight_; }
  Parameter<T>& bias() { return bias_; }

 private:
  std::size_t in_, out_;
  Parameter<T> weight_, bias_;
};

template <typename T>
class Activation final : public Layer<T> {
 public:
  explicit Activation(LayerKind kind);
  LayerSpec spec() const override { return {kind_}; }
  Shape output_shape(const Shape& in) const override { return in; }
  void forward(const Tensor<T>& in, Tensor<T>& out, bool training) override;
  void backward(const Tensor<T>& in, const Tensor<T>& out, const Tensor<T>& grad_out, Tensor<T>* grad_in) override;

 private:
  LayerKind kind_;
};

// tanh approximation: 0.5 x (1 + tanh(sqrt(2/pi) (x + 0.044715 x^3)))
template <typename T>
T gelu(T x);
template <typename T>
T gelu_derivative(T x);

}  // namespace popcode::nn
