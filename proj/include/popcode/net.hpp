#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include "json.hpp"
#include "popcode/layers.hpp"

namespace popcode::nn {

struct NetSpec {
  Shape input;  // per sample: (C, H, W)
  std::vector<LayerSpec> layers;

  // Canonical one-line description, e.g. "in[1,64,64] conv2d(32,3,1,1) relu ...".
  std::string describe() const;
  std::uint64_t hash() const;
  nlohmann::ordered_json to_json() const;
  static NetSpec from_json(const nlohmann::json& j);
  bool operator==(const NetSpec&) const = default;
};

// conv(32)-relu-pool, conv(64)-relu-pool, conv(128)-relu-pool with 3x3
// kernels (stride 1, pad 1), then linear 256, 128, 64 with ReLU and a linear
// head. `width_scale` multiplies every hidden width (1 = reference size).
NetSpec build_synth_net(std::size_t head_size, double width_scale = 1.0, std::size_t image_size = 64);

// Three conv blocks (5x5, stride 2, pad 2, batchnorm, ReLU) with 128, 256,
// 256 channels, a 1x1 conv to 128 channels with GELU, three hidden linear
// layers of 512 with Leaky ReLU, and a linear output of n * m. `scale`
// shrinks every channel and hidden width.
NetSpec build_tless_net(std::size_t n, std::size_t m, double scale = 1.0, std::size_t image_size = 128);

template <typename T>
class Net {
 public:
  // Builds the layers and initializes the parameters from `seed`.
  Net(NetSpec spec, std::uint64_t seed);

  const NetSpec& spec() const { return spec_; }
  // Input [N, C, H, W]. Throws ShapeMismatch. Training mode uses batch
  // statistics in batch norm and keeps activations for backward.
  const Tensor<T>& forward(const Tensor<T>& input, bool training);
  // Gradient of the loss w.r.t. the output of the last forward call.
  // Parameter gradients are accumulated; grad_input is filled when given.
  void backward(const Tensor<T>& grad_output, Tensor<T>* grad_input = nullptr);
  void zero_grad();

  std::vector<Parameter<T>*> parameters();
  std::vector<Tensor<T>*> buffers();
  std::size_t parameter_count() const;
  // Output shape of every layer for a batch of the given size.
  std::vector<Shape> shape_chain(std::size_t batch) const;
  std::size_t output_size() const { return output_size_; }
  Layer<T>& layer(std::size_t i) { return *layers_.at(i); }
  std::size_t layer_count() const { return layers_.size(); }

 private:
  NetSpec spec_;
  std::vector<std::unique_ptr<Layer<T>>> layers_;
  std::vector<Tensor<T>> acts_;  // acts_[0] = input, acts_[i + 1] = output of layer i
  Tensor<T> grad_a_, grad_b_;
  std::size_t output_size_ = 0;
};

// Losses return the mean over all elements (or over the batch for
// cross-entropy) and write d(loss)/d(input) into `grad` (resized).
template <typename T>
double mse_loss(const Tensor<T>& pred, const Tensor<T>& target, Tensor<T>& grad);
template <typename T>
double l1_loss(const Tensor<T>& pred, const Tensor<T>& target, Tensor<T>& grad);
// logits [N, K], one class index per row.
template <typename T>
double cross_entropy_loss(const Tensor<T>& logits, const std::vector<std::size_t>& classes, Tensor<T>& grad);

struct AdamConfig {
  double lr = 2e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <typename T>
class Adam {
 public:
  Adam(std::vector<Parameter<T>*> params, AdamConfig cfg = {});
  // Bias-corrected update from the current gradients.
  void step();
  std::int64_t steps() const { return t_; }
  const AdamConfig& config() const { return cfg_; }

 private:
  std::vector<Parameter<T>*> params_;
  AdamConfig cfg_;
  std::vector<std::vector<double>> m_, v_;
  std::int64_t t_ = 0;
};

// Versioned binary checkpoint: magic, version, spec hash, layer list,
// metadata JSON, then every parameter and buffer in declaration order as
// little-endian float32.
void save_checkpoint(std::ostream& os, Net<float>& net, const nlohmann::json& metadata);
void save_checkpoint(const std::filesystem::path& path, Net<float>& net, const nlohmann::json& metadata);
struct Checkpoint {
  std::unique_ptr<Net<float>> net;
  nlohmann::json metadata;
};
Checkpoint load_checkpoint(std::istream& is);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace popcode::nn
