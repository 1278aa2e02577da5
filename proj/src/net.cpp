#include "popcode/net.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "popcode/binary_io.hpp"
#include "popcode/error.hpp"

namespace popcode::nn {

std::string NetSpec::describe() const {
  std::ostringstream os;
  os << "in" << shape_string(input);
  for (const auto& l : layers) {
    os << ' ' << to_string(l.kind);
    if (l.kind == LayerKind::Conv2d) os << '(' << l.out << ',' << l.kernel << ',' << l.stride << ',' << l.pad << ')';
    if (l.kind == LayerKind::Linear) os << '(' << l.out << ')';
  }
  return os.str();
}

std::uint64_t NetSpec::hash() const { return fnv1a64(describe()); }

nlohmann::ordered_json NetSpec::to_json() const {
  nlohmann::ordered_json layers_json = nlohmann::ordered_json::array();
  for (const auto& l : layers) {
    nlohmann::ordered_json j = {{"kind", to_string(l.kind)}};
    if (l.kind == LayerKind::Conv2d) {
      j["out"] = l.out;
      j["kernel"] = l.kernel;
      j["stride"] = l.stride;
      j["pad"] = l.pad;
    } else if (l.kind == LayerKind::Linear) {
      j["out"] = l.out;
    }
    layers_json.push_back(j);
  }
  return {{"input", input}, {"layers", layers_json}};
}

NetSpec NetSpec::from_json(const nlohmann::json& j) {
  NetSpec s;
  s.input = j.at("input").get<Shape>();
  for (const auto& l : j.at("layers")) {
    LayerSpec ls;
    ls.kind = layer_kind_from_string(l.at("kind").get<std::string>());
    ls.out = l.value("out", std::size_t{0});
    ls.kernel = l.value("kernel", std::size_t{0});
    ls.stride = l.value("stride", std::size_t{1});
    ls.pad = l.value("pad", std::size_t{0});
    s.layers.push_back(ls);
  }
  return s;
}

namespace {

std::size_t scaled(std::size_t width, double scale) {
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(static_cast<double>(width) * scale)));
}

}  // namespace

NetSpec build_synth_net(std::size_t head_size, double width_scale, std::size_t image_size) {
  if (head_size == 0 || !(width_scale > 0.0)) throw InvalidArgument("synth net: bad head size or width scale");
  NetSpec s;
  s.input = {1, image_size, image_size};
  for (std::size_t ch : {32, 64, 128}) {
    s.layers.push_back(LayerSpec::conv2d(scaled(ch, width_scale), 3, 1, 1));
    s.layers.push_back(LayerSpec::relu());
    s.layers.push_back(LayerSpec::maxpool2d());
  }
  for (std::size_t w : {256, 128, 64}) {
    s.layers.push_back(LayerSpec::linear(scaled(w, width_scale)));
    s.layers.push_back(LayerSpec::relu());
  }
  s.layers.push_back(LayerSpec::linear(head_size));
  return s;
}

NetSpec build_tless_net(std::size_t n, std::size_t m, double scale, std::size_t image_size) {
  if (n == 0 || m == 0 || !(scale > 0.0)) throw InvalidArgument("tless net: bad grid size or scale");
  NetSpec s;
  s.input = {1, image_size, image_size};
  for (std::size_t ch : {128, 256, 256}) {
    s.layers.push_back(LayerSpec::conv2d(scaled(ch, scale), 5, 2, 2));
    s.layers.push_back(LayerSpec::batchnorm2d());
    s.layers.push_back(LayerSpec::relu());
  }
  s.layers.push_back(LayerSpec::conv2d(scaled(128, scale), 1, 1, 0));
  s.layers.push_back(LayerSpec::gelu());
  for (int i = 0; i < 3; ++i) {
    s.layers.push_back(LayerSpec::linear(scaled(512, scale)));
    s.layers.push_back(LayerSpec::leaky_relu());
  }
  s.layers.push_back(LayerSpec::linear(n * m));
  return s;
}

// --- Net -------------------------------------------------------------------

template <typename T>
Net<T>::Net(NetSpec spec, std::uint64_t seed) : spec_(std::move(spec)) {
  if (spec_.input.empty()) throw ShapeMismatch("net: empty input shape");
  Rng rng(derive_seed(seed, "init"));
  Shape sample = spec_.input;
  for (const auto& ls : spec_.layers) {
    auto layer = make_layer<T>(ls, sample);
    Shape batch_shape = {1};
    batch_shape.insert(batch_shape.end(), sample.begin(), sample.end());
    const Shape out = layer->output_shape(batch_shape);
    sample.assign(out.begin() + 1, out.end());
    layer->initialize(rng);
    layers_.push_back(std::move(layer));
  }
  output_size_ = shape_size(sample);
  acts_.resize(layers_.size() + 1);
}

template <typename T>
const Tensor<T>& Net<T>::forward(const Tensor<T>& input, bool training) {
  if (input.shape.size() != spec_.input.size() + 1 ||
      !std::equal(spec_.input.begin(), spec_.input.end(), input.shape.begin() + 1)) {
    throw ShapeMismatch("net: input " + shape_string(input.shape) + " does not match spec " +
                        shape_string(spec_.input));
  }
  acts_[0] = input;
  for (std::size_t i = 0; i < layers_.size(); ++i) layers_[i]->forward(acts_[i], acts_[i + 1], training);
  return acts_.back();
}

template <typename T>
void Net<T>::backward(const Tensor<T>& grad_output, Tensor<T>* grad_input) {
  if (grad_output.shape != acts_.back().shape) {
    throw ShapeMismatch("net: output gradient " + shape_string(grad_output.shape) + " does not match output " +
                        shape_string(acts_.back().shape));
  }
  const Tensor<T>* g = &grad_output;
  for (std::size_t i = layers_.size(); i-- > 0;) {
    Tensor<T>* dst = nullptr;
    if (i > 0) {
      dst = (g == &grad_a_) ? &grad_b_ : &grad_a_;
    } else {
      dst = grad_input;
    }
    layers_[i]->backward(acts_[i], acts_[i + 1], *g, dst);
    g = dst;
  }
}

template <typename T>
void Net<T>::zero_grad() {
  for (auto* p : parameters()) p->grad.fill(T(0));
}

template <typename T>
std::vector<Parameter<T>*> Net<T>::parameters() {
  std::vector<Parameter<T>*> out;
  for (auto& l : layers_) {
    for (auto* p : l->parameters()) out.push_back(p);
  }
  return out;
}

template <typename T>
std::vector<Tensor<T>*> Net<T>::buffers() {
  std::vector<Tensor<T>*> out;
  for (auto& l : layers_) {
    for (auto* b : l->buffers()) out.push_back(b);
  }
  return out;
}

template <typename T>
std::size_t Net<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers_) {
    for (auto* p : l->parameters()) n += p->value.size();
  }
  return n;
}

template <typename T>
std::vector<Shape> Net<T>::shape_chain(std::size_t batch) const {
  std::vector<Shape> out;
  Shape s = {batch};
  s.insert(s.end(), spec_.input.begin(), spec_.input.end());
  for (const auto& l : layers_) {
    s = l->output_shape(s);
    out.push_back(s);
  }
  return out;
}

// --- losses ----------------------------------------------------------------

template <typename T>
double mse_loss(const Tensor<T>& pred, const Tensor<T>& target, Tensor<T>& grad) {
  if (pred.shape != target.shape) throw ShapeMismatch("mse: prediction and target shapes differ");
  if (pred.size() == 0) throw EmptyInput("mse: empty tensors");
  grad.reshape_to(pred.shape);
  const double inv = 1.0 / static_cast<double>(pred.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = static_cast<double>(pred.data[i]) - target.data[i];
    sum += d * d;
    grad.data[i] = static_cast<T>(2.0 * d * inv);
  }
  return sum * inv;
}

template <typename T>
double l1_loss(const Tensor<T>& pred, const Tensor<T>& target, Tensor<T>& grad) {
  if (pred.shape != target.shape) throw ShapeMismatch("l1: prediction and target shapes differ");
  if (pred.size() == 0) throw EmptyInput("l1: empty tensors");
  grad.reshape_to(pred.shape);
  const double inv = 1.0 / static_cast<double>(pred.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = static_cast<double>(pred.data[i]) - target.data[i];
    sum += std::fabs(d);
    grad.data[i] = static_cast<T>((d > 0 ? 1.0 : d < 0 ? -1.0 : 0.0) * inv);
  }
  return sum * inv;
}

template <typename T>
double cross_entropy_loss(const Tensor<T>& logits, const std::vector<std::size_t>& classes, Tensor<T>& grad) {
  if (logits.shape.size() != 2 || logits.shape[0] != classes.size()) {
    throw ShapeMismatch("cross entropy: logits must be [N, K] with one class per row");
  }
  const std::size_t n = logits.shape[0], k = logits.shape[1];
  if (n == 0 || k == 0) throw EmptyInput("cross entropy: empty logits");
  grad.reshape_to(logits.shape);
  double total = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    if (classes[r] >= k) throw InvalidArgument("cross entropy: class index out of range");
    const T* z = logits.row(r);
    const double mx = *std::max_element(z, z + k);
    double sum = 0.0;
    for (std::size_t j = 0; j < k; ++j) sum += std::exp(z[j] - mx);
    const double lse = mx + std::log(sum);
    total += lse - z[classes[r]];
    T* g = grad.row(r);
    for (std::size_t j = 0; j < k; ++j) {
      const double p = std::exp(z[j] - lse);
      g[j] = static_cast<T>((p - (j == classes[r] ? 1.0 : 0.0)) / static_cast<double>(n));
    }
  }
  return total / static_cast<double>(n);
}

// --- Adam ------------------------------------------------------------------

template <typename T>
Adam<T>::Adam(std::vector<Parameter<T>*> params, AdamConfig cfg) : params_(std::move(params)), cfg_(cfg) {
  for (auto* p : params_) {
    m_.emplace_back(p->value.size(), 0.0);
    v_.emplace_back(p->value.size(), 0.0);
  }
}

template <typename T>
void Adam<T>::step() {
  ++t_;
  const double b1 = cfg_.beta1, b2 = cfg_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  for (std::size_t k = 0; k < params_.size(); ++k) {
    auto& value = params_[k]->value.data;
    const auto& grad = params_[k]->grad.data;
    auto& m = m_[k];
    auto& v = v_[k];
    for (std::size_t i = 0; i < value.size(); ++i) {
      const double g = grad[i];
      m[i] = b1 * m[i] + (1.0 - b1) * g;
      v[i] = b2 * v[i] + (1.0 - b2) * g * g;
      const double mh = m[i] / c1, vh = v[i] / c2;
      value[i] = static_cast<T>(value[i] - cfg_.lr * mh / (std::sqrt(vh) + cfg_.eps));
    }
  }
}

// --- checkpoints -----------------------------------------------------------

namespace {

constexpr char kMagic[8] = {'P', 'C', 'N', 'E', 'T', '\0', '\0', '\0'};
constexpr std::uint32_t kVersion = 1;

void write_tensor(std::ostream& os, const Tensor<float>& t) {
  io::put_le<std::uint64_t>(os, t.size());
  for (float v : t.data) io::put_f32(os, v);
}

void read_tensor(std::istream& is, Tensor<float>& t, const std::string& what) {
  const auto n = io::get_le<std::uint64_t>(is);
  if (n != t.size()) throw FormatError("checkpoint: size mismatch for " + what);
  for (float& v : t.data) v = io::get_f32(is);
}

}  // namespace

void save_checkpoint(std::ostream& os, Net<float>& net, const nlohmann::json& metadata) {
  const NetSpec& spec = net.spec();
  os.write(kMagic, sizeof kMagic);
  io::put_le<std::uint32_t>(os, kVersion);
  io::put_le<std::uint64_t>(os, spec.hash());
  io::put_le<std::uint32_t>(os, static_cast<std::uint32_t>(spec.input.size()));
  for (std::size_t d : spec.input) io::put_le<std::uint32_t>(os, static_cast<std::uint32_t>(d));
  io::put_le<std::uint32_t>(os, static_cast<std::uint32_t>(spec.layers.size()));
  for (const auto& l : spec.layers) {
    io::put_le<std::uint8_t>(os, static_cast<std::uint8_t>(l.kind));
    io::put_le<std::uint32_t>(os, static_cast<std::uint32_t>(l.out));
    io::put_le<std::uint32_t>(os, static_cast<std::uint32_t>(l.kernel));
    io::put_le<std::uint32_t>(os, static_cast<std::uint32_t>(l.stride));
    io::put_le<std::uint32_t>(os, static_cast<std::uint32_t>(l.pad));
  }
  io::put_string(os, metadata.dump());
  for (auto* p : net.parameters()) write_tensor(os, p->value);
  for (auto* b : net.buffers()) write_tensor(os, *b);
  if (!os) throw Error("checkpoint: write failed");
}

void save_checkpoint(const std::filesystem::path& path, Net<float>& net, const nlohmann::json& metadata) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw FileNotFound("cannot write checkpoint " + path.string());
  save_checkpoint(f, net, metadata);
}

Checkpoint load_checkpoint(std::istream& is) {
  char magic[8];
  if (!is.read(magic, sizeof magic) || !std::equal(magic, magic + 8, kMagic)) {
    throw FormatError("checkpoint: bad magic");
  }
  try {
    const auto version = io::get_le<std::uint32_t>(is);
    if (version != kVersion) throw FormatError("checkpoint: unsupported version " + std::to_string(version));
    const auto hash = io::get_le<std::uint64_t>(is);
    NetSpec spec;
    const auto rank = io::get_le<std::uint32_t>(is);
    if (rank > 8) throw FormatError("checkpoint: bad input rank");
    for (std::uint32_t i = 0; i < rank; ++i) spec.input.push_back(io::get_le<std::uint32_t>(is));
    const auto count = io::get_le<std::uint32_t>(is);
    if (count > 10000) throw FormatError("checkpoint: implausible layer count");
    for (std::uint32_t i = 0; i < count; ++i) {
      LayerSpec l;
      const auto kind = io::get_le<std::uint8_t>(is);
      if (kind > static_cast<std::uint8_t>(LayerKind::GELU)) throw FormatError("checkpoint: unknown layer kind");
      l.kind = static_cast<LayerKind>(kind);
      l.out = io::get_le<std::uint32_t>(is);
      l.kernel = io::get_le<std::uint32_t>(is);
      l.stride = io::get_le<std::uint32_t>(is);
      l.pad = io::get_le<std::uint32_t>(is);
      spec.layers.push_back(l);
    }
    if (spec.hash() != hash) throw FormatError("checkpoint: spec hash does not match the layer list");
    Checkpoint ck;
    ck.metadata = nlohmann::json::parse(io::get_string(is));
    ck.net = std::make_unique<Net<float>>(spec, 0);
    for (auto* p : ck.net->parameters()) read_tensor(is, p->value, p->name);
    for (auto* b : ck.net->buffers()) read_tensor(is, *b, "buffer");
    return ck;
  } catch (const FormatError&) {
    throw;
  } catch (const std::exception& e) {
    throw FormatError(std::string("checkpoint: ") + e.what());
  }
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw FileNotFound("checkpoint not found: " + path.string());
  return load_checkpoint(f);
}

#define POPCODE_NET(T)                                                                               \
  template class Net<T>;                                                                             \
  template class Adam<T>;                                                                            \
  template double mse_loss<T>(const Tensor<T>&, const Tensor<T>&, Tensor<T>&);                       \
  template double l1_loss<T>(const Tensor<T>&, const Tensor<T>&, Tensor<T>&);                        \
  template double cross_entropy_loss<T>(const Tensor<T>&, const std::vector<std::size_t>&, Tensor<T>&);

POPCODE_NET(float)
POPCODE_NET(double)

}  // namespace popcode::nn
