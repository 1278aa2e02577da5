#include "popcode/net.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <sstream>

#include "popcode/error.hpp"
#include "popcode/rng.hpp"
#include "gradcheck.hpp"

using namespace popcode;
using namespace popcode::nn;

namespace {

using gradcheck::away_from_zero;
using gradcheck::kTol;
using gradcheck::numeric_grad;
using gradcheck::random_tensor;
using gradcheck::rel_error;

void check_layer(const LayerSpec& spec, const Shape& in_shape, bool training, std::uint64_t seed,
                 bool keep_from_zero = false) {
  const auto r = gradcheck::check_layer(spec, in_shape, training, seed, keep_from_zero);
  EXPECT_LT(r.input, kTol) << to_string(spec.kind) << " input " << shape_string(in_shape);
  for (std::size_t i = 0; i < r.params.size(); ++i)
    EXPECT_LT(r.params[i], kTol) << to_string(spec.kind) << " parameter " << i << " " << shape_string(in_shape);
}

}  // namespace

TEST(GradientCheck, Conv2d) {
  check_layer(LayerSpec::conv2d(4, 3, 1, 1), {2, 3, 6, 6}, true, 1);
  check_layer(LayerSpec::conv2d(3, 5, 2, 2), {1, 2, 7, 5}, true, 2);
  check_layer(LayerSpec::conv2d(2, 1, 1, 0), {3, 4, 5, 5}, true, 3);
  check_layer(LayerSpec::conv2d(2, 3, 2, 0), {2, 1, 7, 7}, true, 4);
}

TEST(GradientCheck, BatchNormTraining) {
  check_layer(LayerSpec::batchnorm2d(), {4, 3, 3, 3}, true, 5);
  check_layer(LayerSpec::batchnorm2d(), {2, 2, 4, 5}, true, 6);
  check_layer(LayerSpec::batchnorm2d(), {5, 1, 2, 2}, true, 7);
}

TEST(GradientCheck, BatchNormEval) {
  check_layer(LayerSpec::batchnorm2d(), {2, 3, 3, 3}, false, 8);
  check_layer(LayerSpec::batchnorm2d(), {1, 2, 4, 2}, false, 9);
  check_layer(LayerSpec::batchnorm2d(), {3, 1, 2, 2}, false, 10);
}

TEST(GradientCheck, MaxPool) {
  check_layer(LayerSpec::maxpool2d(), {2, 3, 4, 4}, true, 11);
  check_layer(LayerSpec::maxpool2d(), {1, 2, 6, 5}, true, 12);
  check_layer(LayerSpec::maxpool2d(), {3, 1, 2, 2}, true, 13);
}

TEST(GradientCheck, Linear) {
  check_layer(LayerSpec::linear(4), {3, 5}, true, 14);
  check_layer(LayerSpec::linear(5), {2, 3, 2, 2}, true, 15);
  check_layer(LayerSpec::linear(1), {1, 7}, true, 16);
}

TEST(GradientCheck, Activations) {
  for (auto spec : {LayerSpec::relu(), LayerSpec::leaky_relu(), LayerSpec::gelu()}) {
    check_layer(spec, {2, 3, 4, 4}, true, 17, true);
    check_layer(spec, {5, 7}, true, 18, true);
    check_layer(spec, {1, 2, 3, 1}, true, 19, true);
  }
}

TEST(GradientCheck, Losses) {
  Rng rng(20);
  for (const Shape& s : {Shape{3, 4}, Shape{1, 9}, Shape{6, 2}}) {
    Tensor<double> pred = random_tensor<double>(rng, s);
    Tensor<double> target = random_tensor<double>(rng, s);
    // L1 is evaluated away from its corners
    Tensor<double> offset = away_from_zero(rng, s);
    for (std::size_t i = 0; i < target.size(); ++i) target.data[i] = pred.data[i] + offset.data[i];
    std::vector<std::size_t> classes;
    for (std::size_t n = 0; n < s[0]; ++n) classes.push_back(static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(s[1]) - 1)));

    Tensor<double> g, scratch;
    mse_loss(pred, target, g);
    EXPECT_LT(rel_error(g.data, numeric_grad(pred.data, [&] { return mse_loss(pred, target, scratch); })), kTol);
    l1_loss(pred, target, g);
    EXPECT_LT(rel_error(g.data, numeric_grad(pred.data, [&] { return l1_loss(pred, target, scratch); })), kTol);
    cross_entropy_loss(pred, classes, g);
    EXPECT_LT(rel_error(g.data, numeric_grad(pred.data, [&] { return cross_entropy_loss(pred, classes, scratch); })),
              kTol);
  }
}

TEST(GradientCheck, WholeNetwork) {
  NetSpec spec{{2, 8, 8},
               {LayerSpec::conv2d(3, 3, 1, 1), LayerSpec::batchnorm2d(), LayerSpec::relu(), LayerSpec::maxpool2d(),
                LayerSpec::conv2d(2, 1, 1, 0), LayerSpec::gelu(), LayerSpec::linear(5), LayerSpec::leaky_relu(),
                LayerSpec::linear(3)}};
  Net<double> net(spec, 21);
  Rng rng(22);
  Tensor<double> x = random_tensor<double>(rng, {3, 2, 8, 8});
  Tensor<double> target = random_tensor<double>(rng, {3, 3});
  Tensor<double> g, scratch;
  auto objective = [&] { return mse_loss(net.forward(x, true), target, scratch); };
  mse_loss(net.forward(x, true), target, g);
  net.zero_grad();
  Tensor<double> gx;
  net.backward(g, &gx);
  EXPECT_LT(rel_error(gx.data, numeric_grad(x.data, objective)), kTol);
  for (auto* p : net.parameters()) {
    EXPECT_LT(rel_error(p->grad.data, numeric_grad(p->value.data, objective)), kTol) << p->name;
  }
}

TEST(Backward, GradientsAreAdditive) {
  NetSpec spec{{1, 6, 6}, {LayerSpec::conv2d(2, 3, 1, 1), LayerSpec::relu(), LayerSpec::linear(4)}};
  Net<double> net(spec, 23);
  Rng rng(24);
  const Tensor<double> x = random_tensor<double>(rng, {2, 1, 6, 6});
  const Tensor<double> g1 = random_tensor<double>(rng, {2, 4}), g2 = random_tensor<double>(rng, {2, 4});
  Tensor<double> sum(g1.shape);
  for (std::size_t i = 0; i < sum.size(); ++i) sum.data[i] = g1.data[i] + g2.data[i];

  auto grads_for = [&](const Tensor<double>& g) {
    net.forward(x, true);
    net.zero_grad();
    net.backward(g);
    std::vector<double> out;
    for (auto* p : net.parameters()) out.insert(out.end(), p->grad.data.begin(), p->grad.data.end());
    return out;
  };
  const auto a = grads_for(g1), b = grads_for(g2), c = grads_for(sum);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i] + b[i], c[i], 1e-10);
}

TEST(Backward, MseAtTargetHasZeroGradient) {
  NetSpec spec{{4}, {LayerSpec::linear(3), LayerSpec::relu(), LayerSpec::linear(2)}};
  Net<double> net(spec, 25);
  Rng rng(26);
  const auto x = random_tensor<double>(rng, {3, 4});
  const Tensor<double> y = net.forward(x, true);
  Tensor<double> g;
  EXPECT_EQ(mse_loss(y, y, g), 0.0);
  net.zero_grad();
  net.backward(g);
  for (auto* p : net.parameters()) {
    for (double v : p->grad.data) EXPECT_EQ(v, 0.0);
  }
}

TEST(Forward, ConvMatchesDirectLoops) {
  Rng rng(27);
  const std::size_t c_in = 3, h = 8, w = 8, c_out = 5, k = 3, pad = 1;
  NetSpec spec{{c_in, h, w}, {LayerSpec::conv2d(c_out, k, 1, pad)}};
  Net<float> net(spec, 28);
  auto& conv = dynamic_cast<Conv2d<float>&>(net.layer(0));
  for (auto& v : conv.bias().value.data) v = static_cast<float>(rng.uniform(-1, 1));
  const auto x = random_tensor<float>(rng, {1, c_in, h, w});
  const auto& y = net.forward(x, false);

  const auto& wt = conv.weight().value.data;
  double worst = 0.0;
  for (std::size_t o = 0; o < c_out; ++o) {
    for (std::size_t r = 0; r < h; ++r) {
      for (std::size_t c = 0; c < w; ++c) {
        double acc = conv.bias().value.data[o];
        for (std::size_t i = 0; i < c_in; ++i) {
          for (std::size_t dy = 0; dy < k; ++dy) {
            for (std::size_t dx = 0; dx < k; ++dx) {
              const long yy = static_cast<long>(r + dy) - static_cast<long>(pad);
              const long xx = static_cast<long>(c + dx) - static_cast<long>(pad);
              if (yy < 0 || xx < 0 || yy >= static_cast<long>(h) || xx >= static_cast<long>(w)) continue;
              acc += static_cast<double>(wt[((o * c_in + i) * k + dy) * k + dx]) * x.data[(i * h + yy) * w + xx];
            }
          }
        }
        worst = std::max(worst, std::abs(acc - y.data[(o * h + r) * w + c]));
      }
    }
  }
  EXPECT_LT(worst, 1e-5);
}

TEST(Forward, IdentityPointwiseConvCopiesInput) {
  NetSpec spec{{3, 5, 4}, {LayerSpec::conv2d(3, 1, 1, 0)}};
  Net<float> net(spec, 29);
  auto& conv = dynamic_cast<Conv2d<float>&>(net.layer(0));
  conv.weight().value.fill(0.0f);
  for (std::size_t c = 0; c < 3; ++c) conv.weight().value.data[c * 3 + c] = 1.0f;
  conv.bias().value.fill(0.0f);
  Rng rng(30);
  const auto x = random_tensor<float>(rng, {2, 3, 5, 4});
  EXPECT_EQ(net.forward(x, false).data, x.data);
}

TEST(Forward, ZeroLinearNetGivesZero) {
  NetSpec spec{{6}, {LayerSpec::linear(4), LayerSpec::relu(), LayerSpec::linear(3)}};
  Net<float> net(spec, 31);
  for (auto* p : net.parameters()) p->value.fill(0.0f);
  const Tensor<float> x({2, 6});
  for (float v : net.forward(x, false).data) EXPECT_EQ(v, 0.0f);
}

TEST(Forward, EvalModeIsPure) {
  Net<float> net(build_tless_net(4, 3, 1.0 / 32, 32), 32);
  Rng rng(33);
  const auto x = random_tensor<float>(rng, {2, 1, 32, 32});
  net.forward(x, true);  // moves the running statistics once
  const auto a = net.forward(x, false).data;
  const auto b = net.forward(x, false).data;
  EXPECT_EQ(a, b);
}

TEST(Forward, RejectsWrongInputShape) {
  Net<float> net(build_synth_net(36, 0.25), 34);
  EXPECT_THROW(net.forward(Tensor<float>({1, 1, 32, 32}), false), ShapeMismatch);
  EXPECT_THROW(net.forward(Tensor<float>({1, 64, 64}), false), ShapeMismatch);
}

TEST(Losses, KnownValues) {
  Tensor<double> g;
  const Tensor<double> x({2, 3}, 0.7);
  EXPECT_EQ(mse_loss(x, x, g), 0.0);
  EXPECT_EQ(l1_loss(x, x, g), 0.0);
  const Tensor<double> logits({1, 2});
  EXPECT_NEAR(cross_entropy_loss(logits, {0}, g), std::log(2.0), 1e-15);
  // large logits stay finite
  Tensor<float> big({1, 3});
  big.data = {1000.0f, -1000.0f, 0.0f};
  Tensor<float> gf;
  EXPECT_NEAR(cross_entropy_loss(big, {0}, gf), 0.0, 1e-6);
  EXPECT_THROW(cross_entropy_loss(logits, {2}, g), InvalidArgument);
  EXPECT_THROW(mse_loss(x, Tensor<double>({3, 2}), g), ShapeMismatch);
}

TEST(Losses, FloatMatchesDoubleOracle) {
  Rng rng(35);
  for (int trial = 0; trial < 3; ++trial) {
    const auto p = random_tensor<float>(rng, {4, 7}), t = random_tensor<float>(rng, {4, 7});
    std::vector<std::size_t> classes{0, 3, 6, 2};
    double mse = 0, l1 = 0, ce = 0;
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double d = static_cast<double>(p.data[i]) - t.data[i];
      mse += d * d / p.size();
      l1 += std::abs(d) / p.size();
    }
    for (std::size_t n = 0; n < 4; ++n) {
      double s = 0;
      for (std::size_t j = 0; j < 7; ++j) s += std::exp(static_cast<double>(p.data[n * 7 + j]));
      ce += (std::log(s) - p.data[n * 7 + classes[n]]) / 4;
    }
    Tensor<float> g;
    EXPECT_NEAR(mse_loss(p, t, g) / mse, 1.0, 1e-6);
    EXPECT_NEAR(l1_loss(p, t, g) / l1, 1.0, 1e-6);
    EXPECT_NEAR(cross_entropy_loss(p, classes, g) / ce, 1.0, 1e-6);
  }
}

TEST(Adam, ZeroGradientLeavesParametersUnchanged) {
  Net<float> net(build_synth_net(4, 0.125, 16), 36);
  std::vector<std::vector<float>> before;
  for (auto* p : net.parameters()) before.push_back(p->value.data);
  Adam<float> opt(net.parameters());
  net.zero_grad();
  opt.step();
  opt.step();
  const auto params = net.parameters();
  for (std::size_t k = 0; k < params.size(); ++k) EXPECT_EQ(params[k]->value.data, before[k]);
}

TEST(Adam, FirstStepMovesByLearningRateAgainstGradient) {
  Parameter<double> p{"w", Tensor<double>({4}), Tensor<double>({4})};
  p.value.data = {1.0, -2.0, 0.5, 3.0};
  p.grad.data = {0.3, -4.0, 1e-3, 25.0};
  const auto before = p.value.data;
  AdamConfig cfg;
  Adam<double> opt({&p}, cfg);
  opt.step();
  for (std::size_t i = 0; i < 4; ++i) {
    // m_hat = g and v_hat = g^2 after one step
    const double g = p.grad.data[i];
    const double expected = before[i] - cfg.lr * g / (std::abs(g) + cfg.eps);
    EXPECT_NEAR(p.value.data[i], expected, 1e-15);
    EXPECT_NEAR(std::abs(p.value.data[i] - before[i]), cfg.lr, 1e-8);
  }
}

TEST(Adam, DeterministicAcrossRuns) {
  auto run = [] {
    Net<float> net(build_synth_net(3, 0.125, 16), 37);
    Adam<float> opt(net.parameters());
    Rng rng(38);
    const auto x = random_tensor<float>(rng, {4, 1, 16, 16});
    const auto t = random_tensor<float>(rng, {4, 3});
    Tensor<float> g;
    for (int k = 0; k < 5; ++k) {
      net.zero_grad();
      mse_loss(net.forward(x, true), t, g);
      net.backward(g);
      opt.step();
    }
    std::vector<float> out;
    for (auto* p : net.parameters()) out.insert(out.end(), p->value.data.begin(), p->value.data.end());
    return out;
  };
  EXPECT_EQ(run(), run());
}

TEST(Architecture, SynthNetParameterCount) {
  // conv 1->32, 32->64, 64->128 (3x3), three pools take 64 -> 8, then
  // 8192 -> 256 -> 128 -> 64 -> 36
  const std::size_t expected = (1 * 9 * 32 + 32) + (32 * 9 * 64 + 64) + (64 * 9 * 128 + 128) +
                               (128 * 8 * 8 * 256 + 256) + (256 * 128 + 128) + (128 * 64 + 64) + (64 * 36 + 36);
  Net<float> net(build_synth_net(36), 1);
  EXPECT_EQ(net.parameter_count(), expected);
  EXPECT_EQ(expected, 2233572u);
  EXPECT_EQ(net.output_size(), 36u);
  EXPECT_EQ(Net<float>(build_synth_net(1), 1).output_size(), 1u);
  const auto spec = build_synth_net(36);
  ASSERT_EQ(spec.layers.size(), 16u);
  EXPECT_EQ(spec.layers.back(), LayerSpec::linear(36));
}

TEST(Architecture, TlessShapeChain) {
  const auto spec = build_tless_net(2562, 36);
  // three 5x5 stride-2 blocks with batchnorm, a 1x1 conv with GELU, then
  // three hidden linear layers and the output
  const std::vector<LayerKind> kinds{
      LayerKind::Conv2d, LayerKind::BatchNorm2d, LayerKind::ReLU, LayerKind::Conv2d, LayerKind::BatchNorm2d,
      LayerKind::ReLU,   LayerKind::Conv2d,      LayerKind::BatchNorm2d, LayerKind::ReLU, LayerKind::Conv2d,
      LayerKind::GELU,   LayerKind::Linear,      LayerKind::LeakyReLU, LayerKind::Linear, LayerKind::LeakyReLU,
      LayerKind::Linear, LayerKind::LeakyReLU,   LayerKind::Linear};
  ASSERT_EQ(spec.layers.size(), kinds.size());
  for (std::size_t i = 0; i < kinds.size(); ++i) EXPECT_EQ(spec.layers[i].kind, kinds[i]) << i;
  EXPECT_EQ(spec.layers[9].kernel, 1u);
  EXPECT_EQ(spec.layers.back().out, 92232u);

  // the shape chain at a reduced width, compared with the conv arithmetic
  Net<float> net(build_tless_net(2562, 36, 0.125), 2);
  const auto chain = net.shape_chain(2);
  std::size_t side = 128;
  for (int block = 0; block < 3; ++block) {
    side = (side + 2 * 2 - 5) / 2 + 1;
    for (int j = 0; j < 3; ++j) {
      EXPECT_EQ(chain[block * 3 + j][2], side);
      EXPECT_EQ(chain[block * 3 + j][3], side);
    }
  }
  EXPECT_EQ(side, 16u);
  EXPECT_EQ(chain[9], (Shape{2, 16, 16, 16}));
  EXPECT_EQ(chain[11], (Shape{2, 64}));
  EXPECT_EQ(chain.back(), (Shape{2, 92232}));
}

TEST(Checkpoint, RoundTripRestoresOutputs) {
  Net<float> net(build_tless_net(3, 4, 1.0 / 32, 32), 40);
  Rng rng(41);
  const auto x = random_tensor<float>(rng, {3, 1, 32, 32});
  net.forward(x, true);  // non-trivial running statistics
  const auto expected = net.forward(x, false).data;
  std::stringstream ss;
  save_checkpoint(ss, net, {{"head", "popcode"}, {"epochs", 3}});
  auto ck = load_checkpoint(ss);
  EXPECT_EQ(ck.net->spec(), net.spec());
  EXPECT_EQ(ck.metadata["head"], "popcode");
  EXPECT_EQ(ck.metadata["epochs"], 3);
  EXPECT_EQ(ck.net->forward(x, false).data, expected);
}

TEST(Checkpoint, RejectsCorruptInput) {
  Net<float> net(build_synth_net(2, 0.125, 16), 42);
  std::stringstream ss;
  save_checkpoint(ss, net, nlohmann::json::object());
  std::string bytes = ss.str();

  std::string bad_magic = bytes;
  bad_magic[0] = 'X';
  std::istringstream a(bad_magic);
  EXPECT_THROW(load_checkpoint(a), FormatError);

  std::string bad_hash = bytes;
  bad_hash[12] ^= 0x5a;
  std::istringstream b(bad_hash);
  EXPECT_THROW(load_checkpoint(b), FormatError);

  std::istringstream c(bytes.substr(0, bytes.size() - 3));
  EXPECT_THROW(load_checkpoint(c), FormatError);

  EXPECT_THROW(load_checkpoint(std::filesystem::path("/nonexistent/net.ckpt")), FileNotFound);
}

TEST(NetSpecJson, RoundTrip) {
  const auto spec = build_tless_net(12, 6, 0.25, 64);
  EXPECT_EQ(NetSpec::from_json(spec.to_json()), spec);
  EXPECT_EQ(NetSpec::from_json(spec.to_json()).hash(), spec.hash());
  EXPECT_NE(build_synth_net(36).hash(), build_synth_net(35).hash());
}
