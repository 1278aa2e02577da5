#pragma once

// Output heads for the planar-orientation experiment and the training loop
// that fits the synthetic network to one of them.

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "popcode/baselines.hpp"
#include "popcode/lattice.hpp"
#include "popcode/net.hpp"
#include "popcode/synth.hpp"

namespace popcode::train {

enum class HeadKind { PopCode, PopCodeSym, OneHotMse, OneHotCe, SingleVar, MultiHyp };
std::string to_string(HeadKind k);
HeadKind head_kind_from_string(const std::string& s);  // throws InvalidArgument

struct HeadConfig {
  HeadKind kind = HeadKind::PopCode;
  std::size_t ring_size = 36;
  double sigma_deg = 20.0;
  bool cos_sin = false;  // single_var: predict (cos, sin) instead of the raw angle
  baselines::OneHotMode one_hot_mode = baselines::OneHotMode::Sample;
  std::size_t hypotheses = 10;
  double epsilon_start = 0.05, epsilon_end = 0.01;
  baselines::MeanShiftConfig mean_shift;
};

// Maps angles to targets and network outputs back to angles.
class Head {
 public:
  explicit Head(HeadConfig cfg);
  const HeadConfig& config() const { return cfg_; }
  std::size_t output_size() const;

  // Mean loss over the batch; grad gets the shape of pred. `progress` in
  // [0, 1] drives the epsilon schedule of the hypotheses head and `rng` the
  // class choice of the one-hot heads on bars.
  double loss(const nn::Tensor<float>& pred, std::span<const double> angles, synth::ShapeKind kind,
              double progress, Rng& rng, nn::Tensor<float>& grad) const;
  // Angle in [0, 2 pi) read from one output row.
  double decode(std::span<const float> row) const;
  // Dense regression target of one sample (population code, one-hot or
  // scalar). Not defined for the cross-entropy and hypotheses heads.
  std::vector<double> target(double angle) const;

 private:
  HeadConfig cfg_;
  AngleRing ring_;
};

// Squared angle error in degrees^2. Bars are compared modulo pi.
double squared_angle_error_deg2(double predicted, double truth, synth::ShapeKind kind);

struct TrainConfig {
  std::size_t epochs = 80;
  std::size_t batch = 64;
  nn::AdamConfig adam;
  synth::AugmentConfig augment;
  bool augment_enabled = true;
  double width_scale = 1.0;
  std::size_t eval_every = 1;  // test metric every k epochs (and always after the last)
  int threads = 1;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  std::optional<double> test_metric;
};

struct TrainResult {
  std::unique_ptr<nn::Net<float>> net;
  std::vector<EpochRecord> curve;
  double test_error = 0.0;  // mean squared angle error on the test split
};

using EpochCallback = std::function<void(const EpochRecord&)>;

// Throws Divergence when the loss stops being finite.
TrainResult train_synth(const synth::Dataset& data, synth::ShapeKind kind, const HeadConfig& head,
                        const TrainConfig& cfg, std::uint64_t seed, const EpochCallback& on_epoch = {});

// Images are contrast-normalized only; returns the mean squared error and
// optionally every per-sample error.
double evaluate(nn::Net<float>& net, const Head& head, std::span<const synth::LabeledSample> samples,
                synth::ShapeKind kind, std::vector<double>* per_sample = nullptr, std::size_t batch = 64);
std::vector<double> predict_angles(nn::Net<float>& net, const Head& head,
                                   std::span<const synth::LabeledSample> samples, std::size_t batch = 64);

// epoch,train_loss,test_metric (empty when not evaluated)
void write_curve_csv(std::ostream& os, std::span<const EpochRecord> curve);

struct RepeatResult {
  std::size_t run = 0;
  std::uint64_t seed = 0;
  double test_error = 0.0;
};

struct RepeatSummary {
  std::vector<RepeatResult> runs;  // in run order
  double mean = 0.0;
  double stddev = 0.0;  // sample standard deviation
};

// Called once per finished run, possibly from several threads at once.
using RunCallback = std::function<void(std::size_t run, const TrainResult&)>;

// Run r draws a fresh dataset and initialization from repeat_seed(seed, r).
// `jobs` runs go in parallel; results are merged in run order.
RepeatSummary repeat_synth(synth::ShapeKind kind, const HeadConfig& head, const TrainConfig& cfg,
                           std::uint64_t seed, std::size_t repeats, int jobs = 1, const RunCallback& on_run = {});
std::uint64_t repeat_seed(std::uint64_t seed, std::size_t run);

}  // namespace popcode::train
