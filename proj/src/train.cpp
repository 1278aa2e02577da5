#include "popcode/train.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <exception>
#include <ostream>

#include "popcode/code.hpp"
#include "popcode/error.hpp"

namespace popcode::train {

std::string to_string(HeadKind k) {
  switch (k) {
    case HeadKind::PopCode: return "popcode";
    case HeadKind::PopCodeSym: return "popcode_sym";
    case HeadKind::OneHotMse: return "one_hot_mse";
    case HeadKind::OneHotCe: return "one_hot_ce";
    case HeadKind::SingleVar: return "single_var";
    case HeadKind::MultiHyp: return "multi_hyp";
  }
  return "?";
}

HeadKind head_kind_from_string(const std::string& s) {
  for (auto k : {HeadKind::PopCode, HeadKind::PopCodeSym, HeadKind::OneHotMse, HeadKind::OneHotCe,
                 HeadKind::SingleVar, HeadKind::MultiHyp}) {
    if (to_string(k) == s) return k;
  }
  throw InvalidArgument("unknown head '" + s +
                        "' (expected popcode, popcode_sym, one_hot_mse, one_hot_ce, single_var or multi_hyp)");
}

Head::Head(HeadConfig cfg) : cfg_(cfg), ring_(angle_ring(cfg.ring_size)) {
  if (!(cfg_.sigma_deg > 0)) throw InvalidArgument("tuning width must be positive");
  if (cfg_.kind == HeadKind::MultiHyp && cfg_.hypotheses < 2) throw InvalidArgument("multi_hyp needs at least 2 hypotheses");
}

std::size_t Head::output_size() const {
  switch (cfg_.kind) {
    case HeadKind::SingleVar: return cfg_.cos_sin ? 2 : 1;
    case HeadKind::MultiHyp: return 4 * cfg_.hypotheses;
    default: return ring_.size();
  }
}

std::vector<double> Head::target(double angle) const {
  const TuningConfig tc{deg2rad(cfg_.sigma_deg)};
  switch (cfg_.kind) {
    case HeadKind::PopCode: return encode_angle(angle, ring_, tc);
    case HeadKind::PopCodeSym: {
      std::vector<double> out(ring_.size(), 0.0);
      accumulate_angle(angle, ring_, tc, out);
      accumulate_angle(angle + kPi, ring_, tc, out);
      return out;
    }
    case HeadKind::OneHotMse: {
      std::vector<double> out(ring_.size(), 0.0);
      out[ring_.nearest(angle)] = 1.0;
      return out;
    }
    case HeadKind::SingleVar:
      if (cfg_.cos_sin) return {std::cos(angle), std::sin(angle)};
      return {wrap_two_pi(angle)};
    default: throw InvalidArgument("head " + to_string(cfg_.kind) + " has no dense target");
  }
}

namespace {

using Quat = baselines::Quat;

Quat planar_quaternion(double angle) { return {std::cos(angle / 2), 0.0, 0.0, std::sin(angle / 2)}; }

}  // namespace

double Head::loss(const nn::Tensor<float>& pred, std::span<const double> angles, synth::ShapeKind kind,
                  double progress, Rng& rng, nn::Tensor<float>& grad) const {
  const std::size_t n = angles.size(), k = output_size();
  if (pred.shape != nn::Shape{n, k}) {
    throw ShapeMismatch("head expects predictions " + nn::shape_string({n, k}) + ", got " + nn::shape_string(pred.shape));
  }
  if (cfg_.kind == HeadKind::OneHotCe || cfg_.kind == HeadKind::OneHotMse) {
    std::vector<std::size_t> classes(n);
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<std::size_t> valid{ring_.nearest(angles[i])};
      if (kind == synth::ShapeKind::Bar) valid.push_back(ring_.nearest(angles[i] + kPi));
      classes[i] = baselines::pick_class(valid, cfg_.one_hot_mode, rng);
    }
    if (cfg_.kind == HeadKind::OneHotCe) return nn::cross_entropy_loss(pred, classes, grad);
    nn::Tensor<float> target(pred.shape);
    for (std::size_t i = 0; i < n; ++i) target.data[i * k + classes[i]] = 1.0f;
    return nn::mse_loss(pred, target, grad);
  }
  if (cfg_.kind == HeadKind::MultiHyp) {
    grad.reshape_to(pred.shape);
    const double eps = baselines::epsilon_schedule(progress, cfg_.epsilon_start, cfg_.epsilon_end);
    double total = 0.0;
    std::vector<Quat> qs(cfg_.hypotheses);
    for (std::size_t i = 0; i < n; ++i) {
      const float* row = pred.row(i);
      for (std::size_t h = 0; h < qs.size(); ++h) qs[h] = Quat(row[4 * h], row[4 * h + 1], row[4 * h + 2], row[4 * h + 3]);
      const auto l = baselines::multi_hypothesis_loss(qs, planar_quaternion(angles[i]), eps);
      total += l.value;
      float* g = grad.row(i);
      for (std::size_t h = 0; h < qs.size(); ++h) {
        for (int c = 0; c < 4; ++c) g[4 * h + c] = static_cast<float>(l.grad[h][c] / static_cast<double>(n));
      }
    }
    return total / static_cast<double>(n);
  }
  nn::Tensor<float> target(pred.shape);
  for (std::size_t i = 0; i < n; ++i) {
    const auto t = this->target(angles[i]);
    std::copy(t.begin(), t.end(), target.data.begin() + static_cast<std::ptrdiff_t>(i * k));
  }
  return nn::mse_loss(pred, target, grad);
}

double Head::decode(std::span<const float> row) const {
  if (row.size() != output_size()) throw DimensionMismatch("output row does not match the head");
  switch (cfg_.kind) {
    case HeadKind::SingleVar:
      if (cfg_.cos_sin) return wrap_two_pi(std::atan2(row[1], row[0]));
      return wrap_two_pi(row[0]);
    case HeadKind::MultiHyp: {
      std::vector<Quat> qs(cfg_.hypotheses);
      for (std::size_t h = 0; h < qs.size(); ++h) qs[h] = Quat(row[4 * h], row[4 * h + 1], row[4 * h + 2], row[4 * h + 3]);
      const RotationMatrix r = baselines::mean_shift_decode(qs, cfg_.mean_shift);
      return wrap_two_pi(std::atan2(r(1, 0), r(0, 0)));
    }
    default: {
      const auto it = std::max_element(row.begin(), row.end());
      return ring_.angles[static_cast<std::size_t>(it - row.begin())];
    }
  }
}

double squared_angle_error_deg2(double predicted, double truth, synth::ShapeKind kind) {
  double d;
  if (kind == synth::ShapeKind::Bar) {
    d = std::fmod(std::fabs(predicted - truth), kPi);
    d = std::min(d, kPi - d);
  } else {
    d = circular_distance(predicted, truth);
  }
  const double deg = rad2deg(d);
  return deg * deg;
}

namespace {

class ThreadScope {
 public:
  explicit ThreadScope(int threads) : saved_(omp_get_max_threads()) {
    if (threads > 0) omp_set_num_threads(threads);
  }
  ~ThreadScope() { omp_set_num_threads(saved_); }

 private:
  int saved_;
};

void load_image(const synth::GrayImage& img, float* dst) { std::copy(img.pixels.begin(), img.pixels.end(), dst); }

}  // namespace

std::vector<double> predict_angles(nn::Net<float>& net, const Head& head,
                                   std::span<const synth::LabeledSample> samples, std::size_t batch) {
  std::vector<double> out;
  out.reserve(samples.size());
  const std::size_t pixels = static_cast<std::size_t>(synth::kCanvas) * synth::kCanvas;
  for (std::size_t start = 0; start < samples.size(); start += batch) {
    const std::size_t b = std::min(batch, samples.size() - start);
    nn::Tensor<float> x({b, 1, synth::kCanvas, synth::kCanvas});
    for (std::size_t i = 0; i < b; ++i) {
      synth::GrayImage img = samples[start + i].image;
      synth::normalize_contrast(img);
      load_image(img, x.data.data() + i * pixels);
    }
    const auto& y = net.forward(x, false);
    for (std::size_t i = 0; i < b; ++i) out.push_back(head.decode({y.row(i), y.row_size()}));
  }
  return out;
}

double evaluate(nn::Net<float>& net, const Head& head, std::span<const synth::LabeledSample> samples,
                synth::ShapeKind kind, std::vector<double>* per_sample, std::size_t batch) {
  if (samples.empty()) throw EmptyInput("nothing to evaluate");
  const auto angles = predict_angles(net, head, samples, batch);
  double sum = 0.0;
  if (per_sample) per_sample->clear();
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const double e = squared_angle_error_deg2(angles[i], samples[i].angle, kind);
    sum += e;
    if (per_sample) per_sample->push_back(e);
  }
  return sum / static_cast<double>(samples.size());
}

TrainResult train_synth(const synth::Dataset& data, synth::ShapeKind kind, const HeadConfig& head_cfg,
                        const TrainConfig& cfg, std::uint64_t seed, const EpochCallback& on_epoch) {
  if (data.train.empty()) throw EmptyInput("training split is empty");
  if (cfg.batch == 0) throw InvalidArgument("batch size must be positive");
  ThreadScope threads(cfg.threads);
  const Head head(head_cfg);
  TrainResult result;
  result.net = std::make_unique<nn::Net<float>>(nn::build_synth_net(head.output_size(), cfg.width_scale),
                                                derive_seed(seed, "net"));
  auto& net = *result.net;
  nn::Adam<float> opt(net.parameters(), cfg.adam);
  Rng shuffle_rng(derive_seed(seed, "shuffle"));
  Rng augment_rng(derive_seed(seed, "augment"));
  Rng head_rng(derive_seed(seed, "head"));

  const std::size_t n = data.train.size();
  const std::size_t pixels = static_cast<std::size_t>(synth::kCanvas) * synth::kCanvas;
  const std::size_t steps_per_epoch = (n + cfg.batch - 1) / cfg.batch;
  const std::size_t total_steps = std::max<std::size_t>(1, cfg.epochs * steps_per_epoch);
  std::vector<std::size_t> order(n);
  nn::Tensor<float> x, grad;
  std::vector<double> angles;
  std::size_t step = 0;

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    for (std::size_t i = n; i > 1; --i) {
      const auto j = static_cast<std::size_t>(shuffle_rng.uniform_int(0, static_cast<int>(i) - 1));
      std::swap(order[i - 1], order[j]);
    }
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < n; start += cfg.batch) {
      const std::size_t b = std::min(cfg.batch, n - start);
      x.reshape_to({b, 1, synth::kCanvas, synth::kCanvas});
      angles.resize(b);
      for (std::size_t i = 0; i < b; ++i) {
        const auto& s = data.train[order[start + i]];
        synth::GrayImage img;
        if (cfg.augment_enabled) {
          img = synth::augment(s.image, cfg.augment, augment_rng);
        } else {
          img = s.image;
          synth::normalize_contrast(img);
        }
        load_image(img, x.data.data() + i * pixels);
        angles[i] = s.angle;
      }
      const double progress = total_steps > 1 ? static_cast<double>(step) / static_cast<double>(total_steps - 1) : 1.0;
      net.zero_grad();
      const auto& y = net.forward(x, true);
      const double loss = head.loss(y, angles, kind, progress, head_rng, grad);
      if (!std::isfinite(loss)) {
        throw Divergence("loss became non-finite at epoch " + std::to_string(epoch) + ", step " + std::to_string(step));
      }
      net.backward(grad);
      opt.step();
      loss_sum += loss * static_cast<double>(b);
      ++step;
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(n);
    const bool last = epoch == cfg.epochs;
    if (!data.test.empty() && (last || (cfg.eval_every > 0 && epoch % cfg.eval_every == 0))) {
      rec.test_metric = evaluate(net, head, data.test, kind);
    }
    result.curve.push_back(rec);
    if (on_epoch) on_epoch(rec);
  }
  if (!data.test.empty()) {
    result.test_error = result.curve.empty() || !result.curve.back().test_metric
                            ? evaluate(net, head, data.test, kind)
                            : *result.curve.back().test_metric;
  }
  return result;
}

void write_curve_csv(std::ostream& os, std::span<const EpochRecord> curve) {
  os << "epoch,train_loss,test_metric\n";
  os.precision(10);
  for (const auto& r : curve) {
    os << r.epoch << ',' << r.train_loss << ',';
    if (r.test_metric) os << *r.test_metric;
    os << '\n';
  }
}

std::uint64_t repeat_seed(std::uint64_t seed, std::size_t run) { return derive_seed(derive_seed(seed, "repeat"), run); }

RepeatSummary repeat_synth(synth::ShapeKind kind, const HeadConfig& head, const TrainConfig& cfg, std::uint64_t seed,
                           std::size_t repeats, int jobs, const RunCallback& on_run) {
  if (repeats == 0) throw InvalidArgument("repeats must be positive");
  RepeatSummary out;
  out.runs.resize(repeats);
  std::vector<std::exception_ptr> errors(repeats);
  TrainConfig run_cfg = cfg;
  if (jobs > 1) run_cfg.threads = 1;

#pragma omp parallel for schedule(dynamic) num_threads(std::max(1, jobs))
  for (long long r = 0; r < static_cast<long long>(repeats); ++r) {
    try {
      const std::uint64_t s = repeat_seed(seed, static_cast<std::size_t>(r));
      const auto data = synth::gen_dataset(kind, derive_seed(s, "data"));
      const auto res = train_synth(data, kind, head, run_cfg, s);
      out.runs[r] = {static_cast<std::size_t>(r), s, res.test_error};
      if (on_run) on_run(static_cast<std::size_t>(r), res);
    } catch (...) {
      errors[r] = std::current_exception();
    }
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  double sum = 0.0;
  for (const auto& r : out.runs) sum += r.test_error;
  out.mean = sum / static_cast<double>(repeats);
  double sq = 0.0;
  for (const auto& r : out.runs) sq += (r.test_error - out.mean) * (r.test_error - out.mean);
  out.stddev = repeats > 1 ? std::sqrt(sq / static_cast<double>(repeats - 1)) : 0.0;
  return out;
}

}  // namespace popcode::train
