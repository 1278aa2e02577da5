#include "popcode/baselines.hpp"

#include <algorithm>
#include <cmath>

#include "popcode/error.hpp"

namespace popcode::baselines {

std::vector<double> single_variable_target(const RotationMatrix& r_o, const SymmetrySpec& spec) {
  if (spec.is_continuous()) {
    const Vec3 a = r_o * spec.axis.normalized();
    return {a.x(), a.y(), a.z()};
  }
  const Vec3 c0 = r_o.column(0), c1 = r_o.column(1);
  return {c0.x(), c0.y(), c0.z(), c1.x(), c1.y(), c1.z()};
}

BranchLoss min_symmetry_loss(std::span<const double> pred, const RotationMatrix& r_o, const SymmetrySpec& spec) {
  std::vector<RotationMatrix> poses;
  if (spec.is_continuous()) {
    poses.push_back(r_o);
  } else {
    poses = equivalent_rotations(r_o, spec);
  }
  BranchLoss best;
  best.value = INFINITY;
  for (std::size_t k = 0; k < poses.size(); ++k) {
    const auto target = single_variable_target(poses[k], spec);
    if (target.size() != pred.size()) throw DimensionMismatch("prediction length does not match the target");
    double sum = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) sum += std::abs(pred[i] - target[i]);
    const double value = sum / static_cast<double>(pred.size());
    if (value < best.value) {
      best.value = value;
      best.branch = k;
      best.grad.assign(pred.size(), 0.0);
      for (std::size_t i = 0; i < pred.size(); ++i) {
        const double d = pred[i] - target[i];
        best.grad[i] = (d > 0 ? 1.0 : d < 0 ? -1.0 : 0.0) / static_cast<double>(pred.size());
      }
    }
  }
  return best;
}

RotationMatrix decode_single_variable(std::span<const double> pred) {
  if (pred.size() != 6) throw DimensionMismatch("R6 decode needs 6 values");
  std::array<double, 6> v;
  std::copy(pred.begin(), pred.end(), v.begin());
  return rotation_from_r6(v);
}

std::vector<std::size_t> one_hot_target(const RotationMatrix& r_o, const SymmetrySpec& spec, const NeuronGrid& grid) {
  std::vector<RotationMatrix> poses;
  if (spec.is_continuous()) {
    for (const auto& s : symmetry_group(spec)) poses.push_back(r_o * s);
  } else {
    poses = equivalent_rotations(r_o, spec);
  }
  std::vector<std::size_t> out;
  for (const auto& p : poses) {
    const AxisAngle aa = axis_angle_from_matrix(p);
    out.push_back(nearest_neuron(grid, aa));
    out.push_back(nearest_neuron(grid, AxisAngle(-aa.axis, kTwoPi - aa.angle)));
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

std::size_t pick_class(std::span<const std::size_t> classes, OneHotMode mode, Rng& rng) {
  if (classes.empty()) throw EmptyInput("no classes to pick from");
  if (mode == OneHotMode::Canonical) return *std::min_element(classes.begin(), classes.end());
  return classes[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(classes.size()) - 1))];
}

double aligned_squared_distance(const Quat& q, const Quat& q_o) {
  return std::min((q - q_o).squaredNorm(), (q + q_o).squaredNorm());
}

double multi_hypothesis_weight(std::size_t m, double epsilon) {
  if (m < 2) throw InvalidArgument("multiple hypotheses need M >= 2");
  const double md = static_cast<double>(m);
  if (!(epsilon > 0.0 && epsilon < (md - 1.0) / md)) throw InvalidEpsilon("epsilon must lie in (0, (M-1)/M)");
  return epsilon * md / (md - 1.0);
}

HypothesisLoss multi_hypothesis_loss(std::span<const Quat> preds, const Quat& q_o, double epsilon) {
  const double w = multi_hypothesis_weight(preds.size(), epsilon);
  const double m = static_cast<double>(preds.size());
  HypothesisLoss out;
  out.grad.assign(preds.size(), Quat::Zero());
  out.l_min = INFINITY;
  for (std::size_t k = 0; k < preds.size(); ++k) {
    const double l = aligned_squared_distance(preds[k], q_o);
    out.l_avg += l / m;
    if (l < out.l_min) {
      out.l_min = l;
      out.best = k;
    }
    // d/dq of the aligned branch, scaled for the average term
    const Quat target = (preds[k] - q_o).squaredNorm() <= (preds[k] + q_o).squaredNorm() ? q_o : Quat(-q_o);
    out.grad[k] = w / m * 2.0 * (preds[k] - target);
  }
  const Quat& b = preds[out.best];
  const Quat target = (b - q_o).squaredNorm() <= (b + q_o).squaredNorm() ? q_o : Quat(-q_o);
  out.grad[out.best] += (1.0 - w) * 2.0 * (b - target);
  out.value = (1.0 - w) * out.l_min + w * out.l_avg;
  return out;
}

double epsilon_schedule(double progress, double start, double end) {
  const double p = std::clamp(progress, 0.0, 1.0);
  return start + (end - start) * p;
}

namespace {

Quat aligned(const Quat& q, const Quat& ref) { return q.dot(ref) < 0 ? Quat(-q) : q; }

}  // namespace

std::vector<Cluster> mean_shift(std::span<const Quat> preds, const MeanShiftConfig& cfg) {
  if (preds.empty()) throw EmptyInput("mean shift needs at least one quaternion");
  if (!(cfg.bandwidth > 0)) throw InvalidArgument("bandwidth must be positive");
  std::vector<Quat> pts;
  for (const auto& q : preds) {
    const double n = q.norm();
    if (!(n > 0)) throw DegenerateInput("zero quaternion");
    pts.push_back(q / n);
  }
  const double inv2h2 = 1.0 / (2.0 * cfg.bandwidth * cfg.bandwidth);
  std::vector<Quat> modes = pts;
  for (auto& x : modes) {
    for (int it = 0; it < cfg.iterations; ++it) {
      Quat acc = Quat::Zero();
      for (const auto& p : pts) {
        const double d2 = aligned_squared_distance(p, x);
        acc += std::exp(-d2 * inv2h2) * aligned(p, x);
      }
      x = acc.normalized();
    }
  }
  std::vector<Cluster> clusters;
  std::vector<Quat> reps;
  for (std::size_t i = 0; i < modes.size(); ++i) {
    std::size_t c = 0;
    while (c < reps.size() && std::sqrt(aligned_squared_distance(modes[i], reps[c])) > cfg.merge) ++c;
    if (c == reps.size()) {
      reps.push_back(modes[i]);
      clusters.push_back({});
    }
    clusters[c].members.push_back(i);
  }
  for (std::size_t c = 0; c < clusters.size(); ++c) {
    Quat acc = Quat::Zero();
    for (std::size_t i : clusters[c].members) acc += aligned(pts[i], reps[c]);
    clusters[c].mean = acc.normalized();
  }
  return clusters;
}

RotationMatrix mean_shift_decode(std::span<const Quat> preds, const MeanShiftConfig& cfg) {
  const auto clusters = mean_shift(preds, cfg);
  std::size_t best = 0;
  for (std::size_t c = 1; c < clusters.size(); ++c) {
    if (clusters[c].members.size() > clusters[best].members.size()) best = c;
  }
  const Quat& q = clusters[best].mean;
  return matrix_from_quaternion(UnitQuaternion(q[0], q[1], q[2], q[3]));
}

}  // namespace popcode::baselines
