#pragma once

// Comparison heads: single variable (R6 columns or a symmetry axis), one-hot
// classification over the neuron grid, and multiple quaternion hypotheses.

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "popcode/geometry.hpp"
#include "popcode/lattice.hpp"
#include "popcode/rng.hpp"

namespace popcode::baselines {

// Continuous symmetry: the symmetry axis in object coordinates rotated by
// R_o (3 values). Otherwise the first two columns of R_o (6 values).
std::vector<double> single_variable_target(const RotationMatrix& r_o, const SymmetrySpec& spec);

struct BranchLoss {
  double value = 0.0;
  std::size_t branch = 0;     // index into the equivalent poses
  std::vector<double> grad;   // d(value)/d(pred), from the chosen branch only
};

// Mean absolute error between `pred` and the target of every equivalent
// pose; the smallest wins (lowest index on ties). Throws DimensionMismatch.
BranchLoss min_symmetry_loss(std::span<const double> pred, const RotationMatrix& r_o, const SymmetrySpec& spec);
RotationMatrix decode_single_variable(std::span<const double> pred);

// Every class index that is a valid answer for R_o: the nearest neuron of
// each equivalent pose and of its double-cover twin, sorted and unique.
// Continuous symmetry is sampled like the evaluation group.
std::vector<std::size_t> one_hot_target(const RotationMatrix& r_o, const SymmetrySpec& spec, const NeuronGrid& grid);

enum class OneHotMode { Sample, Canonical };
// Sample: uniform among the classes; Canonical: the lowest index.
std::size_t pick_class(std::span<const std::size_t> classes, OneHotMode mode, Rng& rng);

using Quat = Eigen::Vector4d;  // (w, x, y, z), not necessarily normalized

// min(|q - q_o|^2, |q + q_o|^2)
double aligned_squared_distance(const Quat& q, const Quat& q_o);

struct HypothesisLoss {
  double value = 0.0;
  double l_min = 0.0;
  double l_avg = 0.0;
  std::size_t best = 0;
  std::vector<Quat> grad;
};

// (1 - e M/(M-1)) L_min + e M/(M-1) L_avg. Throws InvalidArgument for
// M < 2 and InvalidEpsilon unless 0 < e < (M-1)/M.
HypothesisLoss multi_hypothesis_loss(std::span<const Quat> preds, const Quat& q_o, double epsilon);
double multi_hypothesis_weight(std::size_t m, double epsilon);

// Linear from `start` to `end` as progress goes from 0 to 1.
double epsilon_schedule(double progress, double start = 0.05, double end = 0.01);

struct MeanShiftConfig {
  double bandwidth = 0.1;  // chord distance between unit quaternions
  int iterations = 20;
  double merge = 0.02;
};

struct Cluster {
  Quat mean;
  std::vector<std::size_t> members;
};

// Modes of a Gaussian kernel density under the sign-aligned distance. The
// clusters come out in order of their lowest member index.
std::vector<Cluster> mean_shift(std::span<const Quat> preds, const MeanShiftConfig& cfg = {});
// Mean of the largest cluster; ties go to the cluster seen first.
RotationMatrix mean_shift_decode(std::span<const Quat> preds, const MeanShiftConfig& cfg = {});

}  // namespace popcode::baselines
