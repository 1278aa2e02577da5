#pragma once

// Symmetry-aware pose errors and recall-rate accuracies. Translation is
// always the ground truth; only rotations are compared.

#include <array>
#include <iosfwd>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "popcode/geometry.hpp"
#include "popcode/mesh.hpp"

namespace popcode::metrics {

struct Camera {
  double fx = 500.0;
  double fy = 500.0;
  double cx = 64.0;
  double cy = 64.0;
  int width = 128;
  int height = 128;

  void validate() const;
};

/// Depth in mm per pixel, row-major; 0 means no surface.
struct DepthMap {
  int width = 0;
  int height = 0;
  std::vector<double> depth;

  DepthMap() = default;
  DepthMap(int w, int h) : width(w), height(h), depth(static_cast<std::size_t>(w) * h, 0.0) {}
  double& at(int col, int row) { return depth[static_cast<std::size_t>(row) * width + col]; }
  double at(int col, int row) const { return depth[static_cast<std::size_t>(row) * width + col]; }
};

struct PoseEstimate {
  RotationMatrix R;
  Vec3 t = Vec3::Zero();
};

inline constexpr int kThresholdSteps = 10;
inline constexpr double kThresholdStep = 0.05;
inline constexpr double kVsdTau = 20.0;          // mm, for the e_VSD < 0.3 variant
inline constexpr double kVsdTheta = 0.3;
inline constexpr double kAdiFraction = 0.05;
inline constexpr double kInfiniteTau = std::numeric_limits<double>::infinity();

// Group used inside min-over-symmetries: continuous symmetries are sampled
// at 360 rotations.
std::vector<RotationMatrix> evaluation_group(const SymmetrySpec& spec);

// min_S max_x |R_hat x - R_o S x|
double mssd_error(const RotationMatrix& r_hat, const RotationMatrix& r_o, std::span<const RotationMatrix> group,
                  const TriMesh& mesh);
// min_S max_x |P(R_hat x + t) - P(R_o S x + t)| in pixels. Throws BehindCamera.
double mspd_error(const RotationMatrix& r_hat, const RotationMatrix& r_o, const Vec3& t,
                  std::span<const RotationMatrix> group, const TriMesh& mesh, const Camera& cam);
// avg_x min_y |R_hat y - R_o x|
double adi_error(const RotationMatrix& r_hat, const RotationMatrix& r_o, const TriMesh& mesh);

// Mean recall over thresholds k * 0.05 * diameter, k = 1..10. Throws EmptyInput.
double mssd_accuracy(std::span<const double> errors, double diameter);
// Mean recall over thresholds k * 5w/640 px.
double mspd_accuracy(std::span<const double> errors, double image_width);
// Fraction of errors below 0.05 * diameter.
double adi_accuracy(std::span<const double> errors, double diameter);
// Fraction of values strictly below the threshold.
double recall(std::span<const double> errors, double threshold);

// Z-buffer rendering of the posed mesh. Pixel (c, r) is sampled at
// (c + 0.5, r + 0.5) with the origin in the top-left corner. Triangles with
// a vertex at z <= 1e-9 are skipped.
DepthMap render_depth(const TriMesh& mesh, const PoseEstimate& pose, const Camera& cam);

// Mismatch fraction over the union of visible pixels; 0 for an empty union.
// tau may be kInfiniteTau. Throws DimensionMismatch.
double vsd_error(const DepthMap& d_hat, const DepthMap& d_o, double tau);
// 1 - e_VSD(tau = inf)
double vss(const DepthMap& d_hat, const DepthMap& d_o);

struct DepthPair {
  DepthMap estimate;
  DepthMap truth;
};
// e_VSD at tau_k = k * 0.05 * diameter, k = 1..10.
std::array<double, kThresholdSteps> vsd_errors_over_tau(const DepthMap& d_hat, const DepthMap& d_o, double diameter);
// Mean recall over the 10 x 10 (tau, theta) grid. Throws EmptyInput.
double vsd_accuracy(std::span<const DepthPair> pairs, double diameter);
double vsd_accuracy(std::span<const std::array<double, kThresholdSteps>> errors_over_tau);
// Fraction of pairs with e_VSD(tau = 20 mm) < 0.3.
double vsd_lt_03(std::span<const DepthPair> pairs);

// Per-instance report row and the batch evaluation behind `metrics`.
struct InstancePose {
  std::string id;
  RotationMatrix r_o;
  RotationMatrix r_hat;
  Vec3 t = Vec3::Zero();
};
struct MetricRow {
  std::string instance_id;
  double e_mssd = 0.0;
  double e_mspd = 0.0;
  double e_vsd_tau20 = 0.0;
  double e_adi = 0.0;
  double vss = 0.0;
  std::array<double, kThresholdSteps> e_vsd_over_tau{};
};
struct MetricSummary {
  std::size_t count = 0;
  double mssd_accuracy = 0.0;
  double mspd_accuracy = 0.0;
  double vsd_accuracy = 0.0;
  double vsd_lt_03 = 0.0;
  double vss = 0.0;  // mean similarity
  double adi_accuracy = 0.0;
};

// Instances are evaluated in parallel; rows come back in input order.
std::vector<MetricRow> evaluate_instances(std::span<const InstancePose> instances, const TriMesh& mesh,
                                          const SymmetrySpec& symmetry, const Camera& cam);
MetricSummary summarize(std::span<const MetricRow> rows, double diameter, double image_width);

void write_rows_csv(std::ostream& os, std::span<const MetricRow> rows);

// Pose list: instance_id, R_o row-major (9), R_hat row-major (9), t (3).
// Throws FormatError with the offending line number.
std::vector<InstancePose> read_poses_csv(std::istream& is);
void write_poses_csv(std::ostream& os, std::span<const InstancePose> poses);
void write_summary_json(std::ostream& os, const MetricSummary& s);

// Errors of identity perturbed by `angle` about `axis`, for each angle.
struct SweepRow {
  double angle = 0.0;
  MetricRow errors;
  MetricSummary accuracies;
};
std::vector<SweepRow> metric_sensitivity_sweep(const TriMesh& mesh, const Camera& cam, const Vec3& t,
                                               const Vec3& axis, std::span<const double> angles,
                                               const SymmetrySpec& symmetry = SymmetrySpec::none());
void write_sweep_csv(std::ostream& os, std::span<const SweepRow> rows);

}  // namespace popcode::metrics
