#include "popcode/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>

#include <Eigen/LU>
#include <Eigen/SVD>

#include "json.hpp"
#include "popcode/error.hpp"
#include "popcode/kernels.hpp"

namespace popcode::metrics {

void Camera::validate() const {
  if (!(fx > 0.0) || !(fy > 0.0)) throw InvalidArgument("camera: focal lengths must be positive");
  if (width < 1 || height < 1) throw InvalidArgument("camera: image size must be at least 1x1");
}

std::vector<RotationMatrix> evaluation_group(const SymmetrySpec& spec) {
  return symmetry_group(spec, kContinuousSamples);
}

namespace {

std::vector<Vec3> posed(const RotationMatrix& r, const TriMesh& mesh) {
  std::vector<Vec3> out;
  out.reserve(mesh.vertices.size());
  for (const Vec3& v : mesh.vertices) out.push_back(r * v);
  return out;
}

Eigen::Vector2d project(const Camera& cam, const Vec3& p) {
  return {cam.fx * p.x() / p.z() + cam.cx, cam.fy * p.y() / p.z() + cam.cy};
}

double mean_recall(std::span<const double> errors, double step) {
  if (errors.empty()) throw EmptyInput("accuracy of an empty error list");
  double total = 0.0;
  for (int k = 1; k <= kThresholdSteps; ++k) total += recall(errors, k * step);
  return total / kThresholdSteps;
}

}  // namespace

double mssd_error(const RotationMatrix& r_hat, const RotationMatrix& r_o, std::span<const RotationMatrix> group,
                  const TriMesh& mesh) {
  if (group.empty() || mesh.vertices.empty()) throw EmptyInput("mssd: empty group or mesh");
  const auto est = posed(r_hat, mesh);
  double best = std::numeric_limits<double>::infinity();
  for (const auto& s : group) {
    const RotationMatrix gt = r_o * s;
    double worst = 0.0;
    for (std::size_t i = 0; i < est.size(); ++i) worst = std::max(worst, (est[i] - gt * mesh.vertices[i]).norm());
    best = std::min(best, worst);
  }
  return best;
}

double mspd_error(const RotationMatrix& r_hat, const RotationMatrix& r_o, const Vec3& t,
                  std::span<const RotationMatrix> group, const TriMesh& mesh, const Camera& cam) {
  if (group.empty() || mesh.vertices.empty()) throw EmptyInput("mspd: empty group or mesh");
  cam.validate();
  std::vector<Eigen::Vector2d> est;
  est.reserve(mesh.vertices.size());
  for (const Vec3& v : mesh.vertices) {
    const Vec3 p = r_hat * v + t;
    if (!(p.z() > 0.0)) throw BehindCamera("mspd: estimated pose puts a vertex behind the camera");
    est.push_back(project(cam, p));
  }
  double best = std::numeric_limits<double>::infinity();
  for (const auto& s : group) {
    const RotationMatrix gt = r_o * s;
    double worst = 0.0;
    for (std::size_t i = 0; i < est.size(); ++i) {
      const Vec3 p = gt * mesh.vertices[i] + t;
      if (!(p.z() > 0.0)) throw BehindCamera("mspd: ground-truth pose puts a vertex behind the camera");
      worst = std::max(worst, (est[i] - project(cam, p)).norm());
    }
    best = std::min(best, worst);
  }
  return best;
}

double adi_error(const RotationMatrix& r_hat, const RotationMatrix& r_o, const TriMesh& mesh) {
  if (mesh.vertices.empty()) throw EmptyInput("adi: empty mesh");
  const auto est = posed(r_hat, mesh);
  const auto gt = posed(r_o, mesh);
  return kernels::parallel::mean_nearest_distance(est, gt);
}

double recall(std::span<const double> errors, double threshold) {
  if (errors.empty()) throw EmptyInput("recall of an empty error list");
  std::size_t hits = 0;
  for (double e : errors) hits += e < threshold ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(errors.size());
}

double mssd_accuracy(std::span<const double> errors, double diameter) {
  if (!(diameter > 0.0)) throw InvalidArgument("mssd accuracy: diameter must be positive");
  return mean_recall(errors, kThresholdStep * diameter);
}

double mspd_accuracy(std::span<const double> errors, double image_width) {
  if (!(image_width > 0.0)) throw InvalidArgument("mspd accuracy: image width must be positive");
  return mean_recall(errors, 5.0 * image_width / 640.0);
}

double adi_accuracy(std::span<const double> errors, double diameter) {
  if (!(diameter > 0.0)) throw InvalidArgument("adi accuracy: diameter must be positive");
  return recall(errors, kAdiFraction * diameter);
}

DepthMap render_depth(const TriMesh& mesh, const PoseEstimate& pose, const Camera& cam) {
  cam.validate();
  constexpr double kNear = 1e-9;
  DepthMap map(cam.width, cam.height);
  std::vector<Vec3> cam_pts;
  cam_pts.reserve(mesh.vertices.size());
  for (const Vec3& v : mesh.vertices) cam_pts.push_back(pose.R * v + pose.t);

  for (const auto& tri : mesh.triangles) {
    const Vec3 &p0 = cam_pts[tri[0]], &p1 = cam_pts[tri[1]], &p2 = cam_pts[tri[2]];
    if (p0.z() <= kNear || p1.z() <= kNear || p2.z() <= kNear) continue;
    const Eigen::Vector2d s0 = project(cam, p0), s1 = project(cam, p1), s2 = project(cam, p2);
    const double area = (s1.x() - s0.x()) * (s2.y() - s0.y()) - (s2.x() - s0.x()) * (s1.y() - s0.y());
    if (std::fabs(area) < 1e-12) continue;

    const int c_lo = std::max(0, static_cast<int>(std::floor(std::min({s0.x(), s1.x(), s2.x()}) - 0.5)));
    const int c_hi = std::min(cam.width - 1, static_cast<int>(std::ceil(std::max({s0.x(), s1.x(), s2.x()}) - 0.5)));
    const int r_lo = std::max(0, static_cast<int>(std::floor(std::min({s0.y(), s1.y(), s2.y()}) - 0.5)));
    const int r_hi = std::min(cam.height - 1, static_cast<int>(std::ceil(std::max({s0.y(), s1.y(), s2.y()}) - 0.5)));
    const double inv_z0 = 1.0 / p0.z(), inv_z1 = 1.0 / p1.z(), inv_z2 = 1.0 / p2.z();

    for (int r = r_lo; r <= r_hi; ++r) {
      const double py = r + 0.5;
      for (int c = c_lo; c <= c_hi; ++c) {
        const double px = c + 0.5;
        // barycentric weights from signed sub-triangle areas
        const double w0 = ((s1.x() - px) * (s2.y() - py) - (s2.x() - px) * (s1.y() - py)) / area;
        const double w1 = ((s2.x() - px) * (s0.y() - py) - (s0.x() - px) * (s2.y() - py)) / area;
        const double w2 = 1.0 - w0 - w1;
        if (w0 < 0.0 || w1 < 0.0 || w2 < 0.0) continue;
        // 1/z is affine in screen space
        const double z = 1.0 / (w0 * inv_z0 + w1 * inv_z1 + w2 * inv_z2);
        double& cur = map.at(c, r);
        if (cur == 0.0 || z < cur) cur = z;
      }
    }
  }
  return map;
}

double vsd_error(const DepthMap& d_hat, const DepthMap& d_o, double tau) {
  if (d_hat.width != d_o.width || d_hat.height != d_o.height) {
    throw DimensionMismatch("vsd: depth maps differ in size");
  }
  std::size_t uni = 0, bad = 0;
  for (std::size_t i = 0; i < d_hat.depth.size(); ++i) {
    const bool a = d_hat.depth[i] > 0.0, b = d_o.depth[i] > 0.0;
    if (!a && !b) continue;
    ++uni;
    if (!(a && b && std::fabs(d_hat.depth[i] - d_o.depth[i]) < tau)) ++bad;
  }
  return uni == 0 ? 0.0 : static_cast<double>(bad) / static_cast<double>(uni);
}

double vss(const DepthMap& d_hat, const DepthMap& d_o) { return 1.0 - vsd_error(d_hat, d_o, kInfiniteTau); }

std::array<double, kThresholdSteps> vsd_errors_over_tau(const DepthMap& d_hat, const DepthMap& d_o,
                                                        double diameter) {
  std::array<double, kThresholdSteps> out{};
  for (int k = 1; k <= kThresholdSteps; ++k) out[k - 1] = vsd_error(d_hat, d_o, k * kThresholdStep * diameter);
  return out;
}

double vsd_accuracy(std::span<const std::array<double, kThresholdSteps>> errors_over_tau) {
  if (errors_over_tau.empty()) throw EmptyInput("vsd accuracy of an empty batch");
  double total = 0.0;
  std::vector<double> column(errors_over_tau.size());
  for (int k = 0; k < kThresholdSteps; ++k) {
    for (std::size_t i = 0; i < errors_over_tau.size(); ++i) column[i] = errors_over_tau[i][k];
    for (int j = 1; j <= kThresholdSteps; ++j) total += recall(column, j * kThresholdStep);
  }
  return total / (kThresholdSteps * kThresholdSteps);
}

double vsd_accuracy(std::span<const DepthPair> pairs, double diameter) {
  if (!(diameter > 0.0)) throw InvalidArgument("vsd accuracy: diameter must be positive");
  std::vector<std::array<double, kThresholdSteps>> errs;
  errs.reserve(pairs.size());
  for (const auto& p : pairs) errs.push_back(vsd_errors_over_tau(p.estimate, p.truth, diameter));
  return vsd_accuracy(errs);
}

double vsd_lt_03(std::span<const DepthPair> pairs) {
  std::vector<double> errs;
  errs.reserve(pairs.size());
  for (const auto& p : pairs) errs.push_back(vsd_error(p.estimate, p.truth, kVsdTau));
  return recall(errs, kVsdTheta);
}

std::vector<MetricRow> evaluate_instances(std::span<const InstancePose> instances, const TriMesh& mesh,
                                          const SymmetrySpec& symmetry, const Camera& cam) {
  cam.validate();
  const auto group = evaluation_group(symmetry);
  std::vector<MetricRow> rows(instances.size());
  // Exceptions cannot leave an OpenMP region; collect the first one by index.
  std::vector<std::exception_ptr> failures(instances.size());
#pragma omp parallel for schedule(dynamic)
  for (long long i = 0; i < static_cast<long long>(instances.size()); ++i) {
    try {
      const auto& inst = instances[i];
      MetricRow& row = rows[i];
      row.instance_id = inst.id;
      row.e_mssd = mssd_error(inst.r_hat, inst.r_o, group, mesh);
      row.e_mspd = mspd_error(inst.r_hat, inst.r_o, inst.t, group, mesh, cam);
      row.e_adi = adi_error(inst.r_hat, inst.r_o, mesh);
      const DepthMap est = render_depth(mesh, {inst.r_hat, inst.t}, cam);
      const DepthMap gt = render_depth(mesh, {inst.r_o, inst.t}, cam);
      row.e_vsd_tau20 = vsd_error(est, gt, kVsdTau);
      row.vss = vss(est, gt);
      row.e_vsd_over_tau = vsd_errors_over_tau(est, gt, mesh.diameter);
    } catch (...) {
      failures[i] = std::current_exception();
    }
  }
  for (const auto& f : failures) {
    if (f) std::rethrow_exception(f);
  }
  return rows;
}

MetricSummary summarize(std::span<const MetricRow> rows, double diameter, double image_width) {
  if (rows.empty()) throw EmptyInput("no metric rows to summarize");
  std::vector<double> mssd, mspd, adi, vsd20;
  std::vector<std::array<double, kThresholdSteps>> vsd;
  double vss_sum = 0.0;
  for (const auto& r : rows) {
    mssd.push_back(r.e_mssd);
    mspd.push_back(r.e_mspd);
    adi.push_back(r.e_adi);
    vsd20.push_back(r.e_vsd_tau20);
    vsd.push_back(r.e_vsd_over_tau);
    vss_sum += r.vss;
  }
  MetricSummary s;
  s.count = rows.size();
  s.mssd_accuracy = mssd_accuracy(mssd, diameter);
  s.mspd_accuracy = mspd_accuracy(mspd, image_width);
  s.vsd_accuracy = vsd_accuracy(vsd);
  s.vsd_lt_03 = recall(vsd20, kVsdTheta);
  s.vss = vss_sum / static_cast<double>(rows.size());
  s.adi_accuracy = adi_accuracy(adi, diameter);
  return s;
}

void write_rows_csv(std::ostream& os, std::span<const MetricRow> rows) {
  os.precision(17);
  os << "instance_id,e_mssd,e_mspd,e_vsd_tau20,e_adi,vss\n";
  for (const auto& r : rows) {
    os << r.instance_id << ',' << r.e_mssd << ',' << r.e_mspd << ',' << r.e_vsd_tau20 << ',' << r.e_adi << ','
       << r.vss << '\n';
  }
}

namespace {

constexpr const char* kPoseHeader =
    "instance_id,ro00,ro01,ro02,ro10,ro11,ro12,ro20,ro21,ro22,"
    "rh00,rh01,rh02,rh10,rh11,rh12,rh20,rh21,rh22,tx,ty,tz";

void put_matrix(std::ostream& os, const RotationMatrix& r) {
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) os << ',' << r(i, j);
  }
}

// Rounded text input is snapped to the nearest rotation when it is close.
RotationMatrix parse_rotation(const Mat3& m, const std::string& where) {
  if ((m.transpose() * m - Mat3::Identity()).cwiseAbs().maxCoeff() > 1e-5 || m.determinant() < 0) {
    throw FormatError(where + "matrix is not a rotation");
  }
  Eigen::JacobiSVD<Mat3> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  return RotationMatrix(svd.matrixU() * svd.matrixV().transpose());
}

}  // namespace

std::vector<InstancePose> read_poses_csv(std::istream& is) {
  std::string line;
  std::size_t line_no = 0;
  std::vector<InstancePose> out;
  while (std::getline(is, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line_no == 1 && line.rfind("instance_id", 0) == 0) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    const std::string where = "poses line " + std::to_string(line_no) + ": ";
    if (cells.size() != 22) throw FormatError(where + "expected 22 columns, got " + std::to_string(cells.size()));
    double v[21];
    for (int i = 0; i < 21; ++i) {
      std::size_t used = 0;
      try {
        v[i] = std::stod(cells[i + 1], &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used == 0 || used != cells[i + 1].size()) throw FormatError(where + "bad number '" + cells[i + 1] + "'");
    }
    Mat3 ro, rh;
    for (int i = 0; i < 9; ++i) {
      ro(i / 3, i % 3) = v[i];
      rh(i / 3, i % 3) = v[9 + i];
    }
    InstancePose p;
    p.id = cells[0];
    p.r_o = parse_rotation(ro, where);
    p.r_hat = parse_rotation(rh, where);
    p.t = Vec3(v[18], v[19], v[20]);
    out.push_back(p);
  }
  return out;
}

void write_poses_csv(std::ostream& os, std::span<const InstancePose> poses) {
  os.precision(17);
  os << kPoseHeader << '\n';
  for (const auto& p : poses) {
    os << p.id;
    put_matrix(os, p.r_o);
    put_matrix(os, p.r_hat);
    os << ',' << p.t.x() << ',' << p.t.y() << ',' << p.t.z() << '\n';
  }
}

void write_summary_json(std::ostream& os, const MetricSummary& s) {
  const nlohmann::ordered_json j = {
      {"count", s.count},
      {"mssd_accuracy", s.mssd_accuracy},
      {"mspd_accuracy", s.mspd_accuracy},
      {"vsd_accuracy", s.vsd_accuracy},
      {"vsd_lt_03", s.vsd_lt_03},
      {"vss", s.vss},
      {"adi_accuracy", s.adi_accuracy},
  };
  os << j.dump(2) << '\n';
}

std::vector<SweepRow> metric_sensitivity_sweep(const TriMesh& mesh, const Camera& cam, const Vec3& t,
                                               const Vec3& axis, std::span<const double> angles,
                                               const SymmetrySpec& symmetry) {
  std::vector<InstancePose> instances;
  for (double a : angles) {
    InstancePose p;
    p.id = std::to_string(instances.size());
    p.r_o = RotationMatrix::identity();
    p.r_hat = matrix_from_axis_angle(AxisAngle(axis, a));
    p.t = t;
    instances.push_back(p);
  }
  const auto rows = evaluate_instances(instances, mesh, symmetry, cam);
  std::vector<SweepRow> out;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    SweepRow s;
    s.angle = angles[i];
    s.errors = rows[i];
    s.accuracies = summarize(std::span(&rows[i], 1), mesh.diameter, cam.width);
    out.push_back(s);
  }
  return out;
}

void write_sweep_csv(std::ostream& os, std::span<const SweepRow> rows) {
  os.precision(17);
  os << "angle_deg,e_mssd,e_mspd,e_vsd_tau20,e_adi,vss,mssd_accuracy,mspd_accuracy,vsd_accuracy,adi_accuracy\n";
  for (const auto& r : rows) {
    os << rad2deg(r.angle) << ',' << r.errors.e_mssd << ',' << r.errors.e_mspd << ',' << r.errors.e_vsd_tau20 << ','
       << r.errors.e_adi << ',' << r.errors.vss << ',' << r.accuracies.mssd_accuracy << ','
       << r.accuracies.mspd_accuracy << ',' << r.accuracies.vsd_accuracy << ',' << r.accuracies.adi_accuracy << '\n';
  }
}

}  // namespace popcode::metrics
