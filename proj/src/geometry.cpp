#include "popcode/geometry.hpp"

#include <Eigen/Geometry>
#include <algorithm>
#include <cmath>
#include <string>

#include "popcode/error.hpp"

namespace popcode {

double wrap_two_pi(double angle) {
  double a = std::fmod(angle, kTwoPi);
  if (a < 0.0) a += kTwoPi;
  // fmod of a value just below 0 can round up to exactly 2pi
  if (a >= kTwoPi) a = 0.0;
  return a;
}

double circular_distance(double a, double b) {
  double d = std::fabs(wrap_two_pi(a) - wrap_two_pi(b));
  return d > kPi ? kTwoPi - d : d;
}

AxisAngle::AxisAngle(const Vec3& ax, double ang) {
  const double n = ax.norm();
  if (!(n > 1e-300) || !std::isfinite(n)) throw DegenerateInput("axis-angle: zero or non-finite axis");
  axis = ax / n;
  angle = wrap_two_pi(ang);
}

RotationMatrix::RotationMatrix(const Mat3& m) : m_(m) {
  if (!m.allFinite()) throw DegenerateInput("rotation matrix: non-finite entries");
  const double ortho = (m.transpose() * m - Mat3::Identity()).cwiseAbs().maxCoeff();
  const double det = m.determinant();
  if (ortho > kTolerance || std::fabs(det - 1.0) > kTolerance) {
    throw DegenerateInput("rotation matrix: not orthonormal with det +1 (orthogonality error " +
                          std::to_string(ortho) + ", det " + std::to_string(det) + ")");
  }
}

RotationMatrix RotationMatrix::random(Rng& rng) {
  for (;;) {
    const double w = rng.normal(), x = rng.normal(), y = rng.normal(), z = rng.normal();
    if (w * w + x * x + y * y + z * z > 1e-12) return matrix_from_quaternion(UnitQuaternion(w, x, y, z));
  }
}

UnitQuaternion::UnitQuaternion(double w_, double x_, double y_, double z_) {
  const double n = std::sqrt(w_ * w_ + x_ * x_ + y_ * y_ + z_ * z_);
  if (!(n > 1e-300) || !std::isfinite(n)) throw DegenerateInput("quaternion: zero or non-finite");
  w = w_ / n;
  x = x_ / n;
  y = y_ / n;
  z = z_ / n;
}

UnitQuaternion UnitQuaternion::operator-() const {
  UnitQuaternion q;
  q.w = -w;
  q.x = -x;
  q.y = -y;
  q.z = -z;
  return q;
}

UnitQuaternion UnitQuaternion::operator*(const UnitQuaternion& o) const {
  return UnitQuaternion(w * o.w - x * o.x - y * o.y - z * o.z,
                        w * o.x + x * o.w + y * o.z - z * o.y,
                        w * o.y - x * o.z + y * o.w + z * o.x,
                        w * o.z + x * o.y - y * o.x + z * o.w);
}

SymmetrySpec SymmetrySpec::discrete(int order, const Vec3& axis) {
  if (order < 2) throw InvalidArgument("discrete symmetry needs order >= 2");
  const double n = axis.norm();
  if (!(n > 1e-12)) throw InvalidArgument("symmetry axis must be non-zero");
  SymmetrySpec s;
  s.kind = Kind::Discrete;
  s.order = order;
  s.axis = axis / n;
  return s;
}

SymmetrySpec SymmetrySpec::continuous(const Vec3& axis) {
  const double n = axis.norm();
  if (!(n > 1e-12)) throw InvalidArgument("symmetry axis must be non-zero");
  SymmetrySpec s;
  s.kind = Kind::Continuous;
  s.order = 0;
  s.axis = axis / n;
  return s;
}

RotationMatrix matrix_from_axis_angle(const AxisAngle& aa) {
  const Vec3& k = aa.axis;
  const double c = std::cos(aa.angle), s = std::sin(aa.angle), t = 1.0 - c;
  Mat3 m;
  m << t * k.x() * k.x() + c, t * k.x() * k.y() - s * k.z(), t * k.x() * k.z() + s * k.y(),
      t * k.x() * k.y() + s * k.z(), t * k.y() * k.y() + c, t * k.y() * k.z() - s * k.x(),
      t * k.x() * k.z() - s * k.y(), t * k.y() * k.z() + s * k.x(), t * k.z() * k.z() + c;
  return RotationMatrix::trusted(m);
}

AxisAngle axis_angle_from_matrix(const RotationMatrix& rot) {
  const Mat3& r = rot.matrix();
  const Vec3 skew(r(2, 1) - r(1, 2), r(0, 2) - r(2, 0), r(1, 0) - r(0, 1));
  const double sin_angle = 0.5 * skew.norm();
  const double cos_angle = std::clamp(0.5 * (r.trace() - 1.0), -1.0, 1.0);
  const double angle = std::atan2(sin_angle, cos_angle);

  AxisAngle out;
  if (angle < 1e-12) {
    out.axis = Vec3::UnitZ();
    out.angle = 0.0;
    return out;
  }
  if (cos_angle >= 0.0) {
    out.axis = skew.normalized();
  } else {
    // (R + R^T)/2 = cos I + (1 - cos) a a^T; read a from the largest diagonal
    // entry, which is stable up to and including angle = pi.
    const Mat3 outer = (0.5 * (r + r.transpose()) - cos_angle * Mat3::Identity()) / (1.0 - cos_angle);
    int k = 0;
    outer.diagonal().maxCoeff(&k);
    Vec3 a = outer.col(k) / std::sqrt(std::max(outer(k, k), 1e-300));
    if (a.dot(skew) < 0.0) a = -a;
    out.axis = a.normalized();
  }
  out.angle = angle;
  return out;
}

RotationMatrix matrix_from_quaternion(const UnitQuaternion& q) {
  const Eigen::Quaterniond eq(q.w, q.x, q.y, q.z);
  return RotationMatrix::trusted(eq.toRotationMatrix());
}

UnitQuaternion quaternion_from_matrix(const RotationMatrix& r) {
  const Eigen::Quaterniond eq(r.matrix());
  return UnitQuaternion(eq.w(), eq.x(), eq.y(), eq.z());
}

RotationMatrix rotation_from_r6(const std::array<double, 6>& v) {
  const Vec3 a(v[0], v[1], v[2]);
  const Vec3 b(v[3], v[4], v[5]);
  const double na = a.norm(), nb = b.norm();
  if (!(na >= 1e-9)) throw DegenerateInput("r6: first column has zero norm");
  if (!(nb >= 1e-9) || std::fabs(a.dot(b)) / (na * nb) > 1.0 - 1e-9) {
    throw DegenerateInput("r6: columns are parallel");
  }
  const Vec3 c1 = a / na;
  const Vec3 c2 = (b - c1.dot(b) * c1).normalized();
  const Vec3 c3 = c1.cross(c2);
  Mat3 m;
  m.col(0) = c1;
  m.col(1) = c2;
  m.col(2) = c3;
  return RotationMatrix::trusted(m);
}

double geodesic_angle(const RotationMatrix& a, const RotationMatrix& b) {
  // atan2 of the sine and cosine parts equals arccos((tr - 1) / 2) but keeps
  // full precision for nearly identical rotations.
  const Mat3 d = a.matrix().transpose() * b.matrix();
  const double s = 0.5 * Vec3(d(2, 1) - d(1, 2), d(0, 2) - d(2, 0), d(1, 0) - d(0, 1)).norm();
  const double c = std::clamp(0.5 * (d.trace() - 1.0), -1.0, 1.0);
  return std::atan2(s, c);
}

RotationMatrix rotation_z(double angle) { return matrix_from_axis_angle(AxisAngle(Vec3::UnitZ(), angle)); }

std::vector<RotationMatrix> symmetry_group(const SymmetrySpec& spec, int samples) {
  switch (spec.kind) {
    case SymmetrySpec::Kind::None:
      return {RotationMatrix::identity()};
    case SymmetrySpec::Kind::Discrete: {
      std::vector<RotationMatrix> out;
      out.reserve(spec.order);
      out.push_back(RotationMatrix::identity());
      for (int j = 1; j < spec.order; ++j) {
        out.push_back(matrix_from_axis_angle(AxisAngle(spec.axis, kTwoPi * j / spec.order)));
      }
      return out;
    }
    case SymmetrySpec::Kind::Continuous: {
      if (samples < 1) throw InvalidCount("continuous symmetry needs samples >= 1");
      std::vector<RotationMatrix> out;
      out.reserve(samples);
      out.push_back(RotationMatrix::identity());
      for (int j = 1; j < samples; ++j) {
        out.push_back(matrix_from_axis_angle(AxisAngle(spec.axis, kTwoPi * j / samples)));
      }
      return out;
    }
  }
  return {RotationMatrix::identity()};
}

std::vector<RotationMatrix> equivalent_rotations(const RotationMatrix& r_o, const SymmetrySpec& spec) {
  if (spec.is_continuous()) {
    throw ContinuousSymmetry("continuous symmetry: use the axis-only code path");
  }
  std::vector<RotationMatrix> out;
  for (const auto& s : symmetry_group(spec)) out.push_back(r_o * s);
  return out;
}

}  // namespace popcode
