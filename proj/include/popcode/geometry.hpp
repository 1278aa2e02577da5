#pragma once

#include <Eigen/Core>
#include <array>
#include <vector>

#include "popcode/rng.hpp"

namespace popcode {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kTwoPi = 2.0 * kPi;

inline double deg2rad(double deg) { return deg * kPi / 180.0; }
inline double rad2deg(double rad) { return rad * 180.0 / kPi; }

// Wraps an angle into [0, 2pi).
double wrap_two_pi(double angle);
// Shortest distance between two angles on the circle, in [0, pi].
double circular_distance(double a, double b);

/// Unit rotation axis and an angle in [0, 2pi).
struct AxisAngle {
  Vec3 axis = Vec3::UnitZ();
  double angle = 0.0;

  AxisAngle() = default;
  // Normalizes `axis` and wraps `angle`; throws DegenerateInput for a zero axis.
  AxisAngle(const Vec3& axis, double angle);
};

/// Proper rotation: orthonormal 3x3 with det = +1.
class RotationMatrix {
 public:
  static constexpr double kTolerance = 1e-9;

  RotationMatrix() : m_(Mat3::Identity()) {}
  // Throws DegenerateInput when `m` is not a rotation within kTolerance.
  explicit RotationMatrix(const Mat3& m);

  static RotationMatrix identity() { return RotationMatrix(); }
  // Skips validation; only for results of operations that preserve SO(3).
  static RotationMatrix trusted(const Mat3& m) {
    RotationMatrix r;
    r.m_ = m;
    return r;
  }
  // Uniformly distributed rotation (via a normalized Gaussian quaternion).
  static RotationMatrix random(Rng& rng);

  const Mat3& matrix() const { return m_; }
  double operator()(int r, int c) const { return m_(r, c); }
  Vec3 column(int c) const { return m_.col(c); }
  RotationMatrix transpose() const { return trusted(m_.transpose()); }
  RotationMatrix operator*(const RotationMatrix& o) const { return trusted(m_ * o.m_); }
  Vec3 operator*(const Vec3& v) const { return m_ * v; }

 private:
  Mat3 m_;
};

struct UnitQuaternion {
  double w = 1.0, x = 0.0, y = 0.0, z = 0.0;

  UnitQuaternion() = default;
  // Normalizes; throws DegenerateInput for a zero quaternion.
  UnitQuaternion(double w, double x, double y, double z);

  Eigen::Vector4d vector() const { return {w, x, y, z}; }
  double dot(const UnitQuaternion& o) const { return w * o.w + x * o.x + y * o.y + z * o.z; }
  UnitQuaternion operator-() const;
  UnitQuaternion operator*(const UnitQuaternion& o) const;
};

struct SymmetrySpec {
  enum class Kind { None, Discrete, Continuous };

  Kind kind = Kind::None;
  int order = 1;
  Vec3 axis = Vec3::UnitZ();

  static SymmetrySpec none() { return {}; }
  // Throws InvalidArgument for order < 2 or a zero axis.
  static SymmetrySpec discrete(int order, const Vec3& axis);
  static SymmetrySpec continuous(const Vec3& axis);

  bool is_continuous() const { return kind == Kind::Continuous; }
};

inline constexpr int kContinuousSamples = 360;

RotationMatrix matrix_from_axis_angle(const AxisAngle& aa);
// Canonical angle in [0, pi]; zero rotation maps to axis (0,0,1).
AxisAngle axis_angle_from_matrix(const RotationMatrix& r);

RotationMatrix matrix_from_quaternion(const UnitQuaternion& q);
UnitQuaternion quaternion_from_matrix(const RotationMatrix& r);

// Gram-Schmidt on two stacked columns (v[0..2], v[3..5]).
RotationMatrix rotation_from_r6(const std::array<double, 6>& v);

double geodesic_angle(const RotationMatrix& a, const RotationMatrix& b);

// Rotation by `angle` about the coordinate axis z.
RotationMatrix rotation_z(double angle);

std::vector<RotationMatrix> symmetry_group(const SymmetrySpec& spec,
                                           int samples = kContinuousSamples);

// {R_o * S_k} over the symmetry group; throws ContinuousSymmetry for
// continuous specs (those go through the axis-only code).
std::vector<RotationMatrix> equivalent_rotations(const RotationMatrix& r_o,
                                                 const SymmetrySpec& spec);

}  // namespace popcode
