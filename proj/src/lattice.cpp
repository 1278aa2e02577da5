#include "popcode/lattice.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <ostream>

#include "popcode/error.hpp"

namespace popcode {

namespace {

double axis_distance(const Vec3& a, const Vec3& b) { return std::acos(std::clamp(a.dot(b), -1.0, 1.0)); }

}  // namespace

std::size_t SphereLattice::nearest(const Vec3& unit_axis) const {
  // acos is monotone decreasing, so the largest dot product is the nearest.
  std::size_t best = 0;
  double best_dot = -std::numeric_limits<double>::infinity();
  for (std::size_t a = 0; a < axes.size(); ++a) {
    const double d = axes[a].dot(unit_axis);
    if (d > best_dot) {
      best_dot = d;
      best = a;
    }
  }
  return best;
}

std::vector<double> SphereLattice::nearest_neighbor_gaps() const {
  std::vector<double> gaps(axes.size(), kPi);
  for (std::size_t a = 0; a < axes.size(); ++a) {
    double best = -1.0;
    for (std::size_t b = 0; b < axes.size(); ++b) {
      if (a != b) best = std::max(best, axes[a].dot(axes[b]));
    }
    gaps[a] = std::acos(std::clamp(best, -1.0, 1.0));
  }
  return gaps;
}

std::size_t AngleRing::nearest(double angle) const {
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < angles.size(); ++j) {
    const double d = circular_distance(angle, angles[j]);
    if (d < best_d) {
      best_d = d;
      best = j;
    }
  }
  return best;
}

SphereLattice fibonacci_sphere(std::size_t n) {
  if (n < 2) throw InvalidCount("fibonacci_sphere needs n >= 2");
  const double golden = 0.5 * (1.0 + std::sqrt(5.0));
  const double step = kTwoPi * (1.0 - 1.0 / golden);
  SphereLattice out;
  out.axes.reserve(n);
  for (std::size_t a = 0; a < n; ++a) {
    const double z = 1.0 - 2.0 * (static_cast<double>(a) + 0.5) / static_cast<double>(n);
    const double rho = std::sqrt(std::max(0.0, 1.0 - z * z));
    const double lon = step * static_cast<double>(a);
    out.axes.emplace_back(rho * std::cos(lon), rho * std::sin(lon), z);
  }
  return out;
}

AngleRing angle_ring(std::size_t m) {
  if (m < 1) throw InvalidCount("angle_ring needs m >= 1");
  AngleRing ring;
  ring.angles.resize(m);
  for (std::size_t j = 0; j < m; ++j) ring.angles[j] = kTwoPi * static_cast<double>(j) / static_cast<double>(m);
  return ring;
}

NeuronGrid::NeuronGrid(SphereLattice sphere, AngleRing ring) : sphere_(std::move(sphere)), ring_(std::move(ring)) {
  if (sphere_.size() < 1 || ring_.size() < 1) throw InvalidCount("neuron grid needs a non-empty sphere and ring");
}

AxisAngle NeuronGrid::preferred(std::size_t i) const {
  AxisAngle aa;
  aa.axis = preferred_axis(i);
  aa.angle = preferred_angle(i);
  return aa;
}

std::size_t nearest_neuron(const NeuronGrid& grid, const AxisAngle& aa) {
  // The cost separates into an axis term and an angle term, so the joint
  // argmin is the pair of per-factor argmins. Lowest-index tie-breaking on
  // each factor gives the lowest joint index because i = a * m + b.
  std::size_t best_a = 0;
  double best_theta = std::numeric_limits<double>::infinity();
  const auto& axes = grid.sphere().axes;
  for (std::size_t a = 0; a < axes.size(); ++a) {
    const double t = axis_distance(aa.axis, axes[a]);
    if (t * t < best_theta) {
      best_theta = t * t;
      best_a = a;
    }
  }
  return grid.index(best_a, grid.ring().nearest(aa.angle));
}

void write_lattice_csv(std::ostream& os, const NeuronGrid& grid) {
  os << "index,axis_x,axis_y,axis_z,angle_rad\n";
  os << std::setprecision(17);
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const Vec3& a = grid.preferred_axis(i);
    os << i << ',' << a.x() << ',' << a.y() << ',' << a.z() << ',' << grid.preferred_angle(i) << '\n';
  }
}

}  // namespace popcode
