#pragma once

#include <cstddef>
#include <iosfwd>
#include <vector>

#include "popcode/geometry.hpp"

namespace popcode {

/// Preferred axes of the axis neurons: a Fibonacci lattice on the unit sphere.
struct SphereLattice {
  std::vector<Vec3> axes;

  std::size_t size() const { return axes.size(); }
  // Index of the axis with the smallest angular distance; ties -> lowest index.
  std::size_t nearest(const Vec3& unit_axis) const;
  // Angular distance from each point to its nearest neighbour.
  std::vector<double> nearest_neighbor_gaps() const;
};

/// Preferred rotation angles: angles[j] = 2 pi j / m.
struct AngleRing {
  std::vector<double> angles;

  std::size_t size() const { return angles.size(); }
  double spacing() const { return kTwoPi / static_cast<double>(angles.size()); }
  // Ring position closest to `angle` on the circle; ties -> lowest index.
  std::size_t nearest(double angle) const;
};

// Throws InvalidCount for n < 2.
SphereLattice fibonacci_sphere(std::size_t n);
// Throws InvalidCount for m < 1.
AngleRing angle_ring(std::size_t m);

/// Product of a sphere lattice and an angle ring. Neuron i sits at axis
/// a = i / m and angle b = i % m, i.e. i = a * m + b. Every serialized code
/// depends on this layout.
class NeuronGrid {
 public:
  NeuronGrid(SphereLattice sphere, AngleRing ring);
  NeuronGrid(std::size_t n, std::size_t m) : NeuronGrid(fibonacci_sphere(n), angle_ring(m)) {}

  const SphereLattice& sphere() const { return sphere_; }
  const AngleRing& ring() const { return ring_; }
  std::size_t axis_count() const { return sphere_.size(); }
  std::size_t angle_count() const { return ring_.size(); }
  std::size_t size() const { return sphere_.size() * ring_.size(); }

  std::size_t index(std::size_t axis_index, std::size_t angle_index) const {
    return axis_index * ring_.size() + angle_index;
  }
  std::size_t axis_index(std::size_t i) const { return i / ring_.size(); }
  std::size_t angle_index(std::size_t i) const { return i % ring_.size(); }
  const Vec3& preferred_axis(std::size_t i) const { return sphere_.axes[axis_index(i)]; }
  double preferred_angle(std::size_t i) const { return ring_.angles[angle_index(i)]; }
  AxisAngle preferred(std::size_t i) const;

 private:
  SphereLattice sphere_;
  AngleRing ring_;
};

// argmin over neurons of (d_theta^2 + d_phi^2); ties -> lowest index.
std::size_t nearest_neuron(const NeuronGrid& grid, const AxisAngle& aa);

// CSV: index,axis_x,axis_y,axis_z,angle_rad in grid index order.
void write_lattice_csv(std::ostream& os, const NeuronGrid& grid);

}  // namespace popcode
