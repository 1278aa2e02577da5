#pragma once

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <span>
#include <vector>

#include "popcode/geometry.hpp"
#include "popcode/lattice.hpp"

namespace popcode {

struct TuningConfig {
  double sigma = deg2rad(20.0);  // tuning width in radians
};

/// Activations over a full axis x angle grid, in grid index order.
struct PopulationCode {
  std::shared_ptr<const NeuronGrid> grid;
  double sigma = 0.0;
  std::vector<double> activations;
};

/// Activations over the sphere lattice only (objects with a symmetry axis).
struct AxisCode {
  std::shared_ptr<const SphereLattice> sphere;
  double sigma = 0.0;
  std::vector<double> activations;
};

// a_i = exp(-(d_theta_i^2 + d_phi_i^2) / (2 sigma^2))
PopulationCode encode_axis_angle(const AxisAngle& aa, std::shared_ptr<const NeuronGrid> grid,
                                 const TuningConfig& cfg = {});
// Adds one Gaussian peak to `out` (length grid.size()).
void accumulate_axis_angle(const AxisAngle& aa, const NeuronGrid& grid, const TuningConfig& cfg,
                           std::span<double> out);

// Training target: for every symmetry-equivalent pose, the peak at (r, phi)
// plus its double-cover twin (-r, 2pi - phi), summed without clamping.
// Throws ContinuousSymmetry for continuous specs.
PopulationCode target_code(const RotationMatrix& r_o, const SymmetrySpec& spec,
                           std::shared_ptr<const NeuronGrid> grid, const TuningConfig& cfg = {});
// Same, for an explicit list of equivalent poses.
PopulationCode target_code(std::span<const RotationMatrix> equivalents, std::shared_ptr<const NeuronGrid> grid,
                           const TuningConfig& cfg = {});

AxisCode encode_axis_only(const Vec3& axis, std::shared_ptr<const SphereLattice> sphere,
                          const TuningConfig& cfg = {}, bool sign_ambiguous = true);

// Rotation of the most active neuron (lowest index on ties). Throws AllZero
// when every activation is zero.
RotationMatrix decode(const PopulationCode& code);
std::size_t decode_index(std::span<const double> activations);
// Axis of the most active sphere neuron with a seeded uniform random angle.
RotationMatrix decode_axis_only(const AxisCode& code, std::uint64_t rng_seed);

// One-dimensional code over a ring of preferred angles (planar orientation).
std::vector<double> encode_angle(double angle, const AngleRing& ring, const TuningConfig& cfg = {});
void accumulate_angle(double angle, const AngleRing& ring, const TuningConfig& cfg, std::span<double> out);
double decode_angle(std::span<const double> activations, const AngleRing& ring);

// Per axis neuron, the maximum activation over its angle ring.
std::vector<double> max_over_angle(const PopulationCode& code);
// Local maxima on the sphere: values >= rel_threshold * global max that are
// not exceeded by any neighbour within `radius` (ties -> lowest index wins).
std::size_t count_sphere_peaks(std::span<const double> values, const SphereLattice& sphere, double radius,
                               double rel_threshold = 0.5);

// Serialization. Header (n, m, sigma) then activations in grid index order;
// axis-only codes are written with m = 0.
struct CodeHeader {
  std::uint32_t n = 0;
  std::uint32_t m = 0;
  double sigma = 0.0;
};
struct SerializedCode {
  CodeHeader header;
  std::vector<double> activations;
};
void write_code_csv(std::ostream& os, const CodeHeader& h, std::span<const double> activations);
SerializedCode read_code_csv(std::istream& is);
void write_code_binary(std::ostream& os, const CodeHeader& h, std::span<const double> activations);
SerializedCode read_code_binary(std::istream& is);

// Binary PPM (P6) equirectangular projection of per-axis values; blue is
// low, yellow is high.
void write_sphere_heatmap_ppm(std::ostream& os, std::span<const double> axis_values, const SphereLattice& sphere,
                              int width = 360, int height = 180);

}  // namespace popcode
