#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <vector>

#include "popcode/geometry.hpp"

namespace popcode {

/// Triangle mesh in model coordinates (mm).
struct TriMesh {
  std::vector<Vec3> vertices;
  std::vector<std::array<std::uint32_t, 3>> triangles;
  double diameter = 0.0;
};

// Validates indices and fills in the diameter. Throws TooFewVertices for
// fewer than 2 vertices, DegenerateInput for out-of-range indices or a zero
// diameter.
TriMesh make_mesh(std::vector<Vec3> vertices, std::vector<std::array<std::uint32_t, 3>> triangles = {});

// Exact maximum distance over all vertex pairs. Throws TooFewVertices.
double mesh_diameter(const TriMesh& mesh);

// ASCII OBJ subset: `v x y z` and `f i j k` (1-based, negative indices and
// `i/t/n` forms accepted). Faces with more than three vertices are rejected.
TriMesh read_obj(std::istream& is);
TriMesh read_obj(const std::filesystem::path& path);
void write_obj(std::ostream& os, const TriMesh& mesh);

// Simple closed meshes, outward winding, centred on the origin.
TriMesh make_box(double sx, double sy, double sz);
TriMesh make_uv_sphere(double radius, int stacks, int slices);
// Cylinder along z, capped.
TriMesh make_cylinder(double radius, double height, int slices);

}  // namespace popcode
