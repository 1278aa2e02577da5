#include "popcode/mesh.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <string>

#include "popcode/error.hpp"
#include "popcode/kernels.hpp"

namespace popcode {

TriMesh make_mesh(std::vector<Vec3> vertices, std::vector<std::array<std::uint32_t, 3>> triangles) {
  TriMesh mesh;
  mesh.vertices = std::move(vertices);
  mesh.triangles = std::move(triangles);
  for (const auto& tri : mesh.triangles) {
    for (std::uint32_t i : tri) {
      if (i >= mesh.vertices.size()) throw DegenerateInput("mesh: triangle index out of range");
    }
  }
  for (const Vec3& v : mesh.vertices) {
    if (!v.allFinite()) throw DegenerateInput("mesh: non-finite vertex");
  }
  mesh.diameter = mesh_diameter(mesh);
  if (!(mesh.diameter > 0.0)) throw DegenerateInput("mesh: all vertices coincide");
  return mesh;
}

double mesh_diameter(const TriMesh& mesh) {
  if (mesh.vertices.size() < 2) throw TooFewVertices("mesh diameter needs at least 2 vertices");
  return kernels::parallel::max_pairwise_distance(mesh.vertices);
}

namespace {

std::uint32_t parse_face_index(const std::string& token, std::size_t vertex_count, int line) {
  const std::string head = token.substr(0, token.find('/'));
  long long idx = 0;
  try {
    std::size_t used = 0;
    idx = std::stoll(head, &used);
    if (used != head.size()) throw std::invalid_argument(head);
  } catch (const std::exception&) {
    throw FormatError("obj line " + std::to_string(line) + ": bad face index '" + token + "'");
  }
  if (idx < 0) idx += static_cast<long long>(vertex_count) + 1;
  if (idx < 1 || idx > static_cast<long long>(vertex_count)) {
    throw FormatError("obj line " + std::to_string(line) + ": face index out of range");
  }
  return static_cast<std::uint32_t>(idx - 1);
}

}  // namespace

TriMesh read_obj(std::istream& is) {
  std::vector<Vec3> vertices;
  std::vector<std::array<std::uint32_t, 3>> triangles;
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    std::istringstream ls(line);
    std::string tag;
    if (!(ls >> tag) || tag[0] == '#') continue;
    if (tag == "v") {
      double x, y, z;
      if (!(ls >> x >> y >> z)) throw FormatError("obj line " + std::to_string(line_no) + ": bad vertex");
      vertices.emplace_back(x, y, z);
    } else if (tag == "f") {
      std::vector<std::string> tokens;
      for (std::string t; ls >> t;) tokens.push_back(t);
      if (tokens.size() != 3) {
        throw FormatError("obj line " + std::to_string(line_no) + ": only triangular faces are supported");
      }
      triangles.push_back({parse_face_index(tokens[0], vertices.size(), line_no),
                           parse_face_index(tokens[1], vertices.size(), line_no),
                           parse_face_index(tokens[2], vertices.size(), line_no)});
    }
  }
  return make_mesh(std::move(vertices), std::move(triangles));
}

TriMesh read_obj(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw FileNotFound("cannot open mesh " + path.string());
  return read_obj(f);
}

void write_obj(std::ostream& os, const TriMesh& mesh) {
  os.precision(17);
  for (const Vec3& v : mesh.vertices) os << "v " << v.x() << ' ' << v.y() << ' ' << v.z() << '\n';
  for (const auto& t : mesh.triangles) os << "f " << t[0] + 1 << ' ' << t[1] + 1 << ' ' << t[2] + 1 << '\n';
}

TriMesh make_box(double sx, double sy, double sz) {
  std::vector<Vec3> v;
  for (int i = 0; i < 8; ++i) {
    v.emplace_back((i & 1 ? 0.5 : -0.5) * sx, (i & 2 ? 0.5 : -0.5) * sy, (i & 4 ? 0.5 : -0.5) * sz);
  }
  // two triangles per face, counter-clockwise seen from outside
  std::vector<std::array<std::uint32_t, 3>> t = {
      {0, 2, 1}, {1, 2, 3}, {4, 5, 6}, {5, 7, 6},  // -z, +z
      {0, 1, 4}, {1, 5, 4}, {2, 6, 3}, {3, 6, 7},  // -y, +y
      {0, 4, 2}, {2, 4, 6}, {1, 3, 5}, {3, 7, 5},  // -x, +x
  };
  return make_mesh(std::move(v), std::move(t));
}

TriMesh make_uv_sphere(double radius, int stacks, int slices) {
  if (stacks < 2 || slices < 3) throw InvalidCount("uv sphere needs stacks >= 2 and slices >= 3");
  std::vector<Vec3> v;
  v.emplace_back(0, 0, radius);
  for (int i = 1; i < stacks; ++i) {
    const double theta = kPi * i / stacks;
    for (int j = 0; j < slices; ++j) {
      const double phi = kTwoPi * j / slices;
      v.emplace_back(radius * std::sin(theta) * std::cos(phi), radius * std::sin(theta) * std::sin(phi),
                     radius * std::cos(theta));
    }
  }
  v.emplace_back(0, 0, -radius);
  const auto bottom = static_cast<std::uint32_t>(v.size() - 1);
  auto ring = [&](int i, int j) { return static_cast<std::uint32_t>(1 + (i - 1) * slices + (j % slices)); };
  std::vector<std::array<std::uint32_t, 3>> t;
  for (int j = 0; j < slices; ++j) t.push_back({0, ring(1, j), ring(1, j + 1)});
  for (int i = 1; i + 1 < stacks; ++i) {
    for (int j = 0; j < slices; ++j) {
      t.push_back({ring(i, j), ring(i + 1, j), ring(i + 1, j + 1)});
      t.push_back({ring(i, j), ring(i + 1, j + 1), ring(i, j + 1)});
    }
  }
  for (int j = 0; j < slices; ++j) t.push_back({bottom, ring(stacks - 1, j + 1), ring(stacks - 1, j)});
  return make_mesh(std::move(v), std::move(t));
}

TriMesh make_cylinder(double radius, double height, int slices) {
  if (slices < 3) throw InvalidCount("cylinder needs slices >= 3");
  std::vector<Vec3> v;
  for (int j = 0; j < slices; ++j) {
    const double phi = kTwoPi * j / slices;
    v.emplace_back(radius * std::cos(phi), radius * std::sin(phi), -0.5 * height);
    v.emplace_back(radius * std::cos(phi), radius * std::sin(phi), 0.5 * height);
  }
  const auto lo = static_cast<std::uint32_t>(v.size());
  v.emplace_back(0, 0, -0.5 * height);
  const auto hi = static_cast<std::uint32_t>(v.size());
  v.emplace_back(0, 0, 0.5 * height);
  std::vector<std::array<std::uint32_t, 3>> t;
  for (int j = 0; j < slices; ++j) {
    const auto a = static_cast<std::uint32_t>(2 * j), b = static_cast<std::uint32_t>(2 * ((j + 1) % slices));
    t.push_back({a, b, a + 1});
    t.push_back({b, b + 1, a + 1});
    t.push_back({lo, b, a});
    t.push_back({hi, a + 1, b + 1});
  }
  return make_mesh(std::move(v), std::move(t));
}

}  // namespace popcode
