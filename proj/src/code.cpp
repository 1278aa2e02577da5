#include "popcode/code.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>

#include "popcode/binary_io.hpp"
#include "popcode/error.hpp"
#include "popcode/kernels.hpp"

namespace popcode {

namespace {

constexpr char kBinaryMagic[8] = {'P', 'O', 'P', 'C', 'O', 'D', 'E', '\0'};
constexpr std::uint32_t kBinaryVersion = 1;

void check_sigma(const TuningConfig& cfg) {
  if (!(cfg.sigma > 0.0) || !std::isfinite(cfg.sigma)) throw InvalidArgument("tuning width must be positive");
}

double axis_angle_distance(const Vec3& a, const Vec3& b) { return std::acos(std::clamp(a.dot(b), -1.0, 1.0)); }

std::vector<double> axis_d2(const Vec3& axis, const SphereLattice& sphere) {
  std::vector<double> d(sphere.size());
  for (std::size_t a = 0; a < sphere.size(); ++a) {
    const double t = axis_angle_distance(axis, sphere.axes[a]);
    d[a] = t * t;
  }
  return d;
}

std::vector<double> angle_d2(double angle, const AngleRing& ring) {
  std::vector<double> d(ring.size());
  for (std::size_t b = 0; b < ring.size(); ++b) {
    const double t = circular_distance(angle, ring.angles[b]);
    d[b] = t * t;
  }
  return d;
}

}  // namespace

void accumulate_axis_angle(const AxisAngle& aa, const NeuronGrid& grid, const TuningConfig& cfg,
                           std::span<double> out) {
  check_sigma(cfg);
  if (out.size() != grid.size()) throw DimensionMismatch("code length does not match grid size");
  const auto ad = axis_d2(aa.axis, grid.sphere());
  const auto bd = angle_d2(aa.angle, grid.ring());
  kernels::parallel::accumulate_gaussian_grid(ad, bd, 1.0 / (2.0 * cfg.sigma * cfg.sigma), out);
}

PopulationCode encode_axis_angle(const AxisAngle& aa, std::shared_ptr<const NeuronGrid> grid,
                                 const TuningConfig& cfg) {
  PopulationCode code;
  code.sigma = cfg.sigma;
  code.activations.assign(grid->size(), 0.0);
  accumulate_axis_angle(aa, *grid, cfg, code.activations);
  code.grid = std::move(grid);
  return code;
}

PopulationCode target_code(const RotationMatrix& r_o, const SymmetrySpec& spec,
                           std::shared_ptr<const NeuronGrid> grid, const TuningConfig& cfg) {
  return target_code(equivalent_rotations(r_o, spec), std::move(grid), cfg);
}

PopulationCode target_code(std::span<const RotationMatrix> equivalents, std::shared_ptr<const NeuronGrid> grid,
                           const TuningConfig& cfg) {
  PopulationCode code;
  code.sigma = cfg.sigma;
  code.activations.assign(grid->size(), 0.0);
  for (const RotationMatrix& r : equivalents) {
    const AxisAngle aa = axis_angle_from_matrix(r);
    accumulate_axis_angle(aa, *grid, cfg, code.activations);
    AxisAngle twin;
    twin.axis = -aa.axis;
    twin.angle = wrap_two_pi(kTwoPi - aa.angle);
    accumulate_axis_angle(twin, *grid, cfg, code.activations);
  }
  code.grid = std::move(grid);
  return code;
}

AxisCode encode_axis_only(const Vec3& axis, std::shared_ptr<const SphereLattice> sphere, const TuningConfig& cfg,
                          bool sign_ambiguous) {
  check_sigma(cfg);
  const double n = axis.norm();
  if (!(n > 1e-12)) throw DegenerateInput("axis-only code: zero axis");
  const Vec3 u = axis / n;
  const double k = 1.0 / (2.0 * cfg.sigma * cfg.sigma);
  AxisCode code;
  code.sigma = cfg.sigma;
  code.activations.resize(sphere->size());
  for (std::size_t a = 0; a < sphere->size(); ++a) {
    const double t = axis_angle_distance(u, sphere->axes[a]);
    double v = std::exp(-t * t * k);
    if (sign_ambiguous) {
      const double s = axis_angle_distance(-u, sphere->axes[a]);
      v += std::exp(-s * s * k);
    }
    code.activations[a] = v;
  }
  code.sphere = std::move(sphere);
  return code;
}

std::size_t decode_index(std::span<const double> activations) {
  if (activations.empty()) throw EmptyInput("decode: empty code");
  if (std::all_of(activations.begin(), activations.end(), [](double v) { return v == 0.0; })) {
    throw AllZero("decode: every activation is zero");
  }
  return kernels::parallel::argmax(activations);
}

RotationMatrix decode(const PopulationCode& code) {
  if (!code.grid) throw InvalidArgument("decode: code has no grid");
  if (code.activations.size() != code.grid->size()) throw DimensionMismatch("decode: code length != grid size");
  return matrix_from_axis_angle(code.grid->preferred(decode_index(code.activations)));
}

RotationMatrix decode_axis_only(const AxisCode& code, std::uint64_t rng_seed) {
  if (!code.sphere) throw InvalidArgument("decode: code has no sphere");
  if (code.activations.size() != code.sphere->size()) throw DimensionMismatch("decode: code length != sphere size");
  const std::size_t a = decode_index(code.activations);
  Rng rng(rng_seed);
  AxisAngle aa;
  aa.axis = code.sphere->axes[a];
  aa.angle = rng.uniform() * kTwoPi;
  return matrix_from_axis_angle(aa);
}

void accumulate_angle(double angle, const AngleRing& ring, const TuningConfig& cfg, std::span<double> out) {
  check_sigma(cfg);
  if (out.size() != ring.size()) throw DimensionMismatch("code length does not match ring size");
  const double k = 1.0 / (2.0 * cfg.sigma * cfg.sigma);
  for (std::size_t b = 0; b < ring.size(); ++b) {
    const double d = circular_distance(angle, ring.angles[b]);
    out[b] += std::exp(-d * d * k);
  }
}

std::vector<double> encode_angle(double angle, const AngleRing& ring, const TuningConfig& cfg) {
  std::vector<double> out(ring.size(), 0.0);
  accumulate_angle(angle, ring, cfg, out);
  return out;
}

double decode_angle(std::span<const double> activations, const AngleRing& ring) {
  if (activations.size() != ring.size()) throw DimensionMismatch("code length does not match ring size");
  return ring.angles[decode_index(activations)];
}

std::vector<double> max_over_angle(const PopulationCode& code) {
  const std::size_t n = code.grid->axis_count(), m = code.grid->angle_count();
  std::vector<double> out(n);
  for (std::size_t a = 0; a < n; ++a) {
    const auto row = std::span<const double>(code.activations).subspan(a * m, m);
    out[a] = *std::max_element(row.begin(), row.end());
  }
  return out;
}

std::size_t count_sphere_peaks(std::span<const double> values, const SphereLattice& sphere, double radius,
                               double rel_threshold) {
  if (values.size() != sphere.size()) throw DimensionMismatch("peak count: values != sphere size");
  if (values.empty()) return 0;
  const double top = *std::max_element(values.begin(), values.end());
  const double cos_r = std::cos(radius);
  std::size_t peaks = 0;
  for (std::size_t a = 0; a < values.size(); ++a) {
    if (values[a] < rel_threshold * top) continue;
    bool is_peak = true;
    for (std::size_t b = 0; b < values.size() && is_peak; ++b) {
      if (b == a || sphere.axes[a].dot(sphere.axes[b]) < cos_r) continue;
      if (values[b] > values[a] || (values[b] == values[a] && b < a)) is_peak = false;
    }
    if (is_peak) ++peaks;
  }
  return peaks;
}

void write_code_csv(std::ostream& os, const CodeHeader& h, std::span<const double> activations) {
  os << "n,m,sigma\n" << h.n << ',' << h.m << ',' << std::setprecision(17) << h.sigma << '\n';
  os << "index,activation\n";
  for (std::size_t i = 0; i < activations.size(); ++i) os << i << ',' << activations[i] << '\n';
}

SerializedCode read_code_csv(std::istream& is) {
  SerializedCode out;
  std::string line;
  if (!std::getline(is, line) || line != "n,m,sigma") throw FormatError("code csv: missing 'n,m,sigma' header");
  if (!std::getline(is, line)) throw FormatError("code csv: missing header values");
  {
    std::istringstream ss(line);
    char c1 = 0, c2 = 0;
    if (!(ss >> out.header.n >> c1 >> out.header.m >> c2 >> out.header.sigma) || c1 != ',' || c2 != ',') {
      throw FormatError("code csv: malformed header values");
    }
  }
  if (!std::getline(is, line) || line != "index,activation") throw FormatError("code csv: missing column header");
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::size_t idx = 0;
    char c = 0;
    double v = 0.0;
    if (!(ss >> idx >> c >> v) || c != ',' || idx != out.activations.size()) {
      throw FormatError("code csv: malformed row " + std::to_string(out.activations.size()));
    }
    out.activations.push_back(v);
  }
  const std::size_t expected = static_cast<std::size_t>(out.header.n) * std::max<std::uint32_t>(out.header.m, 1);
  if (out.activations.size() != expected) throw FormatError("code csv: activation count does not match header");
  return out;
}

void write_code_binary(std::ostream& os, const CodeHeader& h, std::span<const double> activations) {
  os.write(kBinaryMagic, sizeof(kBinaryMagic));
  io::put_le<std::uint32_t>(os, kBinaryVersion);
  io::put_le<std::uint32_t>(os, h.n);
  io::put_le<std::uint32_t>(os, h.m);
  io::put_f64(os, h.sigma);
  io::put_le<std::uint64_t>(os, activations.size());
  for (double v : activations) io::put_f64(os, v);
}

SerializedCode read_code_binary(std::istream& is) {
  char magic[sizeof(kBinaryMagic)];
  if (!is.read(magic, sizeof(magic)) || !std::equal(magic, magic + sizeof(magic), kBinaryMagic)) {
    throw FormatError("code binary: bad magic");
  }
  if (io::get_le<std::uint32_t>(is) != kBinaryVersion) throw FormatError("code binary: unsupported version");
  SerializedCode out;
  out.header.n = io::get_le<std::uint32_t>(is);
  out.header.m = io::get_le<std::uint32_t>(is);
  out.header.sigma = io::get_f64(is);
  const auto count = io::get_le<std::uint64_t>(is);
  const std::uint64_t expected = static_cast<std::uint64_t>(out.header.n) * std::max<std::uint32_t>(out.header.m, 1);
  if (count != expected) throw FormatError("code binary: activation count does not match header");
  out.activations.resize(count);
  for (auto& v : out.activations) v = io::get_f64(is);
  return out;
}

void write_sphere_heatmap_ppm(std::ostream& os, std::span<const double> axis_values, const SphereLattice& sphere,
                              int width, int height) {
  if (axis_values.size() != sphere.size()) throw DimensionMismatch("heat map: values != sphere size");
  if (width < 1 || height < 1) throw InvalidArgument("heat map: bad image size");
  // viridis anchors, low to high
  static constexpr double kRamp[5][3] = {
      {68, 1, 84}, {59, 82, 139}, {33, 145, 140}, {94, 201, 98}, {253, 231, 37}};
  double lo = *std::min_element(axis_values.begin(), axis_values.end());
  double hi = *std::max_element(axis_values.begin(), axis_values.end());
  const double range = hi > lo ? hi - lo : 1.0;

  os << "P6\n" << width << ' ' << height << "\n255\n";
  std::string row(static_cast<std::size_t>(width) * 3, '\0');
  for (int y = 0; y < height; ++y) {
    const double lat = kPi / 2 - kPi * (y + 0.5) / height;
    for (int x = 0; x < width; ++x) {
      const double lon = kTwoPi * (x + 0.5) / width - kPi;
      const Vec3 dir(std::cos(lat) * std::cos(lon), std::cos(lat) * std::sin(lon), std::sin(lat));
      const double t = std::clamp((axis_values[sphere.nearest(dir)] - lo) / range, 0.0, 1.0) * 4.0;
      const int k = std::min(3, static_cast<int>(t));
      const double f = t - k;
      for (int c = 0; c < 3; ++c) {
        const double v = kRamp[k][c] + f * (kRamp[k + 1][c] - kRamp[k][c]);
        row[static_cast<std::size_t>(x) * 3 + c] = static_cast<char>(static_cast<unsigned char>(std::lround(v)));
      }
    }
    os.write(row.data(), static_cast<std::streamsize>(row.size()));
  }
}

}  // namespace popcode
