#include "popcode/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "popcode/error.hpp"
#include "popcode/geometry.hpp"

namespace popcode::synth {

std::string to_string(ShapeKind k) { return k == ShapeKind::Bar ? "bar" : "arrow"; }

ShapeKind shape_kind_from_string(const std::string& s) {
  if (s == "bar" || s == "bars") return ShapeKind::Bar;
  if (s == "arrow" || s == "arrows") return ShapeKind::Arrow;
  throw InvalidArgument("unknown shape kind '" + s + "' (expected bars or arrows)");
}

ShapeParams draw_shape_params(std::uint64_t seed, const ShapeRanges& r) {
  Rng rng(seed);
  ShapeParams p;
  p.length = rng.uniform(r.length_min, r.length_max);
  p.width = rng.uniform(r.width_min, r.width_max);
  p.head = rng.uniform(r.head_min, r.head_max);
  p.center_x = kCanvas / 2.0 + rng.uniform(-r.jitter, r.jitter);
  p.center_y = kCanvas / 2.0 + rng.uniform(-r.jitter, r.jitter);
  return p;
}

namespace {

constexpr int kSuper = 4;

// Coverage of `inside(u, v)` where (u, v) are coordinates along and across
// the shape axis, relative to the shape centre.
template <typename Inside>
GrayImage rasterize(double angle, const ShapeParams& p, Inside inside) {
  GrayImage img(kCanvas, kCanvas);
  const double c = std::cos(angle), s = std::sin(angle);
  for (int row = 0; row < kCanvas; ++row) {
    for (int col = 0; col < kCanvas; ++col) {
      int hits = 0;
      for (int sy = 0; sy < kSuper; ++sy) {
        for (int sx = 0; sx < kSuper; ++sx) {
          const double x = col + (sx + 0.5) / kSuper - p.center_x;
          const double y = -(row + (sy + 0.5) / kSuper - p.center_y);  // image rows grow downwards
          hits += inside(x * c + y * s, -x * s + y * c) ? 1 : 0;
        }
      }
      img.at(col, row) = static_cast<float>(hits) / (kSuper * kSuper);
    }
  }
  return img;
}

}  // namespace

GrayImage gen_bar(double angle, const ShapeParams& p) {
  // A bar looks the same after half a turn; rendering from the angle mod pi
  // makes angle and angle + pi produce identical pixels.
  const double a = std::fmod(wrap_two_pi(angle), kPi);
  const double hl = p.length / 2, hw = p.width / 2;
  return rasterize(a, p, [&](double u, double v) { return std::fabs(u) <= hl && std::fabs(v) <= hw; });
}

GrayImage gen_arrow(double angle, const ShapeParams& p) {
  const double hl = p.length / 2, hw = p.width / 2;
  const double base = hl - p.head;  // where the head starts
  const double head_hw = p.head;    // base twice the head length: 90 degrees at the tip
  return rasterize(wrap_two_pi(angle), p, [&](double u, double v) {
    if (u < -hl || u > hl) return false;
    if (u <= base) return std::fabs(v) <= hw;
    return std::fabs(v) <= head_hw * (hl - u) / p.head;
  });
}

GrayImage gen_bar(double angle, std::uint64_t seed, const ShapeRanges& ranges) {
  return gen_bar(angle, draw_shape_params(seed, ranges));
}

GrayImage gen_arrow(double angle, std::uint64_t seed, const ShapeRanges& ranges) {
  return gen_arrow(angle, draw_shape_params(seed, ranges));
}

GrayImage gen_shape(ShapeKind kind, double angle, const ShapeParams& p) {
  return kind == ShapeKind::Bar ? gen_bar(angle, p) : gen_arrow(angle, p);
}

Dataset gen_dataset(ShapeKind kind, std::uint64_t seed, std::size_t count, std::size_t train, std::size_t test,
                    const ShapeRanges& ranges) {
  if (train + test != count) {
    throw InvalidSplit("split " + std::to_string(train) + "/" + std::to_string(test) + " does not sum to " +
                       std::to_string(count));
  }
  Rng angle_rng(derive_seed(seed, "angles"));
  std::vector<double> angles(count);
  for (double& a : angles) a = wrap_two_pi(angle_rng.uniform(0.0, kTwoPi));

  const std::uint64_t shape_seed = derive_seed(seed, "shapes");
  std::vector<LabeledSample> all(count);
#pragma omp parallel for schedule(static)
  for (long long i = 0; i < static_cast<long long>(count); ++i) {
    const auto p = draw_shape_params(derive_seed(shape_seed, static_cast<std::uint64_t>(i)), ranges);
    all[i] = {gen_shape(kind, angles[i], p), angles[i], kind};
  }
  Dataset ds;
  ds.train.assign(std::make_move_iterator(all.begin()), std::make_move_iterator(all.begin() + train));
  ds.test.assign(std::make_move_iterator(all.begin() + train), std::make_move_iterator(all.end()));
  return ds;
}

void add_brightness(GrayImage& img, float delta) {
  for (float& v : img.pixels) v += delta;
}

void add_gaussian_noise(GrayImage& img, double stddev, Rng& rng) {
  for (float& v : img.pixels) v += static_cast<float>(rng.normal(0.0, stddev));
}

void normalize_contrast(GrayImage& img) {
  const auto [lo, hi] = std::minmax_element(img.pixels.begin(), img.pixels.end());
  const float mn = *lo, mx = *hi;
  if (!(mx > mn)) return;
  const float scale = 1.0f / (mx - mn);
  for (float& v : img.pixels) v = (v - mn) * scale;
}

GrayImage shift_image(const GrayImage& img, int dx, int dy) {
  GrayImage out(img.width, img.height);
  for (int r = 0; r < img.height; ++r) {
    const int sr = r - dy;
    if (sr < 0 || sr >= img.height) continue;
    for (int c = 0; c < img.width; ++c) {
      const int sc = c - dx;
      if (sc >= 0 && sc < img.width) out.at(c, r) = img.at(sc, sr);
    }
  }
  return out;
}

void clamp_unit(GrayImage& img) {
  for (float& v : img.pixels) v = std::clamp(v, 0.0f, 1.0f);
}

GrayImage augment(const GrayImage& img, const AugmentConfig& cfg, Rng& rng) {
  GrayImage out = img;
  if (rng.bernoulli(cfg.brightness_prob)) {
    add_brightness(out, static_cast<float>(rng.uniform(-cfg.brightness_range, cfg.brightness_range)));
    clamp_unit(out);
  }
  if (rng.bernoulli(cfg.noise_prob)) {
    add_gaussian_noise(out, cfg.noise_std, rng);
    clamp_unit(out);
  }
  if (cfg.contrast_normalize) {
    normalize_contrast(out);
    clamp_unit(out);
  }
  if (rng.bernoulli(cfg.shift_prob)) {
    const int dx = rng.uniform_int(-cfg.max_shift, cfg.max_shift);
    const int dy = rng.uniform_int(-cfg.max_shift, cfg.max_shift);
    out = shift_image(out, dx, dy);
    clamp_unit(out);
  }
  return out;
}

void write_pgm(std::ostream& os, const GrayImage& img) {
  os << "P5\n" << img.width << ' ' << img.height << "\n255\n";
  std::string bytes(img.pixels.size(), '\0');
  for (std::size_t i = 0; i < img.pixels.size(); ++i) {
    bytes[i] = static_cast<char>(std::lround(std::clamp(img.pixels[i], 0.0f, 1.0f) * 255.0f));
  }
  os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

GrayImage read_pgm(std::istream& is) {
  std::string magic;
  int w = 0, h = 0, maxval = 0;
  is >> magic;
  auto skip_comments = [&] {
    is >> std::ws;
    while (is.peek() == '#') {
      std::string line;
      std::getline(is, line);
      is >> std::ws;
    }
  };
  skip_comments();
  is >> w;
  skip_comments();
  is >> h;
  skip_comments();
  is >> maxval;
  if (magic != "P5" || !is || w < 1 || h < 1 || maxval != 255) throw FormatError("not an 8-bit binary PGM");
  is.get();
  std::string bytes(static_cast<std::size_t>(w) * h, '\0');
  if (!is.read(bytes.data(), static_cast<std::streamsize>(bytes.size()))) throw FormatError("truncated PGM");
  GrayImage img(w, h);
  for (std::size_t i = 0; i < bytes.size(); ++i) {
    img.pixels[i] = static_cast<float>(static_cast<unsigned char>(bytes[i])) / 255.0f;
  }
  return img;
}

void write_dataset(const std::filesystem::path& dir, const Dataset& ds) {
  std::filesystem::create_directories(dir / "images");
  std::ofstream manifest(dir / "manifest.csv");
  if (!manifest) throw FileNotFound("cannot write " + (dir / "manifest.csv").string());
  manifest << "filename,angle_rad,kind,split\n" << std::setprecision(17);
  auto emit = [&](const std::vector<LabeledSample>& part, const char* split) {
    for (std::size_t i = 0; i < part.size(); ++i) {
      std::ostringstream name;
      name << "images/" << split << '_' << std::setw(5) << std::setfill('0') << i << ".pgm";
      std::ofstream f(dir / name.str(), std::ios::binary);
      if (!f) throw FileNotFound("cannot write " + (dir / name.str()).string());
      write_pgm(f, part[i].image);
      manifest << name.str() << ',' << part[i].angle << ',' << to_string(part[i].kind) << ',' << split << '\n';
    }
  };
  emit(ds.train, "train");
  emit(ds.test, "test");
}

Dataset read_dataset(const std::filesystem::path& dir) {
  std::ifstream manifest(dir / "manifest.csv");
  if (!manifest) throw FileNotFound("no manifest.csv in " + dir.string());
  std::string line;
  std::getline(manifest, line);
  if (line != "filename,angle_rad,kind,split") throw FormatError("unexpected manifest header: " + line);
  Dataset ds;
  int line_no = 1;
  while (std::getline(manifest, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> cols;
    std::stringstream ls(line);
    for (std::string c; std::getline(ls, c, ',');) cols.push_back(c);
    if (cols.size() != 4) throw FormatError("manifest line " + std::to_string(line_no) + ": expected 4 columns");
    std::ifstream img(dir / cols[0], std::ios::binary);
    if (!img) throw FileNotFound("missing image " + (dir / cols[0]).string());
    LabeledSample s{read_pgm(img), std::stod(cols[1]), shape_kind_from_string(cols[2])};
    if (cols[3] == "train") {
      ds.train.push_back(std::move(s));
    } else if (cols[3] == "test") {
      ds.test.push_back(std::move(s));
    } else {
      throw FormatError("manifest line " + std::to_string(line_no) + ": unknown split '" + cols[3] + "'");
    }
  }
  return ds;
}

}  // namespace popcode::synth
