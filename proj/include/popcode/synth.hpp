#pragma once

// Synthetic orientation datasets: anti-aliased bars and arrows on a 64 x 64
// canvas, plus the training-time image augmentations.
//
// Angles follow the usual math convention in image space: 0 points to +x
// (right), pi/2 points up (towards row 0).

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "popcode/rng.hpp"

namespace popcode::synth {

struct GrayImage {
  int width = 0;
  int height = 0;
  std::vector<float> pixels;  // row-major, values in [0, 1]

  GrayImage() = default;
  GrayImage(int w, int h, float fill = 0.0f)
      : width(w), height(h), pixels(static_cast<std::size_t>(w) * h, fill) {}
  float& at(int col, int row) { return pixels[static_cast<std::size_t>(row) * width + col]; }
  float at(int col, int row) const { return pixels[static_cast<std::size_t>(row) * width + col]; }
};

enum class ShapeKind { Bar, Arrow };
std::string to_string(ShapeKind k);
ShapeKind shape_kind_from_string(const std::string& s);  // "bar(s)" or "arrow(s)"

inline constexpr int kCanvas = 64;

struct ShapeRanges {
  double length_min = 24, length_max = 48;
  double width_min = 4, width_max = 10;
  double head_min = 8, head_max = 14;
  double jitter = 4;  // centre offset range, +- px
};

struct ShapeParams {
  double length = 32;  // total length including the arrow head
  double width = 6;
  double head = 10;    // arrow head length; unused for bars
  double center_x = kCanvas / 2.0;
  double center_y = kCanvas / 2.0;
};

ShapeParams draw_shape_params(std::uint64_t seed, const ShapeRanges& ranges = {});

// 4 x 4 supersampled coverage with intensity 1 on a black background.
GrayImage gen_bar(double angle, const ShapeParams& p);
GrayImage gen_bar(double angle, std::uint64_t seed, const ShapeRanges& ranges = {});
GrayImage gen_arrow(double angle, const ShapeParams& p);
GrayImage gen_arrow(double angle, std::uint64_t seed, const ShapeRanges& ranges = {});
GrayImage gen_shape(ShapeKind kind, double angle, const ShapeParams& p);

struct LabeledSample {
  GrayImage image;
  double angle = 0.0;  // [0, 2 pi)
  ShapeKind kind = ShapeKind::Bar;
};

struct Dataset {
  std::vector<LabeledSample> train;
  std::vector<LabeledSample> test;
};

// Angles uniform in [0, 2 pi). Throws InvalidSplit unless train + test == count.
Dataset gen_dataset(ShapeKind kind, std::uint64_t seed, std::size_t count = 1000, std::size_t train = 800,
                    std::size_t test = 200, const ShapeRanges& ranges = {});

struct AugmentConfig {
  double brightness_prob = 0.5;
  double brightness_range = 0.2;
  double noise_prob = 0.5;
  double noise_std = 0.02;
  bool contrast_normalize = true;
  double shift_prob = 0.9;
  int max_shift = 5;
};

// Brightness, noise, contrast normalization, shift, in that order, clamping
// to [0, 1] after each step.
GrayImage augment(const GrayImage& img, const AugmentConfig& cfg, Rng& rng);

void add_brightness(GrayImage& img, float delta);  // no clamping
void add_gaussian_noise(GrayImage& img, double stddev, Rng& rng);
// Min-max rescale to [0, 1]; constant images are left unchanged.
void normalize_contrast(GrayImage& img);
// Content moves by (dx, dy) pixels (dy > 0 moves down); vacated pixels are 0.
GrayImage shift_image(const GrayImage& img, int dx, int dy);
void clamp_unit(GrayImage& img);

// Binary PGM (P5, maxval 255).
void write_pgm(std::ostream& os, const GrayImage& img);
GrayImage read_pgm(std::istream& is);

// Writes <dir>/images/<split>_<index>.pgm and <dir>/manifest.csv with
// columns filename,angle_rad,kind,split.
void write_dataset(const std::filesystem::path& dir, const Dataset& ds);
Dataset read_dataset(const std::filesystem::path& dir);

}  // namespace popcode::synth
