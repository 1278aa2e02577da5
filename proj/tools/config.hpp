#pragma once

// Experiment configuration. Every command reads its own section; all
// sections have defaults so a config file only needs what it changes.
// Unknown fields are rejected.

#include <array>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>

#include "json.hpp"
#include "popcode/geometry.hpp"
#include "popcode/metrics.hpp"
#include "popcode/train.hpp"

namespace popcode::cli {

// Bad configuration or command line; exit code 2.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr int kConfigVersion = 1;

struct GenSynthSection {
  std::string kind = "arrows";
  std::size_t count = 1000;
  std::size_t train = 800;
  std::size_t test = 200;
};

struct TrainSection {
  std::string dataset;  // empty: generate from the seed
  std::string kind = "arrows";
  std::string head = "popcode";
  std::size_t epochs = 80;
  std::size_t batch = 64;
  double lr = 2e-4;
  double width_scale = 1.0;
  bool augment = true;
  std::size_t ring_size = 36;
  double sigma_deg = 20.0;
  bool cos_sin = false;
  std::string one_hot_mode = "sample";
  std::size_t hypotheses = 10;
  std::size_t repeats = 1;
  int jobs = 1;
  std::size_t eval_every = 1;
};

struct EvalSection {
  std::string checkpoint;
  std::string dataset;  // empty: the test split the checkpoint was trained against
  std::size_t repeats = 1;
  int jobs = 1;
};

struct SymmetrySection {
  std::string kind = "none";  // none | discrete | continuous
  int order = 2;
  std::array<double, 3> axis{0.0, 0.0, 1.0};
};

struct MetricsSection {
  std::string mesh;
  std::string poses;
  SymmetrySection symmetry;
  metrics::Camera camera;
};

struct DumpCodeSection {
  std::array<double, 3> axis{0.0, 0.0, 1.0};
  double angle_deg = 0.0;
  SymmetrySection symmetry;
  std::size_t n = 2562;
  std::size_t m = 36;
  double sigma_deg = 20.0;
  int width = 360;
  int height = 180;
};

struct BenchSection {
  std::size_t runs = 100;
  std::size_t trunk_runs = 100;
  double trunk_scale = 1.0;
};

struct Config {
  int version = kConfigVersion;
  std::uint64_t seed = 1;
  GenSynthSection gen_synth;
  TrainSection train;
  EvalSection eval;
  MetricsSection metrics;
  DumpCodeSection dump_code;
  BenchSection bench;
};

// Throws ConfigError naming the line and field at fault.
Config parse_config(const std::string& text);
Config load_config(const std::filesystem::path& path);
nlohmann::ordered_json to_json(const Config& c);
// Range and enum checks after command-line overrides.
void validate(const Config& c);

SymmetrySpec to_symmetry(const SymmetrySection& s);
train::HeadConfig to_head(const TrainSection& t);
train::TrainConfig to_train(const TrainSection& t);
nlohmann::ordered_json head_to_json(const train::HeadConfig& h);
train::HeadConfig head_from_json(const nlohmann::json& j);

}  // namespace popcode::cli
