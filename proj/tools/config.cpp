#include "config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "popcode/error.hpp"

namespace popcode::cli {

namespace {

using nlohmann::json;
using nlohmann::ordered_json;

std::size_t line_of(const std::string& text, std::size_t byte) {
  byte = std::min(byte, text.size());
  return 1 + static_cast<std::size_t>(std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(byte), '\n'));
}

// Walks one JSON object, remembers which keys were read and reports
// leftovers. Error messages carry the dotted path and a best-effort line.
class Section {
 public:
  Section(const json& j, std::string path, const std::string& text) : j_(j), path_(std::move(path)), text_(text) {
    if (!j_.is_object()) fail(path_.empty() ? "config must be a JSON object" : "expected an object");
  }

  template <typename T>
  void read(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    const json& v = j_.at(key);
    try {
      if constexpr (std::is_same_v<T, bool>) {
        if (!v.is_boolean()) throw std::invalid_argument("expected true or false");
      } else if constexpr (std::is_same_v<T, std::string>) {
        if (!v.is_string()) throw std::invalid_argument("expected a string");
      } else if constexpr (std::is_floating_point_v<T>) {
        if (!v.is_number()) throw std::invalid_argument("expected a number");
      } else if constexpr (std::is_unsigned_v<T>) {
        if (!v.is_number_unsigned()) throw std::invalid_argument("expected a non-negative integer");
      } else if constexpr (std::is_integral_v<T>) {
        if (!v.is_number_integer()) throw std::invalid_argument("expected an integer");
      } else {
        if (!v.is_array() || v.size() != std::tuple_size_v<T>) {
          throw std::invalid_argument("expected an array of " + std::to_string(std::tuple_size_v<T>) + " numbers");
        }
        for (const auto& e : v) {
          if (!e.is_number()) throw std::invalid_argument("expected numbers");
        }
      }
      out = v.get<T>();
    } catch (const std::exception& e) {
      fail_at(key, e.what());
    }
  }

  Section child(const char* key) {
    seen_.insert(key);
    static const json empty = json::object();
    if (!j_.contains(key)) return Section(empty, join(key), text_);
    return Section(j_.at(key), join(key), text_);
  }

  void finish() const {
    for (const auto& [k, v] : j_.items()) {
      if (!seen_.count(k)) fail_at(k, "unknown field");
    }
  }

  [[noreturn]] void fail_at(const std::string& key, const std::string& what) const {
    std::string msg = "config";
    const auto pos = text_.find('"' + key + '"', anchor());
    if (pos != std::string::npos) msg += " line " + std::to_string(line_of(text_, pos));
    throw ConfigError(msg + ": " + join(key) + ": " + what);
  }

 private:
  std::string join(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }
  std::size_t anchor() const {
    if (path_.empty()) return 0;
    const auto dot = path_.rfind('.');
    const std::string last = dot == std::string::npos ? path_ : path_.substr(dot + 1);
    const auto p = text_.find('"' + last + '"');
    return p == std::string::npos ? 0 : p;
  }
  [[noreturn]] void fail(const std::string& what) const { throw ConfigError("config: " + path_ + ": " + what); }

  const json& j_;
  std::string path_;
  const std::string& text_;
  std::set<std::string> seen_;
};

void read_symmetry(Section s, SymmetrySection& out) {
  s.read("kind", out.kind);
  s.read("order", out.order);
  s.read("axis", out.axis);
  s.finish();
}

ordered_json symmetry_json(const SymmetrySection& s) {
  return {{"kind", s.kind}, {"order", s.order}, {"axis", s.axis}};
}

}  // namespace

Config parse_config(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError("config line " + std::to_string(line_of(text, e.byte > 0 ? e.byte - 1 : 0)) +
                      ": invalid JSON: " + e.what());
  }
  Config c;
  Section root(j, "", text);
  if (!j.contains("version")) throw ConfigError("config: version: required field missing");
  root.read("version", c.version);
  if (c.version != kConfigVersion) {
    root.fail_at("version", "unsupported version " + std::to_string(c.version) + " (expected " +
                                std::to_string(kConfigVersion) + ")");
  }
  root.read("seed", c.seed);
  {
    auto s = root.child("gen_synth");
    s.read("kind", c.gen_synth.kind);
    s.read("count", c.gen_synth.count);
    s.read("train", c.gen_synth.train);
    s.read("test", c.gen_synth.test);
    s.finish();
  }
  {
    auto s = root.child("train");
    auto& t = c.train;
    s.read("dataset", t.dataset);
    s.read("kind", t.kind);
    s.read("head", t.head);
    s.read("epochs", t.epochs);
    s.read("batch", t.batch);
    s.read("lr", t.lr);
    s.read("width_scale", t.width_scale);
    s.read("augment", t.augment);
    s.read("ring_size", t.ring_size);
    s.read("sigma_deg", t.sigma_deg);
    s.read("cos_sin", t.cos_sin);
    s.read("one_hot_mode", t.one_hot_mode);
    s.read("hypotheses", t.hypotheses);
    s.read("repeats", t.repeats);
    s.read("jobs", t.jobs);
    s.read("eval_every", t.eval_every);
    s.finish();
  }
  {
    auto s = root.child("eval");
    s.read("checkpoint", c.eval.checkpoint);
    s.read("dataset", c.eval.dataset);
    s.read("repeats", c.eval.repeats);
    s.read("jobs", c.eval.jobs);
    s.finish();
  }
  {
    auto s = root.child("metrics");
    s.read("mesh", c.metrics.mesh);
    s.read("poses", c.metrics.poses);
    read_symmetry(s.child("symmetry"), c.metrics.symmetry);
    auto cam = s.child("camera");
    auto& k = c.metrics.camera;
    cam.read("fx", k.fx);
    cam.read("fy", k.fy);
    cam.read("cx", k.cx);
    cam.read("cy", k.cy);
    cam.read("width", k.width);
    cam.read("height", k.height);
    cam.finish();
    s.finish();
  }
  {
    auto s = root.child("dump_code");
    auto& d = c.dump_code;
    s.read("axis", d.axis);
    s.read("angle_deg", d.angle_deg);
    read_symmetry(s.child("symmetry"), d.symmetry);
    s.read("n", d.n);
    s.read("m", d.m);
    s.read("sigma_deg", d.sigma_deg);
    s.read("width", d.width);
    s.read("height", d.height);
    s.finish();
  }
  {
    auto s = root.child("bench");
    s.read("runs", c.bench.runs);
    s.read("trunk_runs", c.bench.trunk_runs);
    s.read("trunk_scale", c.bench.trunk_scale);
    s.finish();
  }
  root.finish();
  validate(c);
  return c;
}

Config load_config(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("config: cannot open " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_config(ss.str());
}

ordered_json to_json(const Config& c) {
  const auto& t = c.train;
  const auto& k = c.metrics.camera;
  const auto& d = c.dump_code;
  return {
      {"version", c.version},
      {"seed", c.seed},
      {"gen_synth",
       {{"kind", c.gen_synth.kind}, {"count", c.gen_synth.count}, {"train", c.gen_synth.train}, {"test", c.gen_synth.test}}},
      {"train",
       {{"dataset", t.dataset},
        {"kind", t.kind},
        {"head", t.head},
        {"epochs", t.epochs},
        {"batch", t.batch},
        {"lr", t.lr},
        {"width_scale", t.width_scale},
        {"augment", t.augment},
        {"ring_size", t.ring_size},
        {"sigma_deg", t.sigma_deg},
        {"cos_sin", t.cos_sin},
        {"one_hot_mode", t.one_hot_mode},
        {"hypotheses", t.hypotheses},
        {"repeats", t.repeats},
        {"jobs", t.jobs},
        {"eval_every", t.eval_every}}},
      {"eval",
       {{"checkpoint", c.eval.checkpoint}, {"dataset", c.eval.dataset}, {"repeats", c.eval.repeats}, {"jobs", c.eval.jobs}}},
      {"metrics",
       {{"mesh", c.metrics.mesh},
        {"poses", c.metrics.poses},
        {"symmetry", symmetry_json(c.metrics.symmetry)},
        {"camera",
         {{"fx", k.fx}, {"fy", k.fy}, {"cx", k.cx}, {"cy", k.cy}, {"width", k.width}, {"height", k.height}}}}},
      {"dump_code",
       {{"axis", d.axis},
        {"angle_deg", d.angle_deg},
        {"symmetry", symmetry_json(d.symmetry)},
        {"n", d.n},
        {"m", d.m},
        {"sigma_deg", d.sigma_deg},
        {"width", d.width},
        {"height", d.height}}},
      {"bench", {{"runs", c.bench.runs}, {"trunk_runs", c.bench.trunk_runs}, {"trunk_scale", c.bench.trunk_scale}}},
  };
}

namespace {

void check(bool ok, const std::string& field, const std::string& what) {
  if (!ok) throw ConfigError("config: " + field + ": " + what);
}

void check_symmetry(const SymmetrySection& s, const std::string& field) {
  try {
    to_symmetry(s);
  } catch (const Error& e) {
    throw ConfigError("config: " + field + ": " + e.what());
  }
}

}  // namespace

void validate(const Config& c) {
  try {
    synth::shape_kind_from_string(c.gen_synth.kind);
  } catch (const Error&) {
    check(false, "gen_synth.kind", "expected bars or arrows, got '" + c.gen_synth.kind + "'");
  }
  check(c.gen_synth.count > 0, "gen_synth.count", "must be positive");
  check(c.gen_synth.train + c.gen_synth.test == c.gen_synth.count, "gen_synth.train",
        "train + test must equal count");

  const auto& t = c.train;
  try {
    synth::shape_kind_from_string(t.kind);
  } catch (const Error&) {
    check(false, "train.kind", "expected bars or arrows, got '" + t.kind + "'");
  }
  try {
    train::head_kind_from_string(t.head);
  } catch (const Error& e) {
    check(false, "train.head", e.what());
  }
  check(t.epochs > 0, "train.epochs", "must be positive");
  check(t.batch > 0, "train.batch", "must be positive");
  check(t.lr > 0, "train.lr", "must be positive");
  check(t.width_scale > 0, "train.width_scale", "must be positive");
  check(t.ring_size >= 2, "train.ring_size", "must be at least 2");
  check(t.sigma_deg > 0, "train.sigma_deg", "must be positive");
  check(t.one_hot_mode == "sample" || t.one_hot_mode == "canonical", "train.one_hot_mode",
        "expected sample or canonical");
  check(t.hypotheses >= 2, "train.hypotheses", "must be at least 2");
  check(t.repeats > 0, "train.repeats", "must be positive");
  check(t.jobs > 0, "train.jobs", "must be positive");
  check(t.dataset.empty() || t.repeats == 1, "train.dataset",
        "a fixed dataset cannot be combined with repeats > 1 (each run draws a fresh split)");
  check(c.eval.repeats > 0, "eval.repeats", "must be positive");
  check(c.eval.jobs > 0, "eval.jobs", "must be positive");

  check_symmetry(c.metrics.symmetry, "metrics.symmetry");
  try {
    c.metrics.camera.validate();
  } catch (const Error& e) {
    check(false, "metrics.camera", e.what());
  }
  check_symmetry(c.dump_code.symmetry, "dump_code.symmetry");
  check(Vec3(c.dump_code.axis[0], c.dump_code.axis[1], c.dump_code.axis[2]).norm() > 0, "dump_code.axis",
        "must be non-zero");
  check(c.dump_code.n >= 2, "dump_code.n", "must be at least 2");
  check(c.dump_code.m >= 1, "dump_code.m", "must be at least 1");
  check(c.dump_code.sigma_deg > 0, "dump_code.sigma_deg", "must be positive");
  check(c.dump_code.width > 0 && c.dump_code.height > 0, "dump_code.width", "image size must be positive");
  check(c.bench.runs > 0, "bench.runs", "must be positive");
  check(c.bench.trunk_scale > 0, "bench.trunk_scale", "must be positive");
}

SymmetrySpec to_symmetry(const SymmetrySection& s) {
  const Vec3 axis(s.axis[0], s.axis[1], s.axis[2]);
  if (s.kind == "none") return SymmetrySpec::none();
  if (s.kind == "discrete") return SymmetrySpec::discrete(s.order, axis);
  if (s.kind == "continuous") return SymmetrySpec::continuous(axis);
  throw InvalidArgument("expected none, discrete or continuous, got '" + s.kind + "'");
}

train::HeadConfig to_head(const TrainSection& t) {
  train::HeadConfig h;
  h.kind = train::head_kind_from_string(t.head);
  h.ring_size = t.ring_size;
  h.sigma_deg = t.sigma_deg;
  h.cos_sin = t.cos_sin;
  h.one_hot_mode = t.one_hot_mode == "canonical" ? baselines::OneHotMode::Canonical : baselines::OneHotMode::Sample;
  h.hypotheses = t.hypotheses;
  return h;
}

train::TrainConfig to_train(const TrainSection& t) {
  train::TrainConfig c;
  c.epochs = t.epochs;
  c.batch = t.batch;
  c.adam.lr = t.lr;
  c.width_scale = t.width_scale;
  c.augment_enabled = t.augment;
  c.eval_every = t.eval_every;
  return c;
}

ordered_json head_to_json(const train::HeadConfig& h) {
  return {{"kind", train::to_string(h.kind)},
          {"ring_size", h.ring_size},
          {"sigma_deg", h.sigma_deg},
          {"cos_sin", h.cos_sin},
          {"one_hot_mode", h.one_hot_mode == baselines::OneHotMode::Canonical ? "canonical" : "sample"},
          {"hypotheses", h.hypotheses}};
}

train::HeadConfig head_from_json(const nlohmann::json& j) {
  train::HeadConfig h;
  h.kind = train::head_kind_from_string(j.at("kind").get<std::string>());
  h.ring_size = j.at("ring_size").get<std::size_t>();
  h.sigma_deg = j.at("sigma_deg").get<double>();
  h.cos_sin = j.at("cos_sin").get<bool>();
  h.one_hot_mode = j.at("one_hot_mode").get<std::string>() == "canonical" ? baselines::OneHotMode::Canonical
                                                                          : baselines::OneHotMode::Sample;
  h.hypotheses = j.at("hypotheses").get<std::size_t>();
  return h;
}

}  // namespace popcode::cli
