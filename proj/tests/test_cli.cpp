#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "commands.hpp"
#include "config.hpp"
#include "popcode/mesh.hpp"
#include "popcode/metrics.hpp"

using namespace popcode;
using namespace popcode::cli;
namespace fs = std::filesystem;

namespace {

class TempDir {
 public:
  TempDir() {
    path_ = fs::temp_directory_path() /
            ("popcode_cli_" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()) + "_" +
             ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& s) const { return path_ / s; }

 private:
  fs::path path_;
};

struct Result {
  int code;
  std::string out, err;
};

Result run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "popcode");
  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  std::ostringstream out, err;
  const int code = run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

nlohmann::json read_json(const fs::path& p) { return nlohmann::json::parse(slurp(p)); }

}  // namespace

TEST(Config, RoundTripEqualsInputModuloFieldOrder) {
  const auto defaults = to_json(Config{});
  const auto parsed = to_json(parse_config(defaults.dump()));
  EXPECT_EQ(nlohmann::json(parsed), nlohmann::json(defaults));

  Config c;
  c.seed = 99;
  c.train.head = "one_hot_ce";
  c.train.epochs = 7;
  c.metrics.symmetry = {"discrete", 4, {1.0, 0.0, 0.0}};
  c.dump_code.angle_deg = 12.5;
  // reorder keys by going through the unordered json type
  const std::string text = nlohmann::json(to_json(c)).dump(1);
  EXPECT_EQ(nlohmann::json(to_json(parse_config(text))), nlohmann::json::parse(text));
}

TEST(Config, PartialConfigKeepsDefaults) {
  const auto c = parse_config(R"({"version": 1, "train": {"head": "popcode_sym", "kind": "bars"}})");
  EXPECT_EQ(c.train.head, "popcode_sym");
  EXPECT_EQ(c.train.epochs, 80u);
  EXPECT_EQ(c.train.batch, 64u);
  EXPECT_DOUBLE_EQ(c.train.lr, 2e-4);
  EXPECT_EQ(c.gen_synth.count, 1000u);
}

TEST(Config, RejectsUnknownFieldsWithLocation) {
  try {
    parse_config("{\n  \"version\": 1,\n  \"train\": {\n    \"epohcs\": 3\n  }\n}");
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("line 4"), std::string::npos) << msg;
    EXPECT_NE(msg.find("train.epohcs"), std::string::npos) << msg;
  }
  EXPECT_THROW(parse_config(R"({"version": 1, "extra": 0})"), ConfigError);
  EXPECT_THROW(parse_config(R"({"version": 1, "metrics": {"camera": {"focal": 3}}})"), ConfigError);
}

TEST(Config, RejectsBadValues) {
  EXPECT_THROW(parse_config(R"({"train": {}})"), ConfigError);                    // version missing
  EXPECT_THROW(parse_config(R"({"version": 2})"), ConfigError);                   // unsupported
  EXPECT_THROW(parse_config(R"({"version": 1, "seed": -1})"), ConfigError);       // type
  EXPECT_THROW(parse_config(R"({"version": 1, "train": {"epochs": "ten"}})"), ConfigError);
  EXPECT_THROW(parse_config(R"({"version": 1, "train": {"head": "softmax"}})"), ConfigError);
  EXPECT_THROW(parse_config(R"({"version": 1, "gen_synth": {"count": 10}})"), ConfigError);  // split
  EXPECT_THROW(parse_config(R"({"version": 1, "dump_code": {"symmetry": {"kind": "discrete", "order": 1}}})"),
               ConfigError);
  EXPECT_THROW(parse_config("{\"version\": 1,,}"), ConfigError);
}

TEST(Cli, ExitCodes) {
  TempDir dir;
  EXPECT_EQ(run_cli({"train", "--head", "bogus", "--out", dir.path().string()}).code, 2);
  EXPECT_EQ(run_cli({"frobnicate"}).code, 2);
  EXPECT_EQ(run_cli({"--config", (dir / "missing.json").string(), "bench"}).code, 2);
  const auto r = run_cli({"eval", "--checkpoint", (dir / "none.pcnet").string(), "--out", dir.path().string()});
  EXPECT_EQ(r.code, 3);
  EXPECT_NE(r.err.find("not found"), std::string::npos);
}

TEST(Cli, GenSynthIsDeterministic) {
  TempDir dir;
  ASSERT_EQ(run_cli({"gen-synth", "--seed", "3", "--out", (dir / "a").string()}).code, 0);
  ASSERT_EQ(run_cli({"gen-synth", "--seed", "3", "--out", (dir / "b").string()}).code, 0);
  const auto manifest = slurp(dir / "a" / "manifest.csv");
  EXPECT_EQ(manifest, slurp(dir / "b" / "manifest.csv"));
  EXPECT_EQ(slurp(dir / "a" / "images" / "test_00007.pgm"), slurp(dir / "b" / "images" / "test_00007.pgm"));
  std::size_t train = 0, test = 0;
  std::istringstream lines(manifest);
  std::string line;
  while (std::getline(lines, line)) {
    train += line.find(",train") != std::string::npos;
    test += line.find(",test") != std::string::npos;
  }
  EXPECT_EQ(train, 800u);
  EXPECT_EQ(test, 200u);
  EXPECT_NE(manifest.find(",arrow,"), std::string::npos);

  ASSERT_EQ(run_cli({"gen-synth", "--kind", "bars", "--out", (dir / "c").string()}).code, 0);
  EXPECT_NE(slurp(dir / "c" / "manifest.csv").find(",bar,"), std::string::npos);
}

TEST(Cli, TrainThenEval) {
  TempDir dir;
  std::ofstream(dir / "cfg.json") << R"({"version": 1, "seed": 4,
    "train": {"kind": "bars", "head": "popcode_sym", "epochs": 2, "width_scale": 0.125}})";
  const auto r = run_cli({"--config", (dir / "cfg.json").string(), "train", "--out", (dir / "run").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto report = read_json(dir / "run" / "train_report.json");
  EXPECT_TRUE(report["test_squared_error_deg2"].is_number());
  EXPECT_TRUE(fs::exists(dir / "run" / "checkpoint.pcnet"));
  const auto curve = slurp(dir / "run" / "loss_curve.csv");
  EXPECT_EQ(curve.rfind("epoch,train_loss,test_metric\n", 0), 0u);
  EXPECT_EQ(std::count(curve.begin(), curve.end(), '\n'), 3);

  const auto e = run_cli({"eval", "--checkpoint", (dir / "run" / "checkpoint.pcnet").string(), "--out",
                          (dir / "eval").string()});
  ASSERT_EQ(e.code, 0) << e.err;
  const auto ev = read_json(dir / "eval" / "eval_report.json");
  EXPECT_EQ(ev["count"], 200);
  // evaluation of the same test split reproduces the training report
  EXPECT_DOUBLE_EQ(ev["test_squared_error_deg2"].get<double>(), report["test_squared_error_deg2"].get<double>());
}

TEST(Cli, EvalRepeatsReportsMeanAndStd) {
  TempDir dir;
  ASSERT_EQ(run_cli({"train", "--kind", "arrows", "--head", "single_var", "--epochs", "1", "--width-scale", "0.125",
                     "--out", (dir / "run").string()})
                .code,
            0);
  const auto e = run_cli({"eval", "--checkpoint", (dir / "run" / "checkpoint.pcnet").string(), "--repeats", "3",
                          "--out", (dir / "eval").string()});
  ASSERT_EQ(e.code, 0) << e.err;
  const auto ev = read_json(dir / "eval" / "eval_report.json");
  EXPECT_TRUE(ev["mean_squared_error_deg2"].is_number());
  EXPECT_TRUE(ev["std_squared_error_deg2"].is_number());
  EXPECT_EQ(ev["protocol"]["runs"].size(), 3u);
}

TEST(Cli, MetricsOnPerfectAndFlippedPoses) {
  TempDir dir;
  {
    std::ofstream f(dir / "box.obj");
    write_obj(f, make_box(40, 30, 20));
  }
  Rng rng(5);
  std::vector<metrics::InstancePose> perfect, flipped;
  for (int i = 0; i < 12; ++i) {
    const auto r = RotationMatrix::random(rng);
    const Vec3 t(rng.uniform(-20, 20), rng.uniform(-20, 20), rng.uniform(400, 600));
    perfect.push_back({"p" + std::to_string(i), r, r, t});
    flipped.push_back({"f" + std::to_string(i), r, r * rotation_z(kPi), t});
  }
  {
    std::ofstream f(dir / "perfect.csv");
    metrics::write_poses_csv(f, perfect);
    std::ofstream g(dir / "flipped.csv");
    metrics::write_poses_csv(g, flipped);
  }
  auto r = run_cli({"metrics", "--mesh", (dir / "box.obj").string(), "--poses", (dir / "perfect.csv").string(),
                    "--out", (dir / "m1").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto s = read_json(dir / "m1" / "metrics_summary.json");
  for (const char* k : {"mssd_accuracy", "mspd_accuracy", "vsd_accuracy", "vsd_lt_03", "vss", "adi_accuracy"}) {
    EXPECT_DOUBLE_EQ(s[k].get<double>(), 1.0) << k;
  }
  EXPECT_TRUE(fs::exists(dir / "m1" / "metrics_rows.csv"));

  r = run_cli({"metrics", "--mesh", (dir / "box.obj").string(), "--poses", (dir / "flipped.csv").string(),
               "--symmetry", "discrete", "--order", "2", "--out", (dir / "m2").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_DOUBLE_EQ(read_json(dir / "m2" / "metrics_summary.json")["mssd_accuracy"].get<double>(), 1.0);

  r = run_cli({"metrics", "--mesh", (dir / "box.obj").string(), "--poses", (dir / "flipped.csv").string(), "--out",
               (dir / "m3").string()});
  ASSERT_EQ(r.code, 0);
  EXPECT_LT(read_json(dir / "m3" / "metrics_summary.json")["mssd_accuracy"].get<double>(), 1.0);
}

TEST(Cli, DumpCodePeaks) {
  TempDir dir;
  auto peaks = [&](std::vector<std::string> extra) {
    extra.insert(extra.begin(), "dump-code");
    extra.push_back("--out");
    extra.push_back((dir / "code").string());
    const auto r = run_cli(extra);
    EXPECT_EQ(r.code, 0) << r.err;
    return read_json(dir / "code" / "dump_code.json")["peaks"].get<int>();
  };
  EXPECT_EQ(peaks({"--axis", "1", "0", "0", "--angle-deg", "90", "--symmetry", "discrete", "--order", "2"}), 4);
  EXPECT_EQ(peaks({"--axis", "1", "0", "0", "--angle-deg", "90"}), 2);
  EXPECT_EQ(peaks({"--axis", "1", "0", "0", "--angle-deg", "90", "--symmetry", "continuous"}), 2);
  EXPECT_EQ(slurp(dir / "code" / "heatmap.ppm").rfind("P6\n360 180\n255\n", 0), 0u);
  EXPECT_EQ(slurp(dir / "code" / "code.csv").rfind("n,m,sigma\n2562,0,", 0), 0u);
}

TEST(Cli, BenchReportSchema) {
  TempDir dir;
  std::ofstream(dir / "cfg.json") << R"({"version": 1, "bench": {"runs": 50, "trunk_runs": 3, "trunk_scale": 0.125}})";
  const auto r = run_cli({"--config", (dir / "cfg.json").string(), "bench", "--out", dir.path().string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto b = read_json(dir / "bench.json");
  ASSERT_EQ(b["decode"].size(), 3u);
  EXPECT_EQ(b["decode"][2]["length"], 92232);
  for (const auto& d : b["decode"]) {
    EXPECT_TRUE(d.contains("cold_us"));
    EXPECT_TRUE(d.contains("median_us"));
  }
  EXPECT_LE(b["decode"][0]["median_us"].get<double>(), b["decode"][2]["median_us"].get<double>());
  EXPECT_EQ(b["trunk_forward"]["outputs"], 92232);
  EXPECT_TRUE(b["trunk_forward"].contains("cold_ms"));
}
