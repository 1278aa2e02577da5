#include "commands.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <iomanip>
#include <ostream>

#include "CLI11.hpp"
#include "popcode/code.hpp"
#include "popcode/error.hpp"
#include "popcode/kernels.hpp"
#include "popcode/mesh.hpp"
#include "popcode/net.hpp"

namespace popcode::cli {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

void write_json(const fs::path& path, const ordered_json& j) {
  std::ofstream f(path);
  if (!f) throw FileNotFound("cannot write " + path.string());
  f << j.dump(2) << '\n';
}

std::ofstream open_out(const fs::path& path, bool binary = false) {
  std::ofstream f(path, binary ? std::ios::binary : std::ios::out);
  if (!f) throw FileNotFound("cannot write " + path.string());
  return f;
}

ordered_json repeat_report(const train::RepeatSummary& s) {
  ordered_json runs = ordered_json::array();
  for (const auto& r : s.runs) {
    runs.push_back({{"run", r.run}, {"seed", r.seed}, {"test_squared_error_deg2", r.test_error}});
  }
  return {{"repeats", s.runs.size()},
          {"mean_squared_error_deg2", s.mean},
          {"std_squared_error_deg2", s.stddev},
          {"runs", runs}};
}

ordered_json checkpoint_metadata(const Config& c, synth::ShapeKind kind, std::uint64_t run_seed, double test_error) {
  const auto& t = c.train;
  return {{"kind", synth::to_string(kind)},
          {"head", head_to_json(to_head(t))},
          {"train",
           {{"epochs", t.epochs}, {"batch", t.batch}, {"lr", t.lr}, {"width_scale", t.width_scale}, {"augment", t.augment}}},
          {"seed", c.seed},
          {"run_seed", run_seed},
          {"test_squared_error_deg2", test_error}};
}

void save_run(const fs::path& dir, const Config& c, synth::ShapeKind kind, std::uint64_t run_seed,
              const train::TrainResult& res) {
  fs::create_directories(dir);
  nn::save_checkpoint(dir / "checkpoint.pcnet", *res.net, checkpoint_metadata(c, kind, run_seed, res.test_error));
  auto curve = open_out(dir / "loss_curve.csv");
  train::write_curve_csv(curve, res.curve);
}

template <typename F>
double median_ms(std::size_t runs, F&& f) {
  std::vector<double> t(runs);
  for (auto& v : t) {
    const auto t0 = std::chrono::steady_clock::now();
    f();
    v = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  }
  std::nth_element(t.begin(), t.begin() + static_cast<std::ptrdiff_t>(runs / 2), t.end());
  return t[runs / 2];
}

}  // namespace

ordered_json cmd_gen_synth(const Config& c, const fs::path& out, std::ostream& log) {
  const auto kind = synth::shape_kind_from_string(c.gen_synth.kind);
  const auto data = synth::gen_dataset(kind, derive_seed(c.seed, "data"), c.gen_synth.count, c.gen_synth.train,
                                       c.gen_synth.test);
  synth::write_dataset(out, data);
  ordered_json report = {{"command", "gen-synth"},
                         {"seed", c.seed},
                         {"kind", synth::to_string(kind)},
                         {"train", data.train.size()},
                         {"test", data.test.size()},
                         {"manifest", (out / "manifest.csv").string()}};
  write_json(out / "gen_synth.json", report);
  log << "seed " << c.seed << ": wrote " << data.train.size() << " train and " << data.test.size() << ' '
      << synth::to_string(kind) << " images to " << out.string() << '\n';
  return report;
}

ordered_json cmd_train(const Config& c, const fs::path& out, std::ostream& log) {
  const auto& t = c.train;
  const auto kind = synth::shape_kind_from_string(t.kind);
  const auto head = to_head(t);
  const auto tc = to_train(t);
  fs::create_directories(out);
  ordered_json report = {{"command", "train"}, {"seed", c.seed}, {"kind", synth::to_string(kind)}, {"head", t.head}};

  if (t.repeats > 1) {
    log << "training " << t.repeats << " runs of " << t.head << " on " << synth::to_string(kind) << '\n';
    const auto summary = train::repeat_synth(kind, head, tc, c.seed, t.repeats, t.jobs,
                                             [&](std::size_t r, const train::TrainResult& res) {
                                               std::ostringstream name;
                                               name << "run_" << std::setw(2) << std::setfill('0') << r;
                                               save_run(out / name.str(), c, kind, train::repeat_seed(c.seed, r), res);
                                             });
    report.update(repeat_report(summary));
    log << "squared angle error: " << summary.mean << " +- " << summary.stddev << " deg^2\n";
  } else {
    const std::uint64_t run_seed = train::repeat_seed(c.seed, 0);
    synth::Dataset data;
    if (t.dataset.empty()) {
      data = synth::gen_dataset(kind, derive_seed(run_seed, "data"));
    } else {
      data = synth::read_dataset(t.dataset);
      for (const auto* part : {&data.train, &data.test}) {
        for (const auto& s : *part) {
          if (s.kind != kind) throw InvalidArgument("dataset " + t.dataset + " does not hold " + synth::to_string(kind));
        }
      }
    }
    const auto res = train::train_synth(data, kind, head, tc, run_seed, [&](const train::EpochRecord& e) {
      log << "epoch " << e.epoch << " loss " << e.train_loss;
      if (e.test_metric) log << " test " << *e.test_metric << " deg^2";
      log << '\n';
    });
    save_run(out, c, kind, run_seed, res);
    report["run_seed"] = run_seed;
    report["epochs"] = t.epochs;
    report["final_train_loss"] = res.curve.back().train_loss;
    report["test_squared_error_deg2"] = res.test_error;
    report["checkpoint"] = (out / "checkpoint.pcnet").string();
    log << "test squared angle error: " << res.test_error << " deg^2\n";
  }
  write_json(out / "train_report.json", report);
  return report;
}

ordered_json cmd_eval(const Config& c, const fs::path& out, std::ostream& log) {
  if (c.eval.checkpoint.empty()) throw ConfigError("config: eval.checkpoint: required (or pass --checkpoint)");
  const auto ck = nn::load_checkpoint(fs::path(c.eval.checkpoint));
  const auto& meta = ck.metadata;
  train::HeadConfig head;
  synth::ShapeKind kind;
  std::uint64_t run_seed;
  try {
    head = head_from_json(meta.at("head"));
    kind = synth::shape_kind_from_string(meta.at("kind").get<std::string>());
    run_seed = meta.at("run_seed").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint metadata: ") + e.what());
  }
  fs::create_directories(out);
  ordered_json report = {{"command", "eval"},
                         {"checkpoint", c.eval.checkpoint},
                         {"kind", synth::to_string(kind)},
                         {"head", train::to_string(head.kind)}};

  const train::Head h(head);
  const auto data = c.eval.dataset.empty() ? synth::gen_dataset(kind, derive_seed(run_seed, "data"))
                                           : synth::read_dataset(c.eval.dataset);
  std::vector<double> errors;
  const double mean = train::evaluate(*ck.net, h, data.test, kind, &errors);
  std::vector<double> sorted = errors;
  std::sort(sorted.begin(), sorted.end());
  report["count"] = errors.size();
  report["test_squared_error_deg2"] = mean;
  report["median_squared_error_deg2"] = sorted[sorted.size() / 2];
  log << "checkpoint on " << errors.size() << " test images: " << mean << " deg^2\n";

  if (c.eval.repeats > 1) {
    // Retrain with the checkpoint's settings on fresh splits.
    train::TrainConfig tc;
    const auto& tj = meta.at("train");
    tc.epochs = tj.at("epochs").get<std::size_t>();
    tc.batch = tj.at("batch").get<std::size_t>();
    tc.adam.lr = tj.at("lr").get<double>();
    tc.width_scale = tj.at("width_scale").get<double>();
    tc.augment_enabled = tj.at("augment").get<bool>();
    tc.eval_every = tc.epochs;
    log << "repeating the protocol " << c.eval.repeats << " times\n";
    const auto summary = train::repeat_synth(kind, head, tc, c.seed, c.eval.repeats, c.eval.jobs);
    report["protocol"] = repeat_report(summary);
    report["mean_squared_error_deg2"] = summary.mean;
    report["std_squared_error_deg2"] = summary.stddev;
    log << "squared angle error over " << c.eval.repeats << " runs: " << summary.mean << " +- " << summary.stddev
        << " deg^2\n";
  }
  write_json(out / "eval_report.json", report);
  return report;
}

ordered_json cmd_metrics(const Config& c, const fs::path& out, std::ostream& log) {
  if (c.metrics.mesh.empty() || c.metrics.poses.empty()) {
    throw ConfigError("config: metrics.mesh and metrics.poses are required (or pass --mesh/--poses)");
  }
  const auto mesh = read_obj(fs::path(c.metrics.mesh));
  std::ifstream pf(c.metrics.poses);
  if (!pf) throw FileNotFound("poses file not found: " + c.metrics.poses);
  const auto poses = metrics::read_poses_csv(pf);
  if (poses.empty()) throw EmptyInput("no poses in " + c.metrics.poses);
  const auto symmetry = to_symmetry(c.metrics.symmetry);
  const auto rows = metrics::evaluate_instances(poses, mesh, symmetry, c.metrics.camera);
  const auto summary = metrics::summarize(rows, mesh.diameter, c.metrics.camera.width);
  fs::create_directories(out);
  {
    auto f = open_out(out / "metrics_rows.csv");
    metrics::write_rows_csv(f, rows);
  }
  {
    auto f = open_out(out / "metrics_summary.json");
    metrics::write_summary_json(f, summary);
  }
  const ordered_json report = {{"command", "metrics"},
                               {"count", summary.count},
                               {"mssd_accuracy", summary.mssd_accuracy},
                               {"mspd_accuracy", summary.mspd_accuracy},
                               {"vsd_accuracy", summary.vsd_accuracy},
                               {"vsd_lt_03", summary.vsd_lt_03},
                               {"vss", summary.vss},
                               {"adi_accuracy", summary.adi_accuracy}};
  log << "evaluated " << summary.count << " instances: MSSD " << summary.mssd_accuracy << ", MSPD "
      << summary.mspd_accuracy << ", VSD " << summary.vsd_accuracy << ", ADI " << summary.adi_accuracy << '\n';
  return report;
}

ordered_json cmd_dump_code(const Config& c, const fs::path& out, std::ostream& log) {
  const auto& d = c.dump_code;
  const Vec3 axis(d.axis[0], d.axis[1], d.axis[2]);
  const RotationMatrix r = matrix_from_axis_angle(AxisAngle(axis, deg2rad(d.angle_deg)));
  const auto symmetry = to_symmetry(d.symmetry);
  const TuningConfig tc{deg2rad(d.sigma_deg)};
  fs::create_directories(out);

  std::vector<double> axis_values;
  std::shared_ptr<const SphereLattice> sphere;
  CodeHeader header;
  header.sigma = tc.sigma;
  std::vector<double> activations;
  if (symmetry.is_continuous()) {
    sphere = std::make_shared<const SphereLattice>(fibonacci_sphere(d.n));
    const auto code = encode_axis_only(r * symmetry.axis, sphere, tc);
    header.n = static_cast<std::uint32_t>(d.n);
    header.m = 0;
    activations = code.activations;
    axis_values = code.activations;
  } else {
    auto grid = std::make_shared<const NeuronGrid>(d.n, d.m);
    const auto code = target_code(r, symmetry, grid, tc);
    header.n = static_cast<std::uint32_t>(d.n);
    header.m = static_cast<std::uint32_t>(d.m);
    activations = code.activations;
    axis_values = max_over_angle(code);
    sphere = std::shared_ptr<const SphereLattice>(grid, &grid->sphere());
  }
  {
    auto f = open_out(out / "code.csv");
    write_code_csv(f, header, activations);
  }
  {
    auto f = open_out(out / "heatmap.ppm", true);
    write_sphere_heatmap_ppm(f, axis_values, *sphere, d.width, d.height);
  }
  const std::size_t peaks = count_sphere_peaks(axis_values, *sphere, deg2rad(d.sigma_deg));
  const ordered_json report = {{"command", "dump-code"},
                               {"n", d.n},
                               {"m", symmetry.is_continuous() ? 0 : d.m},
                               {"sigma_deg", d.sigma_deg},
                               {"symmetry", d.symmetry.kind},
                               {"peaks", peaks},
                               {"csv", (out / "code.csv").string()},
                               {"heatmap", (out / "heatmap.ppm").string()}};
  write_json(out / "dump_code.json", report);
  log << "code with " << activations.size() << " activations, " << peaks << " peaks on the sphere\n";
  return report;
}

ordered_json cmd_bench(const Config& c, const fs::path& out, std::ostream& log) {
  Rng rng(derive_seed(c.seed, "bench"));
  ordered_json decode = ordered_json::array();
  double cold_ms = 0.0, warm_ms = 0.0;
  for (std::size_t len : {2562u * 4u, 2562u * 12u, 2562u * 36u}) {
    std::vector<double> code(len);
    for (auto& v : code) v = rng.uniform();
    volatile std::size_t sink = 0;
    const auto t0 = std::chrono::steady_clock::now();
    sink = decode_index(code);
    const double cold = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    const double warm = median_ms(c.bench.runs, [&] { sink = decode_index(code); });
    (void)sink;
    decode.push_back({{"length", len}, {"cold_us", cold * 1e3}, {"median_us", warm * 1e3}});
    cold_ms = cold;
    warm_ms = warm;
  }
  log << "decode of 92232 activations: median " << warm_ms * 1e3 << " us (cold " << cold_ms * 1e3 << " us)\n";

  ordered_json trunk = nullptr;
  if (c.bench.trunk_runs > 0) {
    nn::Net<float> net(nn::build_tless_net(2562, 36, c.bench.trunk_scale), derive_seed(c.seed, "trunk"));
    nn::Tensor<float> x({1, 1, 128, 128});
    for (auto& v : x.data) v = static_cast<float>(rng.uniform());
    const auto t0 = std::chrono::steady_clock::now();
    net.forward(x, false);
    const double cold = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    const double warm = median_ms(c.bench.trunk_runs, [&] { net.forward(x, false); });
    trunk = {{"scale", c.bench.trunk_scale},
             {"parameters", net.parameter_count()},
             {"outputs", net.output_size()},
             {"cold_ms", cold},
             {"median_ms", warm}};
    log << "trunk forward (scale " << c.bench.trunk_scale << ", batch 1): median " << warm << " ms (cold " << cold
        << " ms)\n";
  }
  const ordered_json report = {{"command", "bench"},
                               {"threads", kernels::num_threads()},
                               {"runs", c.bench.runs},
                               {"decode", decode},
                               {"trunk_forward", trunk}};
  fs::create_directories(out);
  write_json(out / "bench.json", report);
  return report;
}

int run(int argc, char** argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Population-code pose experiments"};
  app.require_subcommand(1);
  std::string config_path, out_dir;
  std::optional<std::uint64_t> seed;
  app.add_option("--config", config_path, "JSON config file")->check(CLI::ExistingFile);
  app.add_option("--seed", seed, "top-level seed (overrides the config)");
  app.add_option("--out", out_dir, "output directory");
  app.fallthrough();

  std::optional<std::string> kind, head, dataset, checkpoint, mesh, poses, symmetry_kind;
  std::optional<std::size_t> epochs, repeats, runs, order;
  std::optional<int> jobs;
  std::optional<double> angle_deg, width_scale;
  std::vector<double> axis;

  auto* gen = app.add_subcommand("gen-synth", "render a synthetic bars/arrows dataset");
  gen->add_option("--kind", kind, "bars or arrows");
  auto* tr = app.add_subcommand("train", "train the synthetic network");
  tr->add_option("--kind", kind, "bars or arrows");
  tr->add_option("--head", head, "popcode, popcode_sym, one_hot_mse, one_hot_ce, single_var or multi_hyp");
  tr->add_option("--dataset", dataset, "dataset directory from gen-synth");
  tr->add_option("--epochs", epochs);
  tr->add_option("--width-scale", width_scale);
  tr->add_option("--repeats", repeats);
  tr->add_option("--jobs", jobs);
  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint");
  ev->add_option("--checkpoint", checkpoint);
  ev->add_option("--dataset", dataset);
  ev->add_option("--repeats", repeats);
  ev->add_option("--jobs", jobs);
  auto* me = app.add_subcommand("metrics", "pose error metrics for a mesh and a pose list");
  me->add_option("--mesh", mesh, "OBJ mesh");
  me->add_option("--poses", poses, "pose CSV");
  me->add_option("--symmetry", symmetry_kind, "none, discrete or continuous");
  me->add_option("--order", order);
  auto* du = app.add_subcommand("dump-code", "write a target code and its sphere heat map");
  du->add_option("--axis", axis, "rotation axis x y z")->expected(3);
  du->add_option("--angle-deg", angle_deg);
  du->add_option("--symmetry", symmetry_kind, "none, discrete or continuous");
  du->add_option("--order", order);
  auto* be = app.add_subcommand("bench", "decode and forward-pass timings");
  be->add_option("--runs", runs);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  }

  try {
    Config c = config_path.empty() ? Config{} : load_config(config_path);
    if (seed) c.seed = *seed;
    const std::string name = app.get_subcommands().front()->get_name();
    if (name == "gen-synth") {
      if (kind) c.gen_synth.kind = *kind;
    } else if (name == "train") {
      if (kind) c.train.kind = *kind;
      if (head) c.train.head = *head;
      if (dataset) c.train.dataset = *dataset;
      if (epochs) c.train.epochs = *epochs;
      if (width_scale) c.train.width_scale = *width_scale;
      if (repeats) c.train.repeats = *repeats;
      if (jobs) c.train.jobs = *jobs;
    } else if (name == "eval") {
      if (checkpoint) c.eval.checkpoint = *checkpoint;
      if (dataset) c.eval.dataset = *dataset;
      if (repeats) c.eval.repeats = *repeats;
      if (jobs) c.eval.jobs = *jobs;
    } else if (name == "metrics") {
      if (mesh) c.metrics.mesh = *mesh;
      if (poses) c.metrics.poses = *poses;
      if (symmetry_kind) c.metrics.symmetry.kind = *symmetry_kind;
      if (order) c.metrics.symmetry.order = static_cast<int>(*order);
    } else if (name == "dump-code") {
      if (axis.size() == 3) c.dump_code.axis = {axis[0], axis[1], axis[2]};
      if (angle_deg) c.dump_code.angle_deg = *angle_deg;
      if (symmetry_kind) c.dump_code.symmetry.kind = *symmetry_kind;
      if (order) c.dump_code.symmetry.order = static_cast<int>(*order);
    } else if (name == "bench") {
      if (runs) c.bench.runs = *runs;
    }
    validate(c);

    const fs::path dir = out_dir.empty() ? fs::path("out") / name : fs::path(out_dir);
    ordered_json report;
    if (name == "gen-synth") report = cmd_gen_synth(c, dir, out);
    if (name == "train") report = cmd_train(c, dir, out);
    if (name == "eval") report = cmd_eval(c, dir, out);
    if (name == "metrics") report = cmd_metrics(c, dir, out);
    if (name == "dump-code") report = cmd_dump_code(c, dir, out);
    if (name == "bench") report = cmd_bench(c, dir, out);
    out << report.dump(2) << '\n';
    return 0;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 3;
  }
}

}  // namespace popcode::cli
