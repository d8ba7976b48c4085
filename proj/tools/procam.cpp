#include "procam/bench.hpp"
#include "procam/debruijn.hpp"
#include "procam/io.hpp"
#include "procam/pipeline.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cerrno>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <string>
#include <thread>
#include <vector>

namespace fs = std::filesystem;
using namespace procam;

namespace {

enum Exit : int { ok = 0, usage = 2, io = 3, quality_gate = 4, calibration_failed = 5 };

struct UsageError : Error {
  using Error::Error;
};

struct Globals {
  std::uint64_t seed = 1;
  int jobs = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  std::string out = "out";
};

struct PatternArgs {
  int k = 4;
  int n = 3;
  int spacing = 12;
  int stripe_width = 4;
  int width = 800;
  int height = 600;
};

// Scene keys shared by `bench` and `synth`.
struct SceneArgs {
  int poses = 10;
  int pattern_k = 4;
  int pattern_n = 3;
  int pattern_spacing = 12;
  double depth_min = 1800.0;
  double depth_max = 2200.0;
  double tilt_min = 10.0;
  double tilt_max = 30.0;
  double board_offset = 250.0;
  int board_cols = 9;
  int board_rows = 7;
  double square_mm = 150.0;
  double baseline = 1500.0;
  double convergence = 2000.0;
};

struct BenchArgs {
  SceneArgs scene;
  int trials = 20;
  std::vector<double> sigmas = {0.0, 0.1, 0.25, 0.5, 0.75, 1.0};
  std::vector<std::string> methods = {"proposed", "proposed_wo_ba", "global_homography"};
  double pixel_sigma = -1.0;  // negative: follow σ
  double board_sigma = -1.0;
  bool out_of_plane_only = false;
  bool skip_ba = false;
};

struct SynthArgs {
  SceneArgs scene;
  double sigma = 0.0;
  double board_sigma = -1.0;
};

struct CalibrateArgs {
  std::string captures;
  bool skip_ba = false;
};

struct ReportArgs {
  std::string trials;
};

void add_scene_options(CLI::App* app, SceneArgs& s) {
  app->add_option("--poses", s.poses, "board poses per scene")->capture_default_str();
  app->add_option("--pattern-k", s.pattern_k, "pattern alphabet size")->capture_default_str();
  app->add_option("--pattern-n", s.pattern_n, "pattern window length")->capture_default_str();
  app->add_option("--pattern-spacing", s.pattern_spacing, "stripe spacing in projector px")->capture_default_str();
  app->add_option("--depth-min", s.depth_min, "mm")->capture_default_str();
  app->add_option("--depth-max", s.depth_max, "mm")->capture_default_str();
  app->add_option("--tilt-min", s.tilt_min, "deg")->capture_default_str();
  app->add_option("--tilt-max", s.tilt_max, "deg")->capture_default_str();
  app->add_option("--board-offset", s.board_offset, "checkerboard jitter, mm")->capture_default_str();
  app->add_option("--board-cols", s.board_cols, "inner corners per row")->capture_default_str();
  app->add_option("--board-rows", s.board_rows, "inner corners per column")->capture_default_str();
  app->add_option("--square-mm", s.square_mm, "checkerboard square size")->capture_default_str();
  app->add_option("--baseline", s.baseline, "camera-projector baseline, mm")->capture_default_str();
  app->add_option("--convergence", s.convergence, "toe-in convergence distance, mm")->capture_default_str();
}

SceneConfig scene_config(const SceneArgs& s, std::uint64_t seed) {
  SceneConfig cfg;
  cfg.pose_count = s.poses;
  cfg.pattern_k = s.pattern_k;
  cfg.pattern_n = s.pattern_n;
  cfg.pattern_spacing = s.pattern_spacing;
  cfg.depth_min_mm = s.depth_min;
  cfg.depth_max_mm = s.depth_max;
  cfg.tilt_min_deg = s.tilt_min;
  cfg.tilt_max_deg = s.tilt_max;
  cfg.board_offset_mm = s.board_offset;
  cfg.board = {s.board_cols, s.board_rows, s.square_mm};
  cfg.baseline_mm = s.baseline;
  cfg.convergence_mm = s.convergence;
  cfg.seed = seed;
  try {
    cfg.validate();
  } catch (const Error& e) {
    throw UsageError(std::string("invalid scene config: ") + e.what());
  }
  return cfg;
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string());
}

int cmd_pattern(const PatternArgs& a, const Globals& g) {
  std::optional<PatternGraph> graph;
  RgbImage image;
  try {
    graph.emplace(build_pattern_graph(a.k, a.n, a.spacing, a.width, a.height));
    image = render_pattern_image(*graph, a.stripe_width);
  } catch (const Error& e) {
    throw UsageError(e.what());
  }
  const fs::path out(g.out);
  ensure_dir(out);
  write_png(out / "pattern.png", image);
  write_json(out / "pattern.json", pattern_to_json(*graph));
  std::printf("pattern B(%d,%d): m = %d (%dx%d grid), %zu nodes, spacing %dx%d px\n", a.k, a.n, graph->size(),
              graph->size(), graph->size(), graph->nodes().size(), graph->spacing_x(), graph->spacing_y());
  std::printf("wrote %s and %s\n", (out / "pattern.png").c_str(), (out / "pattern.json").c_str());
  return ok;
}

void print_report(const BenchmarkReport& report) {
  std::printf("%-8s %-18s %12s %12s %10s %10s %6s\n", "sigma", "method", "rms_px", "align_mm", "rot_deg",
              "trans_mm", "fail");
  for (const GridPointSummary& s : report.summary) {
    std::printf("%-8.3g %-18s %12.6g %12.6g %10.4g %10.4g %3d/%-3d\n", s.sigma, method_name(s.method).c_str(),
                s.metrics[0].median, s.metrics[1].median, s.metrics[2].median, s.metrics[3].median, s.failures,
                s.trials);
  }
  for (const std::string& w : report.warnings) std::printf("warning: %s\n", w.c_str());
  std::printf("ordering proposed <= proposed_wo_ba <= global_homography: %s\n",
              report.ordering_holds() ? "holds" : "violated");
}

int finish_report(const BenchmarkReport& report, const Globals& g) {
  write_report_files(g.out, report);
  print_report(report);
  std::printf("wrote reports to %s\n", g.out.c_str());
  if (report.failure_gate_tripped()) {
    std::printf("more than 20%% of trials failed at some grid point\n");
    return quality_gate;
  }
  return ok;
}

int cmd_bench(const BenchArgs& a, const Globals& g) {
  const SceneConfig cfg = scene_config(a.scene, g.seed);
  if (a.trials < 1) throw UsageError("trials must be at least 1");
  if (a.sigmas.empty()) throw UsageError("empty sigma grid");
  for (double s : a.sigmas) {
    if (!(s >= 0.0)) throw UsageError("sigma must be non-negative");
  }
  std::vector<Method> methods;
  for (const std::string& name : a.methods) {
    try {
      methods.push_back(method_from_name(name));
    } catch (const Error& e) {
      throw UsageError(e.what());
    }
  }
  BenchOptions opts;
  opts.jobs = std::max(1, g.jobs);
  if (a.pixel_sigma >= 0) opts.noise.pixel_sigma = a.pixel_sigma;
  if (a.board_sigma >= 0) opts.noise.board_sigma = a.board_sigma;
  opts.noise.out_of_plane_only = a.out_of_plane_only;
  opts.pipeline.skip_ba = a.skip_ba;
  const BenchmarkReport report = run_benchmark(cfg, a.sigmas, a.trials, methods, opts);
  return finish_report(report, g);
}

int cmd_report(const ReportArgs& a, const Globals& g) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(read_text(a.trials));
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError("", std::string("malformed JSON: ") + e.what());
  }
  return finish_report(summarize(trials_from_json(doc)), g);
}

int cmd_calibrate(const CalibrateArgs& a, const Globals& g) {
  const CaptureFile captures = load_captures(a.captures);
  PipelineOptions opts;
  opts.skip_ba = a.skip_ba;
  SystemCalibration calib;
  try {
    calib = calibrate_full(captures.poses, captures.board, opts);
  } catch (const Error& e) {
    std::fprintf(stderr, "calibration failed: %s\n", e.what());
    return calibration_failed;
  }
  const fs::path out(g.out);
  ensure_dir(out);
  nlohmann::json doc = calibration_to_json(calib);
  doc["convergence"] = convergence_to_json(calib.report);
  write_json(out / "calibration.json", doc);

  for (const std::string& w : calib.warnings) std::printf("warning: %s\n", w.c_str());
  std::printf("%s, %zu poses, %s after %d iterations\n", a.skip_ba ? "pose-only refinement" : "bundle adjustment",
              calib.pose_ids.size(), calib.report.termination.c_str(), calib.report.iterations);
  std::printf("RMS reprojection error (px)\n");
  std::printf("  camera     %.6g\n", calib.rms.camera);
  std::printf("  projector  %.6g\n", calib.rms.projector);
  std::printf("  stereo     %.6g\n", calib.rms.stereo);
  std::printf("wrote %s\n", (out / "calibration.json").c_str());
  return ok;
}

int cmd_synth(const SynthArgs& a, const Globals& g) {
  const SceneConfig cfg = scene_config(a.scene, g.seed);
  if (!(a.sigma >= 0.0)) throw UsageError("sigma must be non-negative");
  const GroundTruthScene scene = generate_scene(cfg);
  CaptureFile file;
  file.board = cfg.board;
  if (a.sigma > 0.0 || a.board_sigma > 0.0) {
    NoiseOptions noise;
    if (a.board_sigma >= 0) noise.board_sigma = a.board_sigma;
    file.poses = add_noise(scene, a.sigma, noise_seed(g.seed, 0, 0), noise).captures;
  } else {
    file.poses = scene_captures(scene);
  }
  const fs::path out(g.out);
  ensure_dir(out);
  write_json(out / "captures.json", captures_to_json(file));
  std::printf("synthetic scene: %zu poses, %zu nodes, sigma %.3g\n", scene.poses.size(), scene.node_count(), a.sigma);
  std::printf("wrote %s\n", (out / "captures.json").c_str());
  return ok;
}

bool flag_given(int argc, char** argv, const char* name) {
  const std::size_t len = std::strlen(name);
  for (int i = 1; i < argc; ++i) {
    if (std::strncmp(argv[i], name, len) == 0 && (argv[i][len] == '\0' || argv[i][len] == '=')) return true;
  }
  return false;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Structured-light camera-projector calibration toolkit", "procam"};
  app.require_subcommand(1);
  app.fallthrough();
  app.allow_config_extras(false);
  app.set_config("--config", "", "TOML config file; flags override its values");

  Globals g;
  app.add_option("--seed", g.seed, "master seed (PROCAM_SEED overrides the config file)")->capture_default_str();
  app.add_option("--jobs,-j", g.jobs, "worker threads")->capture_default_str();
  app.add_option("--out,-o", g.out, "output directory")->capture_default_str();

  PatternArgs pa;
  CLI::App* pattern = app.add_subcommand("pattern", "export the De Bruijn stripe pattern")->configurable();
  pattern->add_option("--k", pa.k, "alphabet size")->capture_default_str();
  pattern->add_option("--n", pa.n, "window length")->capture_default_str();
  pattern->add_option("--spacing", pa.spacing, "stripe spacing, px")->capture_default_str();
  pattern->add_option("--stripe-width", pa.stripe_width, "stripe width, px")->capture_default_str();
  pattern->add_option("--width", pa.width, "projector width, px")->capture_default_str();
  pattern->add_option("--height", pa.height, "projector height, px")->capture_default_str();

  BenchArgs ba;
  CLI::App* bench = app.add_subcommand("bench", "run the synthetic noise sweep")->configurable();
  add_scene_options(bench, ba.scene);
  bench->add_option("--trials", ba.trials, "trials per noise level")->capture_default_str();
  bench->add_option("--sigmas", ba.sigmas, "noise grid")->delimiter(',')->capture_default_str();
  bench->add_option("--methods", ba.methods, "methods to compare")->delimiter(',')->capture_default_str();
  bench->add_option("--pixel-sigma", ba.pixel_sigma, "fixed pixel noise, px (default: follow the grid)");
  bench->add_option("--board-sigma", ba.board_sigma, "fixed board noise, mm (default: follow the grid)");
  bench->add_flag("--out-of-plane-only", ba.out_of_plane_only, "perturb board points along z only");
  bench->add_flag("--skip-ba", ba.skip_ba, "pose-only refinement for the proposed method");

  CalibrateArgs ca;
  CLI::App* calibrate = app.add_subcommand("calibrate", "calibrate from a capture file")->configurable();
  calibrate->add_option("captures", ca.captures, "capture JSON")->required();
  calibrate->add_flag("--skip-ba", ca.skip_ba, "refine board poses only");

  ReportArgs ra;
  CLI::App* report = app.add_subcommand("report", "re-render reports from a raw trial dump")->configurable();
  report->add_option("trials", ra.trials, "trials.json from a bench run")->required();

  SynthArgs sa;
  CLI::App* synth = app.add_subcommand("synth", "export captures of a synthetic scene")->configurable();
  add_scene_options(synth, sa.scene);
  synth->add_option("--sigma", sa.sigma, "pixel and board noise")->capture_default_str();
  synth->add_option("--board-sigma", sa.board_sigma, "board noise override, mm");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::FileError& e) {
    app.exit(e);
    return io;
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return usage;
  }

  if (const char* env = std::getenv("PROCAM_SEED"); env != nullptr && !flag_given(argc, argv, "--seed")) {
    char* end = nullptr;
    errno = 0;
    const unsigned long long v = std::strtoull(env, &end, 0);
    if (*env == '\0' || *end != '\0' || errno != 0) {
      std::fprintf(stderr, "PROCAM_SEED: not an unsigned integer: %s\n", env);
      return usage;
    }
    g.seed = v;
  }

  try {
    if (*pattern) return cmd_pattern(pa, g);
    if (*bench) return cmd_bench(ba, g);
    if (*calibrate) return cmd_calibrate(ca, g);
    if (*report) return cmd_report(ra, g);
    if (*synth) return cmd_synth(sa, g);
  } catch (const SchemaError& e) {
    const std::string what = e.what();
    std::fprintf(stderr, "schema error at \"%s\": %s\n", e.pointer().c_str(), what.substr(e.pointer().size() + 2).c_str());
    return usage;
  } catch (const UsageError& e) {
    std::fprintf(stderr, "%s\n", e.what());
    return usage;
  } catch (const IoError& e) {
    std::fprintf(stderr, "%s\n", e.what());
    return io;
  } catch (const Error& e) {
    std::fprintf(stderr, "%s\n", e.what());
    return usage;
  }
  return usage;
}
