#include "procam/io.hpp"

#include <png.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace procam {

using nlohmann::json;

namespace {

std::string join(const std::string& base, const std::string& key) { return base + "/" + key; }
std::string join(const std::string& base, std::size_t index) { return base + "/" + std::to_string(index); }

const json& field(const json& obj, const std::string& ptr, const char* key) {
  if (!obj.contains(key)) throw SchemaError(join(ptr, key), "missing field");
  return obj.at(key);
}

double number(const json& v, const std::string& ptr) {
  if (!v.is_number()) throw SchemaError(ptr, "expected a number");
  const double d = v.get<double>();
  if (!std::isfinite(d)) throw SchemaError(ptr, "expected a finite number");
  return d;
}

int integer(const json& v, const std::string& ptr) {
  if (!v.is_number_integer()) throw SchemaError(ptr, "expected an integer");
  return v.get<int>();
}

const json& array(const json& v, const std::string& ptr) {
  if (!v.is_array()) throw SchemaError(ptr, "expected an array");
  return v;
}

Vec2 point2(const json& v, const std::string& ptr) {
  if (!v.is_array() || v.size() != 2) throw SchemaError(ptr, "expected [x, y]");
  return {number(v[0], join(ptr, 0)), number(v[1], join(ptr, 1))};
}

json vec(const Vec2& v) { return json::array({v.x(), v.y()}); }
json vec(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

}  // namespace

CaptureFile parse_captures(const json& doc) {
  if (!doc.is_object()) throw SchemaError("", "expected an object");
  const int schema = integer(field(doc, "", "schema"), "/schema");
  if (schema != kCaptureSchema) throw SchemaError("/schema", "unsupported schema " + std::to_string(schema));

  CaptureFile out;
  const json& board = field(doc, "", "board");
  if (!board.is_object()) throw SchemaError("/board", "expected an object");
  out.board.cols = integer(field(board, "/board", "cols"), "/board/cols");
  out.board.rows = integer(field(board, "/board", "rows"), "/board/rows");
  out.board.square_mm = number(field(board, "/board", "square_mm"), "/board/square_mm");
  if (out.board.cols < 2) throw SchemaError("/board/cols", "must be at least 2");
  if (out.board.rows < 2) throw SchemaError("/board/rows", "must be at least 2");
  if (!(out.board.square_mm > 0.0)) throw SchemaError("/board/square_mm", "must be positive");
  const auto corner_count = static_cast<std::size_t>(out.board.cols * out.board.rows);

  const json& poses = array(field(doc, "", "poses"), "/poses");
  for (std::size_t j = 0; j < poses.size(); ++j) {
    const std::string pp = join("/poses", j);
    const json& pose = poses[j];
    if (!pose.is_object()) throw SchemaError(pp, "expected an object");
    PoseCapture cap;
    cap.id = integer(field(pose, pp, "id"), join(pp, "id"));
    const json& corners = array(field(pose, pp, "corners"), join(pp, "corners"));
    if (corners.size() != corner_count) {
      throw SchemaError(join(pp, "corners"), "expected " + std::to_string(corner_count) + " corners, got " +
                                                 std::to_string(corners.size()));
    }
    for (std::size_t i = 0; i < corners.size(); ++i) cap.corners.push_back(point2(corners[i], join(join(pp, "corners"), i)));
    const json& nodes = array(field(pose, pp, "nodes"), join(pp, "nodes"));
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      const std::string np = join(join(pp, "nodes"), i);
      const json& node = nodes[i];
      if (!node.is_object()) throw SchemaError(np, "expected an object");
      NodeCapture n;
      n.node_id = integer(field(node, np, "id"), join(np, "id"));
      n.x_c = point2(field(node, np, "xc"), join(np, "xc"));
      n.x_p = point2(field(node, np, "xp"), join(np, "xp"));
      cap.nodes.push_back(n);
    }
    out.poses.push_back(std::move(cap));
  }
  return out;
}

CaptureFile load_captures(const std::filesystem::path& path) {
  const std::string text = read_text(path);
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw SchemaError("", std::string("malformed JSON: ") + e.what());
  }
  return parse_captures(doc);
}

json captures_to_json(const CaptureFile& captures) {
  json poses = json::array();
  for (const PoseCapture& cap : captures.poses) {
    json corners = json::array();
    for (const Vec2& c : cap.corners) corners.push_back(vec(c));
    json nodes = json::array();
    for (const NodeCapture& n : cap.nodes) nodes.push_back({{"id", n.node_id}, {"xc", vec(n.x_c)}, {"xp", vec(n.x_p)}});
    poses.push_back({{"id", cap.id}, {"corners", std::move(corners)}, {"nodes", std::move(nodes)}});
  }
  return {{"schema", kCaptureSchema},
          {"board", {{"cols", captures.board.cols}, {"rows", captures.board.rows}, {"square_mm", captures.board.square_mm}}},
          {"poses", std::move(poses)}};
}

json device_to_json(const Device& device) {
  const Intrinsics& k = device.intrinsics;
  const Distortion& d = device.distortion;
  return {{"fx", k.fx}, {"fy", k.fy}, {"cx", k.cx}, {"cy", k.cy},
          {"k1", d.k1}, {"k2", d.k2}, {"p1", d.p1}, {"p2", d.p2}};
}

json pose_to_json(const Pose& pose) { return {{"r", vec(pose.r)}, {"t", vec(pose.t)}}; }

json convergence_to_json(const ConvergenceReport& report) {
  return {{"iterations", report.iterations},       {"outer_iterations", report.outer_iterations},
          {"initial_cost", report.initial_cost},   {"final_cost", report.final_cost},
          {"gradient_norm", report.gradient_norm}, {"termination", report.termination},
          {"converged", report.converged}};
}

json calibration_to_json(const SystemCalibration& calib) {
  json poses = json::array();
  for (std::size_t j = 0; j < calib.board_poses.size(); ++j) {
    json p = pose_to_json(calib.board_poses[j]);
    p["id"] = calib.pose_ids[j];
    poses.push_back(std::move(p));
  }
  json nodes = json::array();
  for (const CalibratedNode& n : calib.nodes) {
    nodes.push_back({{"pose", calib.pose_ids[static_cast<std::size_t>(n.pose)]},
                     {"id", n.node_id},
                     {"xm_init", vec(n.x_m_init)},
                     {"xm", vec(n.x_m)}});
  }
  const auto rms = [](const RmsTriple& r) {
    return json{{"camera", r.camera}, {"projector", r.projector}, {"stereo", r.stereo}};
  };
  return {{"camera", device_to_json(calib.camera)},
          {"projector", device_to_json(calib.projector)},
          {"stereo", pose_to_json(calib.stereo)},
          {"board_poses", std::move(poses)},
          {"nodes", std::move(nodes)},
          {"initial_rms", rms(calib.stage1_rms)},
          {"rms", rms(calib.rms)},
          {"warnings", calib.warnings}};
}

json pattern_to_json(const PatternGraph& graph) {
  json nodes = json::array();
  for (const PatternNode& n : graph.nodes()) {
    nodes.push_back({{"id", graph.node_id(n.row, n.col)}, {"row", n.row}, {"col", n.col}, {"xp", vec(n.x_p)}});
  }
  json edges = json::array();
  for (const PatternEdge& e : graph.edges()) {
    json pixels = json::array();
    for (const auto& px : e.pixels) pixels.push_back(json::array({px[0], px[1]}));
    edges.push_back({{"from", e.from}, {"to", e.to}, {"label", static_cast<int>(e.label)}, {"pixels", std::move(pixels)}});
  }
  json h = json::array();
  for (Color c : graph.horizontal_colors()) h.push_back(static_cast<int>(c));
  json v = json::array();
  for (Color c : graph.vertical_colors()) v.push_back(static_cast<int>(c));
  return {{"k", graph.k()},
          {"n", graph.n()},
          {"m", graph.size()},
          {"width", graph.width()},
          {"height", graph.height()},
          {"spacing", {graph.spacing_x(), graph.spacing_y()}},
          {"sequence", std::vector<int>(graph.sequence().begin(), graph.sequence().end())},
          {"horizontal_colors", std::move(h)},
          {"vertical_colors", std::move(v)},
          {"nodes", std::move(nodes)},
          {"edges", std::move(edges)}};
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw IoError("cannot read " + path.string());
  return ss.str();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  out.flush();
  if (!out) throw IoError("cannot write " + path.string());
}

void write_json(const std::filesystem::path& path, const json& doc) { write_text(path, doc.dump(2) + "\n"); }

void write_png(const std::filesystem::path& path, const RgbImage& image) {
  if (image.width <= 0 || image.height <= 0) throw Error("empty image");
  FILE* fp = std::fopen(path.string().c_str(), "wb");
  if (!fp) throw IoError("cannot write " + path.string());
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
    throw IoError("libpng initialization failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
    throw IoError("cannot write " + path.string());
  }
  png_init_io(png, fp);
  png_set_IHDR(png, info, static_cast<png_uint_32>(image.width), static_cast<png_uint_32>(image.height), 8,
               PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  const auto stride = static_cast<std::size_t>(image.width) * 3;
  for (int y = 0; y < image.height; ++y) {
    auto* row = const_cast<png_bytep>(image.data.data() + static_cast<std::size_t>(y) * stride);
    png_write_row(png, row);
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  if (std::fclose(fp) != 0) throw IoError("cannot write " + path.string());
}

std::string report_csv(const BenchmarkReport& report) {
  std::string out = "sigma,method,metric,median,q1,q3,trials,failures\n";
  for (const GridPointSummary& g : report.summary) {
    for (std::size_t k = 0; k < kMetricNames.size(); ++k) {
      const MetricSummary& m = g.metrics[k];
      out += format_double(g.sigma) + "," + method_name(g.method) + "," + kMetricNames[k] + "," +
             format_double(m.median) + "," + format_double(m.q1) + "," + format_double(m.q3) + "," +
             std::to_string(g.trials) + "," + std::to_string(g.failures) + "\n";
    }
  }
  return out;
}

json report_json(const BenchmarkReport& report) {
  json rows = json::array();
  for (const GridPointSummary& g : report.summary) {
    json metrics = json::object();
    for (std::size_t k = 0; k < kMetricNames.size(); ++k) {
      const MetricSummary& m = g.metrics[k];
      metrics[kMetricNames[k]] = {{"median", m.median}, {"q1", m.q1}, {"q3", m.q3}};
    }
    rows.push_back({{"sigma", g.sigma},
                    {"method", method_name(g.method)},
                    {"trials", g.trials},
                    {"failures", g.failures},
                    {"metrics", std::move(metrics)}});
  }
  return {{"summary", std::move(rows)}, {"ordering_holds", report.ordering_holds()}, {"warnings", report.warnings}};
}

json trials_to_json(std::span<const TrialResult> trials) {
  json rows = json::array();
  for (const TrialResult& t : trials) {
    json metrics = json::object();
    for (std::size_t k = 0; k < kMetricNames.size(); ++k) metrics[kMetricNames[k]] = t.metrics[k];
    rows.push_back({{"sigma", t.sigma},
                    {"method", method_name(t.method)},
                    {"trial", t.trial},
                    {"failed", t.failed},
                    {"error", t.error},
                    {"metrics", std::move(metrics)}});
  }
  return {{"trials", std::move(rows)}};
}

std::vector<TrialResult> trials_from_json(const json& doc) {
  if (!doc.is_object()) throw SchemaError("", "expected an object");
  const json& rows = array(field(doc, "", "trials"), "/trials");
  std::vector<TrialResult> out;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const std::string p = join("/trials", i);
    const json& row = rows[i];
    if (!row.is_object()) throw SchemaError(p, "expected an object");
    TrialResult t;
    t.sigma = number(field(row, p, "sigma"), join(p, "sigma"));
    const json& method = field(row, p, "method");
    if (!method.is_string()) throw SchemaError(join(p, "method"), "expected a string");
    try {
      t.method = method_from_name(method.get<std::string>());
    } catch (const Error& e) {
      throw SchemaError(join(p, "method"), e.what());
    }
    t.trial = integer(field(row, p, "trial"), join(p, "trial"));
    const json& failed = field(row, p, "failed");
    if (!failed.is_boolean()) throw SchemaError(join(p, "failed"), "expected a boolean");
    t.failed = failed.get<bool>();
    if (row.contains("error") && row["error"].is_string()) t.error = row["error"].get<std::string>();
    const json& metrics = field(row, p, "metrics");
    const std::string mp = join(p, "metrics");
    if (!metrics.is_object()) throw SchemaError(mp, "expected an object");
    for (std::size_t k = 0; k < kMetricNames.size(); ++k) {
      const json& v = field(metrics, mp, kMetricNames[k]);
      // Failed trials may carry NaN placeholders, which JSON stores as null.
      t.metrics[k] = v.is_null() ? std::numeric_limits<double>::quiet_NaN() : number(v, join(mp, kMetricNames[k]));
    }
    out.push_back(t);
  }
  return out;
}

std::string plot_csv(const BenchmarkReport& report, std::size_t metric) {
  if (metric >= kMetricNames.size()) throw Error("metric index out of range");
  std::string out = "sigma";
  for (Method m : report.methods) out += "," + method_name(m);
  out += "\n";
  for (double sigma : report.sigmas) {
    out += format_double(sigma);
    for (Method m : report.methods) {
      out += ",";
      try {
        out += format_double(report.at(sigma, m).metrics[metric].median);
      } catch (const Error&) {
        out += "nan";
      }
    }
    out += "\n";
  }
  return out;
}

void write_report_files(const std::filesystem::path& dir, const BenchmarkReport& report) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string());
  write_text(dir / "report.csv", report_csv(report));
  write_json(dir / "report.json", report_json(report));
  write_json(dir / "trials.json", trials_to_json(report.trials));
  for (std::size_t k = 0; k < kMetricNames.size(); ++k) {
    write_text(dir / (std::string("plot_") + kMetricNames[k] + ".csv"), plot_csv(report, k));
  }
}

}  // namespace procam
