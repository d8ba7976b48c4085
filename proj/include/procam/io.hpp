#pragma once

#include "procam/bench.hpp"
#include "procam/debruijn.hpp"
#include "procam/pipeline.hpp"

#include <json.hpp>

#include <filesystem>
#include <string>
#include <vector>

namespace procam {

/// File could not be read or written.
class IoError : public Error {
 public:
  using Error::Error;
};

/// Input document violates its schema; `pointer` is the JSON pointer of the first bad field.
class SchemaError : public Error {
 public:
  SchemaError(std::string pointer, const std::string& message)
      : Error(pointer + ": " + message), pointer_(std::move(pointer)) {}
  [[nodiscard]] const std::string& pointer() const { return pointer_; }

 private:
  std::string pointer_;
};

inline constexpr int kCaptureSchema = 1;

struct CaptureFile {
  BoardSpec board;
  std::vector<PoseCapture> poses;
};

[[nodiscard]] CaptureFile parse_captures(const nlohmann::json& doc);
[[nodiscard]] CaptureFile load_captures(const std::filesystem::path& path);
[[nodiscard]] nlohmann::json captures_to_json(const CaptureFile& captures);

[[nodiscard]] nlohmann::json device_to_json(const Device& device);
[[nodiscard]] nlohmann::json pose_to_json(const Pose& pose);
[[nodiscard]] nlohmann::json calibration_to_json(const SystemCalibration& calib);
[[nodiscard]] nlohmann::json convergence_to_json(const ConvergenceReport& report);
[[nodiscard]] nlohmann::json pattern_to_json(const PatternGraph& graph);

[[nodiscard]] std::string read_text(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, const std::string& text);
void write_json(const std::filesystem::path& path, const nlohmann::json& doc);
void write_png(const std::filesystem::path& path, const RgbImage& image);

/// Rows σ × method × metric with median, quartiles, trial and failure counts.
[[nodiscard]] std::string report_csv(const BenchmarkReport& report);
[[nodiscard]] nlohmann::json report_json(const BenchmarkReport& report);
[[nodiscard]] nlohmann::json trials_to_json(std::span<const TrialResult> trials);
[[nodiscard]] std::vector<TrialResult> trials_from_json(const nlohmann::json& doc);
/// Median curve of one metric: a σ column, then one column per method.
[[nodiscard]] std::string plot_csv(const BenchmarkReport& report, std::size_t metric);

/// Writes report.csv, report.json, trials.json and plot_<metric>.csv into `dir`.
void write_report_files(const std::filesystem::path& dir, const BenchmarkReport& report);

}  // namespace procam
