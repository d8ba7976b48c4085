#pragma once

#include "procam/geometry.hpp"

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <unordered_map>
#include <utility>
#include <vector>

namespace procam {

/// Stripe colors. Horizontal stripes use the odd codes, vertical stripes the even ones.
enum class Color : std::uint8_t {
  none = 0,
  red = 1,
  yellow = 2,
  lime = 3,
  green = 4,
  cyan = 5,
  blue = 6,
  purple = 7,
  magenta = 8,
};

struct Rgb {
  std::uint8_t r = 0;
  std::uint8_t g = 0;
  std::uint8_t b = 0;
  friend bool operator==(const Rgb&, const Rgb&) = default;
};

[[nodiscard]] Rgb color_rgb(Color c);
[[nodiscard]] Color horizontal_color(int symbol);
[[nodiscard]] Color vertical_color(int symbol);
[[nodiscard]] bool is_horizontal_color(Color c);
[[nodiscard]] bool is_vertical_color(Color c);

/// Lexicographically least De Bruijn sequence B(k, n) (Lyndon-word concatenation), symbols 0..k-1.
[[nodiscard]] std::vector<int> generate_debruijn_sequence(int k, int n);

struct GridCell {
  int row = 0;
  int col = 0;
  friend bool operator==(const GridCell&, const GridCell&) = default;
};

struct PatternNode {
  int row = 0;
  int col = 0;
  Vec2 x_p = Vec2::Zero();
  std::optional<Vec2> x_c;
  std::optional<Vec3> x_m;
};

struct PatternEdge {
  int from = 0;
  int to = 0;
  Color label = Color::none;
  std::vector<std::array<int, 2>> pixels;  // projector pixels strictly between the endpoints
};

/// Color grid of m×m stripe intersections, m = kⁿ + 2. Immutable after construction.
class PatternGraph {
 public:
  PatternGraph(int k, int n, int spacing_x, int spacing_y, int width, int height);

  [[nodiscard]] int k() const { return k_; }
  [[nodiscard]] int n() const { return n_; }
  [[nodiscard]] int size() const { return m_; }
  [[nodiscard]] int width() const { return width_; }
  [[nodiscard]] int height() const { return height_; }
  [[nodiscard]] int spacing_x() const { return spacing_x_; }
  [[nodiscard]] int spacing_y() const { return spacing_y_; }
  [[nodiscard]] int node_id(int row, int col) const { return row * m_ + col; }
  [[nodiscard]] const PatternNode& node(int row, int col) const { return nodes_[static_cast<std::size_t>(node_id(row, col))]; }
  [[nodiscard]] std::span<const PatternNode> nodes() const { return nodes_; }
  [[nodiscard]] std::span<const PatternEdge> edges() const { return edges_; }
  /// Stripe colors, top to bottom (one per row).
  [[nodiscard]] std::span<const Color> horizontal_colors() const { return horizontal_; }
  /// Stripe colors, left to right (one per column).
  [[nodiscard]] std::span<const Color> vertical_colors() const { return vertical_; }
  [[nodiscard]] std::span<const int> sequence() const { return sequence_; }

  /// Horizontal and vertical windows whose top-left stripe pair is (row, col).
  [[nodiscard]] std::pair<std::vector<Color>, std::vector<Color>> read_window(int row, int col) const;
  /// First start index of an n-length window, or nullopt.
  [[nodiscard]] std::optional<int> find_row(std::span<const Color> h_window) const;
  [[nodiscard]] std::optional<int> find_col(std::span<const Color> v_window) const;

 private:
  int k_;
  int n_;
  int m_;
  int spacing_x_;
  int spacing_y_;
  int width_;
  int height_;
  std::vector<int> sequence_;
  std::vector<Color> horizontal_;
  std::vector<Color> vertical_;
  std::vector<PatternNode> nodes_;
  std::vector<PatternEdge> edges_;
  std::unordered_map<std::uint64_t, int> row_index_;
  std::unordered_map<std::uint64_t, int> col_index_;
};

/// Builds the pattern for a projector of the given resolution. Each axis uses
/// `spacing_px` between stripes, shrunk to fit when the resolution is too small
/// along that axis; throws "pattern exceeds resolution" below 3 px.
[[nodiscard]] PatternGraph build_pattern_graph(int k, int n, int spacing_px, int width, int height);

struct RgbImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> data;  // row-major RGB

  [[nodiscard]] Rgb at(int x, int y) const {
    const auto i = 3 * (static_cast<std::size_t>(y) * static_cast<std::size_t>(width) + static_cast<std::size_t>(x));
    return {data[i], data[i + 1], data[i + 2]};
  }
  void set(int x, int y, Rgb c) {
    const auto i = 3 * (static_cast<std::size_t>(y) * static_cast<std::size_t>(width) + static_cast<std::size_t>(x));
    data[i] = c.r;
    data[i + 1] = c.g;
    data[i + 2] = c.b;
  }
};

/// Black background, horizontal stripes first, vertical stripes drawn on top.
[[nodiscard]] RgbImage render_pattern_image(const PatternGraph& graph, int stripe_width_px);

/// Grid position of the window pair; throws "invalid codeword" when absent.
[[nodiscard]] GridCell locate_window(std::span<const Color> h_window, std::span<const Color> v_window,
                                     const PatternGraph& graph);

}  // namespace procam
