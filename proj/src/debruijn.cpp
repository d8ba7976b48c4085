#include "procam/debruijn.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>

namespace procam {

namespace {

std::uint64_t window_code(std::span<const Color> window) {
  std::uint64_t code = 0;
  for (Color c : window) code = code * 9 + static_cast<std::uint64_t>(c);
  return code;
}

int fitted_spacing(int spacing, int extent, int m) {
  if (m < 2) return spacing;
  return std::min(spacing, (extent - 1) / (m - 1));
}

}  // namespace

Rgb color_rgb(Color c) {
  switch (c) {
    case Color::red: return {255, 0, 0};
    case Color::yellow: return {255, 255, 0};
    case Color::lime: return {0, 255, 0};
    case Color::green: return {0, 128, 0};
    case Color::cyan: return {0, 255, 255};
    case Color::blue: return {0, 0, 255};
    case Color::purple: return {128, 0, 128};
    case Color::magenta: return {255, 0, 255};
    case Color::none: break;
  }
  return {0, 0, 0};
}

Color horizontal_color(int symbol) {
  if (symbol < 0 || symbol > 3) throw Error("symbol out of range for 4-color stripes");
  return static_cast<Color>(2 * symbol + 1);
}

Color vertical_color(int symbol) {
  if (symbol < 0 || symbol > 3) throw Error("symbol out of range for 4-color stripes");
  return static_cast<Color>(2 * symbol + 2);
}

bool is_horizontal_color(Color c) {
  const int v = static_cast<int>(c);
  return v >= 1 && v <= 7 && v % 2 == 1;
}

bool is_vertical_color(Color c) {
  const int v = static_cast<int>(c);
  return v >= 2 && v <= 8 && v % 2 == 0;
}

std::vector<int> generate_debruijn_sequence(int k, int n) {
  if (k < 2 || n < 1) throw Error("De Bruijn parameters out of range");
  double length = std::pow(static_cast<double>(k), n);
  if (length > 1e6) throw Error("De Bruijn parameters out of range");

  std::vector<int> a(static_cast<std::size_t>(k * n + 1), 0);
  std::vector<int> seq;
  seq.reserve(static_cast<std::size_t>(length));
  std::function<void(int, int)> db = [&](int t, int p) {
    if (t > n) {
      if (n % p == 0) seq.insert(seq.end(), a.begin() + 1, a.begin() + p + 1);
      return;
    }
    a[static_cast<std::size_t>(t)] = a[static_cast<std::size_t>(t - p)];
    db(t + 1, p);
    for (int j = a[static_cast<std::size_t>(t - p)] + 1; j < k; ++j) {
      a[static_cast<std::size_t>(t)] = j;
      db(t + 1, t);
    }
  };
  db(1, 1);
  return seq;
}

PatternGraph::PatternGraph(int k, int n, int spacing_x, int spacing_y, int width, int height)
    : k_(k), n_(n), spacing_x_(spacing_x), spacing_y_(spacing_y), width_(width), height_(height) {
  if (k > 4) throw Error("at most 4 colors per stripe direction");
  sequence_ = generate_debruijn_sequence(k, n);
  const int cyclic = static_cast<int>(sequence_.size());
  m_ = cyclic + 2;

  // Unroll the cyclic sequence by two symbols so the wrap-around windows appear linearly.
  horizontal_.reserve(static_cast<std::size_t>(m_));
  vertical_.reserve(static_cast<std::size_t>(m_));
  for (int i = 0; i < m_; ++i) {
    const int s = sequence_[static_cast<std::size_t>(i % cyclic)];
    horizontal_.push_back(horizontal_color(s));
    vertical_.push_back(vertical_color(s));
  }

  const int offset_x = (width - 1 - (m_ - 1) * spacing_x) / 2;
  const int offset_y = (height - 1 - (m_ - 1) * spacing_y) / 2;
  nodes_.reserve(static_cast<std::size_t>(m_) * static_cast<std::size_t>(m_));
  for (int row = 0; row < m_; ++row) {
    for (int col = 0; col < m_; ++col) {
      PatternNode node;
      node.row = row;
      node.col = col;
      node.x_p = Vec2(offset_x + col * spacing_x, offset_y + row * spacing_y);
      nodes_.push_back(node);
    }
  }

  for (int row = 0; row < m_; ++row) {
    for (int col = 0; col < m_; ++col) {
      const Vec2& p = node(row, col).x_p;
      if (col + 1 < m_) {
        PatternEdge e{node_id(row, col), node_id(row, col + 1), horizontal_[static_cast<std::size_t>(row)], {}};
        for (int x = static_cast<int>(p.x()) + 1; x < static_cast<int>(p.x()) + spacing_x; ++x) {
          e.pixels.push_back({x, static_cast<int>(p.y())});
        }
        edges_.push_back(std::move(e));
      }
      if (row + 1 < m_) {
        PatternEdge e{node_id(row, col), node_id(row + 1, col), vertical_[static_cast<std::size_t>(col)], {}};
        for (int y = static_cast<int>(p.y()) + 1; y < static_cast<int>(p.y()) + spacing_y; ++y) {
          e.pixels.push_back({static_cast<int>(p.x()), y});
        }
        edges_.push_back(std::move(e));
      }
    }
  }

  for (int start = 0; start + n_ <= m_; ++start) {
    const std::span<const Color> h(horizontal_.data() + start, static_cast<std::size_t>(n_));
    const std::span<const Color> v(vertical_.data() + start, static_cast<std::size_t>(n_));
    row_index_.try_emplace(window_code(h), start);
    col_index_.try_emplace(window_code(v), start);
  }
}

std::pair<std::vector<Color>, std::vector<Color>> PatternGraph::read_window(int row, int col) const {
  if (row < 0 || col < 0 || row + n_ > m_ || col + n_ > m_) throw Error("window outside the grid");
  return {std::vector<Color>(horizontal_.begin() + row, horizontal_.begin() + row + n_),
          std::vector<Color>(vertical_.begin() + col, vertical_.begin() + col + n_)};
}

std::optional<int> PatternGraph::find_row(std::span<const Color> h_window) const {
  if (static_cast<int>(h_window.size()) != n_) return std::nullopt;
  const auto it = row_index_.find(window_code(h_window));
  if (it == row_index_.end()) return std::nullopt;
  return it->second;
}

std::optional<int> PatternGraph::find_col(std::span<const Color> v_window) const {
  if (static_cast<int>(v_window.size()) != n_) return std::nullopt;
  const auto it = col_index_.find(window_code(v_window));
  if (it == col_index_.end()) return std::nullopt;
  return it->second;
}

PatternGraph build_pattern_graph(int k, int n, int spacing_px, int width, int height) {
  if (width <= 0 || height <= 0 || spacing_px <= 0) throw Error("pattern exceeds resolution");
  // Validates k and n before the size arithmetic below.
  const auto seq_len = static_cast<int>(generate_debruijn_sequence(k, n).size());
  const int m = seq_len + 2;
  const int sx = fitted_spacing(spacing_px, width, m);
  const int sy = fitted_spacing(spacing_px, height, m);
  if (sx < 3 || sy < 3) throw Error("pattern exceeds resolution");
  return PatternGraph(k, n, sx, sy, width, height);
}

RgbImage render_pattern_image(const PatternGraph& graph, int stripe_width_px) {
  if (stripe_width_px <= 0 || stripe_width_px >= std::min(graph.spacing_x(), graph.spacing_y())) {
    throw Error("stripe width must be positive and below the stripe spacing");
  }
  RgbImage img;
  img.width = graph.width();
  img.height = graph.height();
  img.data.assign(static_cast<std::size_t>(img.width) * static_cast<std::size_t>(img.height) * 3, 0);

  const int m = graph.size();
  const int lo = -(stripe_width_px / 2);
  const int hi = lo + stripe_width_px;  // exclusive
  const int x_begin = std::max(0, static_cast<int>(graph.node(0, 0).x_p.x()) - graph.spacing_x() / 2);
  const int x_end = std::min(img.width, static_cast<int>(graph.node(0, m - 1).x_p.x()) + graph.spacing_x() / 2 + 1);
  const int y_begin = std::max(0, static_cast<int>(graph.node(0, 0).x_p.y()) - graph.spacing_y() / 2);
  const int y_end = std::min(img.height, static_cast<int>(graph.node(m - 1, 0).x_p.y()) + graph.spacing_y() / 2 + 1);

  for (int row = 0; row < m; ++row) {
    const int yc = static_cast<int>(graph.node(row, 0).x_p.y());
    const Rgb c = color_rgb(graph.horizontal_colors()[static_cast<std::size_t>(row)]);
    for (int y = std::max(0, yc + lo); y < std::min(img.height, yc + hi); ++y) {
      for (int x = x_begin; x < x_end; ++x) img.set(x, y, c);
    }
  }
  for (int col = 0; col < m; ++col) {
    const int xc = static_cast<int>(graph.node(0, col).x_p.x());
    const Rgb c = color_rgb(graph.vertical_colors()[static_cast<std::size_t>(col)]);
    for (int x = std::max(0, xc + lo); x < std::min(img.width, xc + hi); ++x) {
      for (int y = y_begin; y < y_end; ++y) img.set(x, y, c);
    }
  }
  return img;
}

GridCell locate_window(std::span<const Color> h_window, std::span<const Color> v_window, const PatternGraph& graph) {
  for (Color c : h_window) {
    if (!is_horizontal_color(c)) throw Error("invalid codeword");
  }
  for (Color c : v_window) {
    if (!is_vertical_color(c)) throw Error("invalid codeword");
  }
  const auto row = graph.find_row(h_window);
  const auto col = graph.find_col(v_window);
  if (!row || !col) throw Error("invalid codeword");
  return {*row, *col};
}

}  // namespace procam
