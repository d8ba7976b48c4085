#include "procam/debruijn.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>
#include <tuple>
#include <vector>

using namespace procam;

namespace {

// Every cyclic window of length n, encoded base k; distinctness is checked by the caller.
std::vector<long> cyclic_windows(const std::vector<int>& seq, int k, int n) {
  std::vector<long> out;
  const std::size_t L = seq.size();
  for (std::size_t i = 0; i < L; ++i) {
    long code = 0;
    for (int j = 0; j < n; ++j) code = code * k + seq[(i + static_cast<std::size_t>(j)) % L];
    out.push_back(code);
  }
  return out;
}

// Linear search over the stripe arrays, independent of the hash index.
std::vector<int> linear_matches(std::span<const Color> stripes, const std::vector<Color>& window) {
  std::vector<int> hits;
  for (std::size_t s = 0; s + window.size() <= stripes.size(); ++s) {
    if (std::equal(window.begin(), window.end(), stripes.begin() + static_cast<std::ptrdiff_t>(s))) {
      hits.push_back(static_cast<int>(s));
    }
  }
  return hits;
}

}  // namespace

TEST_CASE("small sequences") {
  CHECK(generate_debruijn_sequence(2, 1) == std::vector<int>{0, 1});
  CHECK(generate_debruijn_sequence(2, 2) == std::vector<int>{0, 0, 1, 1});
  CHECK(generate_debruijn_sequence(2, 3) == std::vector<int>{0, 0, 0, 1, 0, 1, 1, 1});
  CHECK(generate_debruijn_sequence(3, 2) == std::vector<int>{0, 0, 1, 0, 2, 1, 1, 2, 2});
}

TEST_CASE("window property is exhaustive") {
  for (int k = 2; k <= 8; ++k) {
    for (int n = 1; std::pow(k, n) <= 4096; ++n) {
      const auto seq = generate_debruijn_sequence(k, n);
      const auto expected = static_cast<std::size_t>(std::lround(std::pow(k, n)));
      REQUIRE(seq.size() == expected);
      for (int s : seq) CHECK((s >= 0 && s < k));
      const auto windows = cyclic_windows(seq, k, n);
      CHECK(std::set<long>(windows.begin(), windows.end()).size() == expected);
    }
  }
  const auto b43 = generate_debruijn_sequence(4, 3);
  CHECK(b43.size() == 64);
}

TEST_CASE("sequence is lexicographically least among rotations") {
  const auto seq = generate_debruijn_sequence(4, 3);
  for (std::size_t r = 1; r < seq.size(); ++r) {
    std::vector<int> rotated(seq.begin() + static_cast<std::ptrdiff_t>(r), seq.end());
    rotated.insert(rotated.end(), seq.begin(), seq.begin() + static_cast<std::ptrdiff_t>(r));
    CHECK(seq < rotated);
  }
}

TEST_CASE("sequence parameter errors") {
  CHECK_THROWS_WITH_AS((void)generate_debruijn_sequence(1, 3), "De Bruijn parameters out of range", Error);
  CHECK_THROWS_WITH_AS((void)generate_debruijn_sequence(4, 0), "De Bruijn parameters out of range", Error);
  CHECK_THROWS_WITH_AS((void)generate_debruijn_sequence(10, 7), "De Bruijn parameters out of range", Error);
}

TEST_CASE("default pattern graph") {
  const PatternGraph g = build_pattern_graph(4, 3, 12, 800, 600);
  CHECK(g.size() == 66);
  CHECK(g.nodes().size() == 66u * 66u);
  CHECK(g.horizontal_colors().size() == 66);
  CHECK(g.vertical_colors().size() == 66);

  for (Color c : g.horizontal_colors()) CHECK(is_horizontal_color(c));
  for (Color c : g.vertical_colors()) CHECK(is_vertical_color(c));

  for (const PatternNode& node : g.nodes()) {
    CHECK(node.x_p.x() >= 0);
    CHECK(node.x_p.x() < 800);
    CHECK(node.x_p.y() >= 0);
    CHECK(node.x_p.y() < 600);
    CHECK(!node.x_c.has_value());
  }
  for (int i = 0; i < 66; ++i) {
    for (int j = 0; j + 1 < 66; ++j) {
      CHECK(g.node(i, j + 1).x_p.x() > g.node(i, j).x_p.x());
      CHECK(g.node(j + 1, i).x_p.y() > g.node(j, i).x_p.y());
    }
  }

  // Horizontal stripes carry the sequence symbols through {1,3,5,7}, vertical through {2,4,6,8}.
  const auto seq = generate_debruijn_sequence(4, 3);
  for (int i = 0; i < 66; ++i) {
    const int s = seq[static_cast<std::size_t>(i % 64)];
    CHECK(static_cast<int>(g.horizontal_colors()[static_cast<std::size_t>(i)]) == 2 * s + 1);
    CHECK(static_cast<int>(g.vertical_colors()[static_cast<std::size_t>(i)]) == 2 * s + 2);
  }
}

TEST_CASE("edges connect grid neighbours") {
  const PatternGraph g = build_pattern_graph(4, 3, 12, 800, 600);
  const int m = g.size();
  CHECK(g.edges().size() == static_cast<std::size_t>(2 * m * (m - 1)));
  for (const PatternEdge& e : g.edges()) {
    const int dr = std::abs(e.from / m - e.to / m);
    const int dc = std::abs(e.from % m - e.to % m);
    CHECK(dr + dc == 1);
    CHECK(e.label != Color::none);
    const PatternNode& a = g.nodes()[static_cast<std::size_t>(e.from)];
    if (dr == 0) {
      CHECK(e.label == g.horizontal_colors()[static_cast<std::size_t>(a.row)]);
      CHECK(e.pixels.size() == static_cast<std::size_t>(g.spacing_x() - 1));
    } else {
      CHECK(e.label == g.vertical_colors()[static_cast<std::size_t>(a.col)]);
      CHECK(e.pixels.size() == static_cast<std::size_t>(g.spacing_y() - 1));
    }
  }
}

TEST_CASE("window pairs are unique and round trip") {
  const PatternGraph g = build_pattern_graph(4, 3, 12, 800, 600);
  const int m = g.size();
  std::set<std::pair<std::vector<Color>, std::vector<Color>>> seen;
  for (int row = 0; row + 3 <= m; ++row) {
    for (int col = 0; col + 3 <= m; ++col) {
      auto [h, v] = g.read_window(row, col);
      CHECK(linear_matches(g.horizontal_colors(), h) == std::vector<int>{row});
      CHECK(linear_matches(g.vertical_colors(), v) == std::vector<int>{col});
      CHECK(seen.emplace(h, v).second);
      CHECK(locate_window(h, v, g) == GridCell{row, col});
    }
  }
  CHECK(seen.size() == static_cast<std::size_t>((m - 2) * (m - 2)));
}

TEST_CASE("locate named windows") {
  const PatternGraph g = build_pattern_graph(4, 3, 12, 800, 600);
  const std::vector<Color> h = {Color::red, Color::lime, Color::purple};
  const std::vector<Color> v = {Color::green, Color::magenta, Color::yellow};
  const auto rows = linear_matches(g.horizontal_colors(), h);
  const auto cols = linear_matches(g.vertical_colors(), v);
  REQUIRE(rows.size() == 1);
  REQUIRE(cols.size() == 1);
  CHECK(locate_window(h, v, g) == GridCell{rows[0], cols[0]});

  auto [h0, v0] = g.read_window(0, 0);
  CHECK(locate_window(h0, v0, g) == GridCell{0, 0});

  const std::vector<Color> mixed = {Color::red, Color::yellow, Color::red};
  CHECK_THROWS_WITH_AS((void)locate_window(mixed, v, g), "invalid codeword", Error);
  const std::vector<Color> short_window = {Color::red, Color::lime};
  CHECK_THROWS_WITH_AS((void)locate_window(short_window, v, g), "invalid codeword", Error);
}

TEST_CASE("absent window is an invalid codeword") {
  // Well-formed colors, but cyan never occurs in a two-color pattern.
  const PatternGraph g = build_pattern_graph(2, 3, 12, 800, 600);
  const std::vector<Color> h = {Color::cyan, Color::red, Color::red};
  const std::vector<Color> v = {Color::yellow, Color::yellow, Color::yellow};
  CHECK_THROWS_WITH_AS((void)locate_window(h, v, g), "invalid codeword", Error);
}

TEST_CASE("pattern must fit the resolution") {
  CHECK_THROWS_WITH_AS((void)build_pattern_graph(4, 3, 12, 100, 600), "pattern exceeds resolution", Error);
  CHECK_THROWS_WITH_AS((void)build_pattern_graph(4, 3, 12, 800, 0), "pattern exceeds resolution", Error);
  const PatternGraph fitted = build_pattern_graph(4, 3, 12, 800, 600);
  CHECK(fitted.spacing_x() == 12);
  CHECK(fitted.spacing_y() == 9);
  CHECK((fitted.size() - 1) * fitted.spacing_y() < 600);
}

TEST_CASE("rendered stripes sample to their colors") {
  const PatternGraph g = build_pattern_graph(4, 3, 12, 800, 600);
  const RgbImage img = render_pattern_image(g, 4);
  CHECK(img.width == 800);
  CHECK(img.height == 600);
  CHECK(img.data.size() == 800u * 600u * 3u);

  const int m = g.size();
  for (int row = 0; row < m; ++row) {
    const Rgb expected = color_rgb(g.horizontal_colors()[static_cast<std::size_t>(row)]);
    for (int col = 0; col + 1 < m; ++col) {
      // Midway between vertical stripes the horizontal stripe is unobstructed.
      const int x = static_cast<int>(g.node(row, col).x_p.x()) + g.spacing_x() / 2;
      CHECK(img.at(x, static_cast<int>(g.node(row, col).x_p.y())) == expected);
    }
  }
  for (int col = 0; col < m; ++col) {
    const Rgb expected = color_rgb(g.vertical_colors()[static_cast<std::size_t>(col)]);
    for (int row = 0; row < m; ++row) {
      // Vertical stripes are on top, including at the crossings.
      CHECK(img.at(static_cast<int>(g.node(row, col).x_p.x()), static_cast<int>(g.node(row, col).x_p.y())) == expected);
    }
  }
  // Between stripes the background stays black.
  const int bx = static_cast<int>(g.node(5, 5).x_p.x()) + g.spacing_x() / 2;
  const int by = static_cast<int>(g.node(5, 5).x_p.y()) + g.spacing_y() / 2;
  CHECK(img.at(bx, by) == Rgb{0, 0, 0});
  CHECK(img.at(0, 0) == Rgb{0, 0, 0});

  CHECK_THROWS_AS((void)render_pattern_image(g, 9), Error);
  CHECK_THROWS_AS((void)render_pattern_image(g, 0), Error);
}

TEST_CASE("smallest pattern renders crossing stripes") {
  const PatternGraph g = build_pattern_graph(2, 1, 10, 64, 48);
  CHECK(g.size() == 4);
  const RgbImage img = render_pattern_image(g, 3);
  CHECK(img.width == 64);
  CHECK(img.height == 48);
  const PatternNode& n = g.node(1, 2);
  const int x = static_cast<int>(n.x_p.x());
  const int y = static_cast<int>(n.x_p.y());
  CHECK(img.at(x, y) == color_rgb(g.vertical_colors()[2]));
  CHECK(img.at(x + g.spacing_x() / 2, y) == color_rgb(g.horizontal_colors()[1]));
  CHECK(img.at(x, y + g.spacing_y() / 2) == color_rgb(g.vertical_colors()[2]));
}

TEST_CASE("construction is deterministic") {
  const PatternGraph a = build_pattern_graph(4, 3, 12, 800, 600);
  const PatternGraph b = build_pattern_graph(4, 3, 12, 800, 600);
  REQUIRE(a.nodes().size() == b.nodes().size());
  for (std::size_t i = 0; i < a.nodes().size(); ++i) CHECK(a.nodes()[i].x_p == b.nodes()[i].x_p);
  CHECK(render_pattern_image(a, 4).data == render_pattern_image(b, 4).data);
}

TEST_CASE("color classes") {
  for (int s = 0; s < 4; ++s) {
    CHECK(is_horizontal_color(horizontal_color(s)));
    CHECK(!is_vertical_color(horizontal_color(s)));
    CHECK(is_vertical_color(vertical_color(s)));
    CHECK(!is_horizontal_color(vertical_color(s)));
  }
  CHECK(color_rgb(Color::red) == Rgb{255, 0, 0});
  CHECK(color_rgb(Color::none) == Rgb{0, 0, 0});
  std::set<std::tuple<int, int, int>> distinct;
  for (int c = 1; c <= 8; ++c) {
    const Rgb v = color_rgb(static_cast<Color>(c));
    distinct.emplace(v.r, v.g, v.b);
  }
  CHECK(distinct.size() == 8);
}
