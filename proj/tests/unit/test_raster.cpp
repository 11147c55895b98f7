#include <doctest.h>

#include <random>

#include "synth.hpp"
#include "trajoracle/error.hpp"
#include "trajoracle/raster.hpp"

using namespace trajoracle;

namespace {

const Viewport kVp({30.0, 104.0, 30.01, 104.0115}, 1000, 1000);

bool all_white(const Canvas& c) {
  for (auto v : c.data()) {
    if (v != 255) return false;
  }
  return true;
}

std::vector<GeoPoint> zigzag(int n) {
  std::vector<GeoPoint> pts;
  for (int i = 0; i < n; ++i) pts.push_back({30.002 + 0.0005 * i, 104.002 + ((i % 2) ? 0.0012 : 0.0) + 0.0004 * i});
  return pts;
}

std::uint32_t be32(const std::vector<std::uint8_t>& b, std::size_t at) {
  return (std::uint32_t(b[at]) << 24) | (std::uint32_t(b[at + 1]) << 16) | (std::uint32_t(b[at + 2]) << 8) | b[at + 3];
}

}  // namespace

TEST_CASE("empty network renders an all-white canvas") {
  const Canvas c = render_base_map(kVp, RoadNetwork{});
  CHECK(c.width() == 1000);
  CHECK(c.height() == 1000);
  CHECK(all_white(c));
}

TEST_CASE("horizontal road is road_width rows thick") {
  const double lat = kVp.bbox().center().lat;
  RoadNetwork net;
  net.segments.push_back({{lat, 103.99}, {lat, 104.02}, ""});
  const RenderStyle style;
  const Canvas c = render_base_map(kVp, net, style);
  for (int x : {0, 250, 500, 999}) {
    std::vector<int> rows;
    for (int y = 0; y < 1000; ++y) {
      const Rgb p = c.at(x, y);
      if (p == style.road_color) {
        rows.push_back(y);
      } else {
        CHECK(p == kWhite);
      }
    }
    REQUIRE(rows.size() == static_cast<std::size_t>(style.road_width_px));
    CHECK(rows.back() - rows.front() == style.road_width_px - 1);
    CHECK(rows.front() <= 500);
    CHECK(rows.back() >= 499);
  }
}

TEST_CASE("rendering is deterministic") {
  synth::City city;
  city.half_blocks = 6;
  const RoadNetwork net = load_roads(city.geojson());
  const std::vector<GeoPoint> pts{city.at(-300, -300), city.at(300, 300)};
  const Viewport vp = viewport_for(pts);
  Canvas a = render_base_map(vp, net);
  Canvas b = render_base_map(vp, net);
  draw_trajectory(a, vp, pts);
  draw_trajectory(b, vp, pts);
  CHECK(a == b);
  CHECK(encode_png(a) == encode_png(b));
  CHECK_FALSE(all_white(a));
}

TEST_CASE("arrow and label counts") {
  Canvas c(1000, 1000);
  const auto pts12 = zigzag(12);
  auto g = draw_trajectory(c, kVp, pts12);
  CHECK(g.arrows == 11);
  CHECK(g.labels == std::vector<std::string>{"1", "12"});

  Canvas c2(1000, 1000);
  const auto pts2 = zigzag(2);
  CHECK(draw_trajectory(c2, kVp, pts2).arrows == 1);

  Canvas c13(1000, 1000);
  const auto pts13 = zigzag(13);
  g = draw_trajectory(c13, kVp, pts13);
  CHECK(g.arrows == 12);
  CHECK(g.labels == std::vector<std::string>{"1", "13"});

  Canvas c1(1000, 1000);
  const auto pts1 = zigzag(1);
  CHECK_THROWS_AS(draw_trajectory(c1, kVp, pts1), Error);
}

TEST_CASE("every vertex has a glyph pixel nearby") {
  const RenderStyle style;
  const auto pts = zigzag(12);
  Canvas c(1000, 1000);
  draw_trajectory(c, kVp, pts, style);
  for (const auto& g : pts) {
    const PixelPoint p = kVp.project(g);
    bool found = false;
    const int r = style.endpoint_radius_px;
    for (int dy = -r; dy <= r && !found; ++dy) {
      for (int dx = -r; dx <= r && !found; ++dx) {
        if (dx * dx + dy * dy > r * r) continue;
        const int x = static_cast<int>(std::lround(p.x)) + dx;
        const int y = static_cast<int>(std::lround(p.y)) + dy;
        if (!c.contains(x, y)) continue;
        const Rgb v = c.at(x, y);
        found = v == style.arrow_color || v == style.endpoint_color;
      }
    }
    CHECK(found);
  }
}

TEST_CASE("clipping keeps off-canvas geometry from failing") {
  Canvas c(200, 200);
  draw_line(c, {-1e6, 100}, {1e6, 100}, 3, Rgb{1, 2, 3});
  CHECK(c.at(0, 100) == Rgb{1, 2, 3});
  CHECK(c.at(199, 100) == Rgb{1, 2, 3});
  draw_line(c, {-500, -500}, {-100, -10}, 3, Rgb{9, 9, 9});
  fill_disc(c, {-50, -50}, 5, Rgb{9, 9, 9});
  for (int y = 0; y < 200; ++y) {
    for (int x = 0; x < 200; ++x) CHECK_FALSE(c.at(x, y) == Rgb{9, 9, 9});
  }
}

TEST_CASE("overlay blending") {
  const PixelRect region{100, 100, 300, 300};
  const SplitSpec split{SplitAxis::Vertical, 200, Half::Low};
  RenderStyle style;

  Canvas c0(400, 400);
  style.region_alpha = 0.0;
  draw_vgls_overlay(c0, region, split, style);
  CHECK(all_white(c0));

  Canvas c1(400, 400);
  style.region_alpha = 1.0;
  draw_vgls_overlay(c1, region, split, style);
  CHECK(c1.at(150, 150) == style.blue);
  CHECK(c1.at(250, 150) == style.yellow);

  Canvas c(400, 400);
  style.region_alpha = 0.35;
  draw_vgls_overlay(c, region, split, style);
  CHECK(c.at(150, 150) == Rgb{166, 166, 255});
  CHECK(c.at(250, 250) == Rgb{255, 241, 166});
  CHECK(c.at(199, 100) == Rgb{166, 166, 255});
  CHECK(c.at(200, 100) == Rgb{255, 241, 166});
  for (int y = 0; y < 400; ++y) {
    for (int x = 0; x < 400; ++x) {
      const bool inside = x >= 100 && x < 300 && y >= 100 && y < 300;
      if (!inside) CHECK(c.at(x, y) == kWhite);
    }
  }

  style.region_alpha = 1.5;
  CHECK_THROWS_AS(draw_vgls_overlay(c, region, split, style), Error);
}

TEST_CASE("png round trip") {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 10; ++trial) {
    const int w = 1 + static_cast<int>(rng() % 300);
    const int h = 1 + static_cast<int>(rng() % 300);
    Canvas c(w, h);
    for (auto& v : c.data()) v = static_cast<std::uint8_t>(trial % 2 ? rng() : (rng() % 4) * 80);
    const auto png = encode_png(c);
    CHECK(decode_png(png) == c);
  }
  const Canvas white(1000, 1000);
  const auto png = encode_png(white);
  CHECK(png[0] == 0x89);
  CHECK(png[1] == 'P');
  CHECK(be32(png, 16) == 1000);
  CHECK(be32(png, 20) == 1000);
  CHECK(all_white(decode_png(png)));

  auto broken = png;
  broken[40] ^= 0xFF;
  CHECK_THROWS_AS(decode_png(broken), Error);
}

TEST_CASE("digit font") {
  Canvas c(100, 40);
  draw_text(c, 2, 2, "13", 14, Rgb{0, 0, 0});
  int dark = 0;
  for (int y = 0; y < 40; ++y) {
    for (int x = 0; x < 100; ++x) dark += c.at(x, y) == Rgb{0, 0, 0};
  }
  CHECK(dark > 20);
  Canvas blank(100, 40);
  draw_text(blank, 2, 2, "ab", 14, Rgb{0, 0, 0});
  CHECK(all_white(blank));
}
