#include "trajoracle/raster.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

#include "trajoracle/error.hpp"

namespace trajoracle {

Canvas::Canvas(int width, int height) : width_(width), height_(height) {
  if (width <= 0 || height <= 0) {
    throw Error(ErrorCode::InvalidInput, "canvas dimensions must be positive");
  }
  data_.assign(static_cast<std::size_t>(width) * height * 3, 255);
}

Rgb Canvas::at(int x, int y) const {
  if (!contains(x, y)) {
    throw Error(ErrorCode::InvalidInput, "pixel outside canvas");
  }
  const std::size_t i = (static_cast<std::size_t>(y) * width_ + x) * 3;
  return {data_[i], data_[i + 1], data_[i + 2]};
}

void Canvas::set(int x, int y, Rgb c) noexcept {
  if (!contains(x, y)) {
    return;
  }
  const std::size_t i = (static_cast<std::size_t>(y) * width_ + x) * 3;
  data_[i] = c.r;
  data_[i + 1] = c.g;
  data_[i + 2] = c.b;
}

void RenderStyle::validate() const {
  if (!(region_alpha >= 0.0 && region_alpha <= 1.0)) {
    throw Error(ErrorCode::InvalidInput, "region_alpha must be in [0,1]");
  }
  if (road_width_px <= 0 || arrow_width_px <= 0 || endpoint_radius_px <= 0 || label_size_px <= 0 ||
      !(arrow_head_px > 0.0)) {
    throw Error(ErrorCode::InvalidInput, "style widths and radii must be positive");
  }
}

PixelRect half_of(const PixelRect& r, const SplitSpec& split, Half half) noexcept {
  PixelRect out = r;
  if (split.axis == SplitAxis::Vertical) {
    (half == Half::Low ? out.x1 : out.x0) = split.boundary;
  } else {
    (half == Half::Low ? out.y1 : out.y0) = split.boundary;
  }
  return out;
}

namespace {

// Clips [a, b] to the box; returns false when nothing remains.
bool clip_to_box(PixelPoint& a, PixelPoint& b, double xl, double yl, double xh, double yh) {
  double t0 = 0.0, t1 = 1.0;
  const double dx = b.x - a.x, dy = b.y - a.y;
  const double p[4] = {-dx, dx, -dy, dy};
  const double q[4] = {a.x - xl, xh - a.x, a.y - yl, yh - a.y};
  for (int k = 0; k < 4; ++k) {
    if (p[k] == 0.0) {
      if (q[k] < 0.0) return false;
      continue;
    }
    const double t = q[k] / p[k];
    if (p[k] < 0.0) {
      t0 = std::max(t0, t);
    } else {
      t1 = std::min(t1, t);
    }
    if (t0 > t1) return false;
  }
  const PixelPoint a0 = a;
  a = {a0.x + t0 * dx, a0.y + t0 * dy};
  b = {a0.x + t1 * dx, a0.y + t1 * dy};
  return true;
}

void stamp(Canvas& canvas, int x, int y, int width, Rgb color) {
  const int lo = -((width - 1) / 2);
  const int hi = lo + width - 1;
  for (int dy = lo; dy <= hi; ++dy) {
    for (int dx = lo; dx <= hi; ++dx) {
      canvas.set(x + dx, y + dy, color);
    }
  }
}

constexpr std::array<std::array<std::uint8_t, 7>, 10> kDigits = {{
    {0x0E, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0E},
    {0x04, 0x0C, 0x04, 0x04, 0x04, 0x04, 0x0E},
    {0x0E, 0x11, 0x01, 0x02, 0x04, 0x08, 0x1F},
    {0x1F, 0x02, 0x04, 0x02, 0x01, 0x11, 0x0E},
    {0x02, 0x06, 0x0A, 0x12, 0x1F, 0x02, 0x02},
    {0x1F, 0x10, 0x1E, 0x01, 0x01, 0x11, 0x0E},
    {0x06, 0x08, 0x10, 0x1E, 0x11, 0x11, 0x0E},
    {0x1F, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08},
    {0x0E, 0x11, 0x11, 0x0E, 0x11, 0x11, 0x0E},
    {0x0E, 0x11, 0x11, 0x0F, 0x01, 0x02, 0x0C},
}};

std::uint8_t blend_channel(std::uint8_t base, std::uint8_t over, double alpha) {
  return static_cast<std::uint8_t>(std::lround((1.0 - alpha) * base + alpha * over));
}

}  // namespace

void draw_line(Canvas& canvas, PixelPoint a, PixelPoint b, int width, Rgb color) {
  const double pad = width + 1.0;
  if (!clip_to_box(a, b, -pad, -pad, canvas.width() + pad, canvas.height() + pad)) {
    return;
  }
  int x0 = static_cast<int>(std::floor(a.x));
  int y0 = static_cast<int>(std::floor(a.y));
  const int x1 = static_cast<int>(std::floor(b.x));
  const int y1 = static_cast<int>(std::floor(b.y));
  const int dx = std::abs(x1 - x0);
  const int dy = -std::abs(y1 - y0);
  const int sx = x0 < x1 ? 1 : -1;
  const int sy = y0 < y1 ? 1 : -1;
  int err = dx + dy;
  while (true) {
    stamp(canvas, x0, y0, width, color);
    if (x0 == x1 && y0 == y1) break;
    const int e2 = 2 * err;
    if (e2 >= dy) {
      err += dy;
      x0 += sx;
    }
    if (e2 <= dx) {
      err += dx;
      y0 += sy;
    }
  }
}

void fill_disc(Canvas& canvas, PixelPoint center, int radius, Rgb color) {
  const int cx = static_cast<int>(std::floor(center.x));
  const int cy = static_cast<int>(std::floor(center.y));
  for (int dy = -radius; dy <= radius; ++dy) {
    for (int dx = -radius; dx <= radius; ++dx) {
      if (dx * dx + dy * dy <= radius * radius) {
        canvas.set(cx + dx, cy + dy, color);
      }
    }
  }
}

void draw_text(Canvas& canvas, int x, int y, const std::string& text, int size_px, Rgb color) {
  const int scale = std::max(1, static_cast<int>(std::lround(size_px / 7.0)));
  int pen = x;
  for (char ch : text) {
    if (ch >= '0' && ch <= '9') {
      const auto& glyph = kDigits[ch - '0'];
      for (int row = 0; row < 7; ++row) {
        for (int col = 0; col < 5; ++col) {
          if (glyph[row] & (0x10 >> col)) {
            for (int sy = 0; sy < scale; ++sy) {
              for (int sx = 0; sx < scale; ++sx) {
                canvas.set(pen + col * scale + sx, y + row * scale + sy, color);
              }
            }
          }
        }
      }
    }
    pen += 6 * scale;
  }
}

Canvas render_base_map(const Viewport& vp, const RoadNetwork& net, const RenderStyle& style) {
  style.validate();
  Canvas canvas(vp.width(), vp.height());
  for (const RoadSegment& s : net.segments) {
    draw_line(canvas, vp.project(s.a), vp.project(s.b), style.road_width_px, style.road_color);
  }
  return canvas;
}

TrajectoryGlyphs draw_trajectory(Canvas& canvas, const Viewport& vp, std::span<const GeoPoint> prefix,
                                 const RenderStyle& style) {
  style.validate();
  if (prefix.size() < 2) {
    throw Error(ErrorCode::InvalidInput, "trajectory prefix needs at least two points");
  }
  std::vector<PixelPoint> px;
  px.reserve(prefix.size());
  for (const GeoPoint& g : prefix) {
    px.push_back(vp.project(g));
  }

  TrajectoryGlyphs glyphs;
  const double half_angle = style.arrow_head_half_angle_deg * std::numbers::pi / 180.0;
  for (std::size_t i = 1; i < px.size(); ++i) {
    const PixelPoint& from = px[i - 1];
    const PixelPoint& to = px[i];
    draw_line(canvas, from, to, style.arrow_width_px, style.arrow_color);
    ++glyphs.arrows;
    const double len = pixel_distance(from, to);
    if (len <= 0.0) {
      continue;
    }
    // Head strokes point back along the shaft, rotated by +-half_angle.
    const double back = std::atan2(from.y - to.y, from.x - to.x);
    for (double sign : {-1.0, 1.0}) {
      const double ang = back + sign * half_angle;
      const PixelPoint tip{to.x + style.arrow_head_px * std::cos(ang), to.y + style.arrow_head_px * std::sin(ang)};
      draw_line(canvas, to, tip, style.arrow_width_px, style.arrow_color);
    }
  }

  const int r = style.endpoint_radius_px;
  const int scale = std::max(1, static_cast<int>(std::lround(style.label_size_px / 7.0)));
  const std::size_t ends[2] = {0, px.size() - 1};
  for (std::size_t e : ends) {
    fill_disc(canvas, px[e], r, style.endpoint_color);
  }
  for (std::size_t e : ends) {
    const std::string label = std::to_string(e + 1);
    const int lx = static_cast<int>(std::floor(px[e].x)) + r + 2;
    const int ly = static_cast<int>(std::floor(px[e].y)) - r - 2 - 7 * scale;
    draw_text(canvas, lx, ly, label, style.label_size_px, style.endpoint_color);
    glyphs.labels.push_back(label);
  }
  return glyphs;
}

void draw_vgls_overlay(Canvas& canvas, const PixelRect& region, const SplitSpec& split, const RenderStyle& style) {
  style.validate();
  const double alpha = style.region_alpha;
  for (Half h : {Half::Low, Half::High}) {
    const PixelRect part = half_of(region, split, h);
    const Rgb color = h == split.blue_half ? style.blue : style.yellow;
    const int x0 = std::max(part.x0, 0), x1 = std::min(part.x1, canvas.width());
    const int y0 = std::max(part.y0, 0), y1 = std::min(part.y1, canvas.height());
    for (int y = y0; y < y1; ++y) {
      for (int x = x0; x < x1; ++x) {
        const Rgb base = canvas.at(x, y);
        canvas.set(x, y,
                   {blend_channel(base.r, color.r, alpha), blend_channel(base.g, color.g, alpha),
                    blend_channel(base.b, color.b, alpha)});
      }
    }
  }
}

}  // namespace trajoracle
