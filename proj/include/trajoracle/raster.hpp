#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "trajoracle/geo.hpp"
#include "trajoracle/roadnet.hpp"

namespace trajoracle {

struct Rgb {
  std::uint8_t r = 0;
  std::uint8_t g = 0;
  std::uint8_t b = 0;

  friend bool operator==(const Rgb&, const Rgb&) = default;
};

inline constexpr Rgb kWhite{255, 255, 255};

/// Row-major RGB8 pixel buffer; starts white.
class Canvas {
 public:
  Canvas(int width, int height);

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }

  bool contains(int x, int y) const noexcept { return x >= 0 && y >= 0 && x < width_ && y < height_; }
  Rgb at(int x, int y) const;
  /// Silently ignores off-canvas writes.
  void set(int x, int y, Rgb c) noexcept;

  const std::vector<std::uint8_t>& data() const noexcept { return data_; }
  std::vector<std::uint8_t>& data() noexcept { return data_; }

  friend bool operator==(const Canvas&, const Canvas&) = default;

 private:
  int width_;
  int height_;
  std::vector<std::uint8_t> data_;
};

struct RenderStyle {
  Rgb road_color{160, 160, 160};
  int road_width_px = 3;
  Rgb arrow_color{0, 0, 0};
  int arrow_width_px = 2;
  double arrow_head_px = 10.0;
  double arrow_head_half_angle_deg = 30.0;
  Rgb endpoint_color{128, 0, 128};
  int endpoint_radius_px = 6;
  int label_size_px = 14;
  Rgb blue{0, 0, 255};
  Rgb yellow{255, 215, 0};
  double region_alpha = 0.35;

  /// Throws InvalidInput when alpha is outside [0,1] or a size is not positive.
  void validate() const;
};

/// Integer pixel rectangle [x0, x1) x [y0, y1).
struct PixelRect {
  int x0 = 0;
  int y0 = 0;
  int x1 = 0;
  int y1 = 0;

  int width() const noexcept { return x1 - x0; }
  int height() const noexcept { return y1 - y0; }
  long long area() const noexcept { return static_cast<long long>(width()) * height(); }
  PixelPoint center() const noexcept { return {(x0 + x1) / 2.0, (y0 + y1) / 2.0}; }
  /// Closed containment for continuous points.
  bool contains(const PixelPoint& p) const noexcept { return p.x >= x0 && p.x <= x1 && p.y >= y0 && p.y <= y1; }

  friend bool operator==(const PixelRect&, const PixelRect&) = default;
};

/// Vertical: the boundary is the line x = boundary. Horizontal: y = boundary.
enum class SplitAxis { Vertical, Horizontal };
enum class Half { Low, High };

struct SplitSpec {
  SplitAxis axis = SplitAxis::Vertical;
  int boundary = 0;
  Half blue_half = Half::Low;

  friend bool operator==(const SplitSpec&, const SplitSpec&) = default;
};

PixelRect half_of(const PixelRect& r, const SplitSpec& split, Half half) noexcept;

/// Hard-edged line with a square brush of `width` px between two
/// continuous points. Off-canvas parts are clipped.
void draw_line(Canvas& canvas, PixelPoint a, PixelPoint b, int width, Rgb color);
void fill_disc(Canvas& canvas, PixelPoint center, int radius, Rgb color);
/// Digits only from the embedded 5x7 font; other characters advance the pen.
void draw_text(Canvas& canvas, int x, int y, const std::string& text, int size_px, Rgb color);

Canvas render_base_map(const Viewport& vp, const RoadNetwork& net, const RenderStyle& style = {});

struct TrajectoryGlyphs {
  int arrows = 0;
  std::vector<std::string> labels;
};

/// Arrows between consecutive points plus labelled dots at the first and
/// last point. Needs at least two points.
TrajectoryGlyphs draw_trajectory(Canvas& canvas, const Viewport& vp, std::span<const GeoPoint> prefix,
                                 const RenderStyle& style = {});

/// out = round((1 - a) * base + a * color) per channel over both halves.
void draw_vgls_overlay(Canvas& canvas, const PixelRect& region, const SplitSpec& split, const RenderStyle& style = {});

std::vector<std::uint8_t> encode_png(const Canvas& canvas);
/// Decodes 8-bit RGB, non-interlaced PNGs (the subset encode_png emits).
Canvas decode_png(std::span<const std::uint8_t> bytes);

}  // namespace trajoracle
