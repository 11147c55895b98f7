#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace trajoracle {

inline constexpr double kEarthRadiusM = 6'371'000.0;
inline constexpr std::size_t kTrajectoryLength = 13;
inline constexpr double kSampleIntervalS = 45.0;

struct GeoPoint {
  double lat = 0.0;
  double lon = 0.0;

  friend bool operator==(const GeoPoint&, const GeoPoint&) = default;
};

bool is_valid(const GeoPoint& p) noexcept;

struct TimedPoint {
  GeoPoint point;
  double t = 0.0;  // seconds since trajectory start
};

/// Uniformly time-sampled points; point i was observed at i * dt seconds.
struct Trajectory {
  std::vector<GeoPoint> points;
  double dt = kSampleIntervalS;
};

/// Continuous canvas coordinates; origin top-left, y grows downward.
struct PixelPoint {
  double x = 0.0;
  double y = 0.0;

  friend bool operator==(const PixelPoint&, const PixelPoint&) = default;
};

double pixel_distance(const PixelPoint& a, const PixelPoint& b) noexcept;

/// Great-circle distance on a sphere of radius kEarthRadiusM.
double haversine(const GeoPoint& a, const GeoPoint& b) noexcept;

/// Linearly interpolates `raw` at times 0, dt, ..., (count-1)*dt measured from
/// the first raw timestamp. Throws SpanTooShort / NonMonotoneTime.
Trajectory resample_uniform(std::span<const TimedPoint> raw, double dt = kSampleIntervalS,
                            std::size_t count = kTrajectoryLength);

struct GeoBBox {
  double min_lat = 0.0;
  double min_lon = 0.0;
  double max_lat = 0.0;
  double max_lon = 0.0;

  GeoPoint center() const noexcept { return {(min_lat + max_lat) / 2.0, (min_lon + max_lon) / 2.0}; }
};

struct ViewportOptions {
  double margin_factor = 1.5;
  int canvas_px = 1000;
  double min_side_m = 500.0;
};

/// Geographic box plus pixel canvas, related by a local equirectangular
/// projection (longitude scaled by cos of the center latitude).
class Viewport {
 public:
  Viewport(GeoBBox bbox, int width_px, int height_px);

  const GeoBBox& bbox() const noexcept { return bbox_; }
  int width() const noexcept { return width_px_; }
  int height() const noexcept { return height_px_; }
  double meters_per_pixel() const noexcept { return meters_per_pixel_; }

  PixelPoint project(const GeoPoint& g) const noexcept;
  GeoPoint unproject(const PixelPoint& px) const noexcept;

  double half_diagonal_px() const noexcept;

 private:
  GeoBBox bbox_;
  int width_px_;
  int height_px_;
  double meters_per_pixel_;
};

/// Square viewport centered on the bounding box of `points`. Coincident
/// points are not an error: the minimum side floor applies.
Viewport viewport_for(std::span<const GeoPoint> points, const ViewportOptions& options = {});

/// Meters per degree of latitude / of longitude at `lat`.
double meters_per_degree_lat() noexcept;
double meters_per_degree_lon(double lat) noexcept;

}  // namespace trajoracle
