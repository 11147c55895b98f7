#include "trajoracle/geo.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "trajoracle/error.hpp"

namespace trajoracle {
namespace {

constexpr double kDegToRad = std::numbers::pi / 180.0;

}  // namespace

bool is_valid(const GeoPoint& p) noexcept {
  return std::isfinite(p.lat) && std::isfinite(p.lon) && p.lat >= -90.0 && p.lat <= 90.0 &&
         p.lon >= -180.0 && p.lon <= 180.0;
}

double pixel_distance(const PixelPoint& a, const PixelPoint& b) noexcept {
  return std::hypot(a.x - b.x, a.y - b.y);
}

double haversine(const GeoPoint& a, const GeoPoint& b) noexcept {
  const double dlat = (b.lat - a.lat) * kDegToRad;
  const double dlon = (b.lon - a.lon) * kDegToRad;
  const double s_lat = std::sin(dlat / 2.0);
  const double s_lon = std::sin(dlon / 2.0);
  const double h = s_lat * s_lat + std::cos(a.lat * kDegToRad) * std::cos(b.lat * kDegToRad) * s_lon * s_lon;
  return 2.0 * kEarthRadiusM * std::asin(std::min(1.0, std::sqrt(h)));
}

double meters_per_degree_lat() noexcept { return kEarthRadiusM * kDegToRad; }

double meters_per_degree_lon(double lat) noexcept { return kEarthRadiusM * kDegToRad * std::cos(lat * kDegToRad); }

Trajectory resample_uniform(std::span<const TimedPoint> raw, double dt, std::size_t count) {
  if (raw.size() < 2) {
    throw Error(ErrorCode::SpanTooShort, "need at least two raw points");
  }
  if (!(dt > 0.0) || count == 0) {
    throw Error(ErrorCode::InvalidInput, "dt must be positive and count non-zero");
  }
  for (std::size_t i = 1; i < raw.size(); ++i) {
    if (!(raw[i].t > raw[i - 1].t)) {
      throw Error(ErrorCode::NonMonotoneTime, "timestamps must be strictly increasing");
    }
  }
  const double t0 = raw.front().t;
  const double needed = static_cast<double>(count - 1) * dt;
  if (raw.back().t - t0 < needed) {
    throw Error(ErrorCode::SpanTooShort, "raw span does not cover the requested samples");
  }

  Trajectory out;
  out.dt = dt;
  out.points.reserve(count);
  std::size_t seg = 0;
  for (std::size_t k = 0; k < count; ++k) {
    const double t = t0 + static_cast<double>(k) * dt;
    while (seg + 2 < raw.size() && raw[seg + 1].t < t) {
      ++seg;
    }
    const TimedPoint& a = raw[seg];
    const TimedPoint& b = raw[seg + 1];
    const double f = (t - a.t) / (b.t - a.t);
    out.points.push_back({a.point.lat * (1.0 - f) + b.point.lat * f, a.point.lon * (1.0 - f) + b.point.lon * f});
  }
  return out;
}

Viewport::Viewport(GeoBBox bbox, int width_px, int height_px)
    : bbox_(bbox), width_px_(width_px), height_px_(height_px) {
  if (width_px <= 0 || height_px <= 0) {
    throw Error(ErrorCode::InvalidInput, "canvas dimensions must be positive");
  }
  if (!(bbox.max_lat > bbox.min_lat) || !(bbox.max_lon > bbox.min_lon)) {
    throw Error(ErrorCode::InvalidInput, "viewport bbox is degenerate");
  }
  meters_per_pixel_ = (bbox.max_lon - bbox.min_lon) * meters_per_degree_lon(bbox.center().lat) / width_px;
}

PixelPoint Viewport::project(const GeoPoint& g) const noexcept {
  return {(g.lon - bbox_.min_lon) / (bbox_.max_lon - bbox_.min_lon) * width_px_,
          (bbox_.max_lat - g.lat) / (bbox_.max_lat - bbox_.min_lat) * height_px_};
}

GeoPoint Viewport::unproject(const PixelPoint& px) const noexcept {
  return {bbox_.max_lat - px.y / height_px_ * (bbox_.max_lat - bbox_.min_lat),
          bbox_.min_lon + px.x / width_px_ * (bbox_.max_lon - bbox_.min_lon)};
}

double Viewport::half_diagonal_px() const noexcept {
  return std::hypot(static_cast<double>(width_px_), static_cast<double>(height_px_)) / 2.0;
}

Viewport viewport_for(std::span<const GeoPoint> points, const ViewportOptions& options) {
  if (points.empty()) {
    throw Error(ErrorCode::InvalidInput, "viewport needs at least one point");
  }
  if (options.canvas_px <= 0 || !(options.margin_factor >= 1.0) || !(options.min_side_m > 0.0)) {
    throw Error(ErrorCode::InvalidInput, "invalid viewport options");
  }
  GeoBBox box{points[0].lat, points[0].lon, points[0].lat, points[0].lon};
  for (const GeoPoint& p : points) {
    if (!is_valid(p)) {
      throw Error(ErrorCode::InvalidInput, "invalid geographic point");
    }
    box.min_lat = std::min(box.min_lat, p.lat);
    box.max_lat = std::max(box.max_lat, p.lat);
    box.min_lon = std::min(box.min_lon, p.lon);
    box.max_lon = std::max(box.max_lon, p.lon);
  }
  const GeoPoint c = box.center();
  const double lon_scale = meters_per_degree_lon(c.lat);
  const double lat_scale = meters_per_degree_lat();
  const double extent_m = std::max((box.max_lon - box.min_lon) * lon_scale, (box.max_lat - box.min_lat) * lat_scale);
  const double side_m = std::max(extent_m * options.margin_factor, options.min_side_m);
  const double half_lat = side_m / lat_scale / 2.0;
  const double half_lon = side_m / lon_scale / 2.0;
  return Viewport({c.lat - half_lat, c.lon - half_lon, c.lat + half_lat, c.lon + half_lon}, options.canvas_px,
                  options.canvas_px);
}

}  // namespace trajoracle
