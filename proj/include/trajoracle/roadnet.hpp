#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "trajoracle/geo.hpp"

namespace trajoracle {

struct RoadSegment {
  GeoPoint a;
  GeoPoint b;
  std::string feature_id;  // empty when the source feature had no id
};

struct RoadNetwork {
  std::vector<RoadSegment> segments;
  std::size_t skipped_features = 0;  // features without line geometry
};

/// Parses a GeoJSON FeatureCollection, Feature or bare geometry. Every
/// LineString / MultiLineString is cut into consecutive-vertex segments;
/// zero-length segments are dropped. Throws ParseError / EmptyNetwork.
RoadNetwork load_roads(std::string_view geojson);
RoadNetwork load_roads_file(const std::string& path);

struct PixelSegment {
  PixelPoint a;
  PixelPoint b;
};

/// Clamped-projection Euclidean distance from `p` to segment [a, b].
double point_segment_distance(const PixelPoint& p, const PixelPoint& a, const PixelPoint& b) noexcept;

/// Uniform grid over a viewport's pixel space. Border cells extend to
/// infinity on their outer sides, so segments outside the canvas are kept
/// in the border cells their clamped bounding box touches.
class SegmentIndex {
 public:
  SegmentIndex(std::vector<PixelSegment> segments, int width_px, int height_px, int cell_px = 64);

  /// Exact minimum distance over all segments. Throws EmptyNetwork.
  double nearest_distance(const PixelPoint& p) const;

  const std::vector<PixelSegment>& segments() const noexcept { return segments_; }
  int width() const noexcept { return width_px_; }
  int height() const noexcept { return height_px_; }
  int cell_px() const noexcept { return cell_px_; }
  int cols() const noexcept { return cols_; }
  int rows() const noexcept { return rows_; }
  const std::vector<std::uint32_t>& cell(int col, int row) const { return cells_[row * cols_ + col]; }

 private:
  int clamp_col(double x) const noexcept;
  int clamp_row(double y) const noexcept;

  std::vector<PixelSegment> segments_;
  int width_px_;
  int height_px_;
  int cell_px_;
  int cols_;
  int rows_;
  std::vector<std::vector<std::uint32_t>> cells_;
};

SegmentIndex build_index(const RoadNetwork& net, const Viewport& vp, int cell_px = 64);

inline double nearest_road_distance(const SegmentIndex& idx, const PixelPoint& p) { return idx.nearest_distance(p); }

}  // namespace trajoracle
