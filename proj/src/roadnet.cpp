#include "trajoracle/roadnet.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "trajoracle/error.hpp"

namespace trajoracle {
namespace {

using json = nlohmann::json;

GeoPoint parse_position(const json& pos) {
  if (!pos.is_array() || pos.size() < 2 || !pos[0].is_number() || !pos[1].is_number()) {
    throw Error(ErrorCode::ParseError, "position must be [lon, lat, ...]");
  }
  // GeoJSON positions are longitude first.
  GeoPoint g{pos[1].get<double>(), pos[0].get<double>()};
  if (!is_valid(g)) {
    throw Error(ErrorCode::ParseError, "position out of range");
  }
  return g;
}

void add_line(const json& coords, const std::string& id, RoadNetwork& net) {
  if (!coords.is_array()) {
    throw Error(ErrorCode::ParseError, "LineString coordinates must be an array");
  }
  std::vector<GeoPoint> vertices;
  vertices.reserve(coords.size());
  for (const json& pos : coords) {
    vertices.push_back(parse_position(pos));
  }
  for (std::size_t i = 1; i < vertices.size(); ++i) {
    if (vertices[i] == vertices[i - 1]) {
      continue;
    }
    net.segments.push_back({vertices[i - 1], vertices[i], id});
  }
}

// Returns false when the geometry carries no line work.
bool add_geometry(const json& geom, const std::string& id, RoadNetwork& net) {
  if (geom.is_null()) {
    return false;
  }
  if (!geom.is_object() || !geom.contains("type") || !geom["type"].is_string()) {
    throw Error(ErrorCode::ParseError, "geometry object without type");
  }
  const std::string type = geom["type"].get<std::string>();
  if (type == "LineString") {
    add_line(geom.value("coordinates", json()), id, net);
    return true;
  }
  if (type == "MultiLineString") {
    const json& lines = geom.value("coordinates", json());
    if (!lines.is_array()) {
      throw Error(ErrorCode::ParseError, "MultiLineString coordinates must be an array");
    }
    for (const json& line : lines) {
      add_line(line, id, net);
    }
    return true;
  }
  if (type == "GeometryCollection") {
    bool any = false;
    for (const json& g : geom.value("geometries", json::array())) {
      any = add_geometry(g, id, net) || any;
    }
    return any;
  }
  return false;
}

std::string feature_id(const json& feature) {
  if (!feature.contains("id")) {
    return {};
  }
  const json& id = feature["id"];
  return id.is_string() ? id.get<std::string>() : id.dump();
}

}  // namespace

RoadNetwork load_roads(std::string_view geojson) {
  json doc = json::parse(geojson.begin(), geojson.end(), nullptr, false);
  if (doc.is_discarded() || !doc.is_object()) {
    throw Error(ErrorCode::ParseError, "not a GeoJSON object");
  }
  RoadNetwork net;
  const std::string type = doc.value("type", "");
  if (type == "FeatureCollection") {
    const json& features = doc.value("features", json());
    if (!features.is_array()) {
      throw Error(ErrorCode::ParseError, "FeatureCollection without features array");
    }
    for (const json& f : features) {
      if (!f.is_object()) {
        throw Error(ErrorCode::ParseError, "feature must be an object");
      }
      if (!add_geometry(f.value("geometry", json()), feature_id(f), net)) {
        ++net.skipped_features;
      }
    }
  } else if (type == "Feature") {
    if (!add_geometry(doc.value("geometry", json()), feature_id(doc), net)) {
      ++net.skipped_features;
    }
  } else if (!type.empty()) {
    if (!add_geometry(doc, {}, net)) {
      ++net.skipped_features;
    }
  } else {
    throw Error(ErrorCode::ParseError, "missing GeoJSON type");
  }
  if (net.segments.empty()) {
    throw Error(ErrorCode::EmptyNetwork, "no line features found");
  }
  return net;
}

RoadNetwork load_roads_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw Error(ErrorCode::Io, "cannot open " + path);
  }
  std::ostringstream ss;
  ss << in.rdbuf();
  return load_roads(ss.str());
}

double point_segment_distance(const PixelPoint& p, const PixelPoint& a, const PixelPoint& b) noexcept {
  const double dx = b.x - a.x;
  const double dy = b.y - a.y;
  const double len2 = dx * dx + dy * dy;
  double t = 0.0;
  if (len2 > 0.0) {
    t = ((p.x - a.x) * dx + (p.y - a.y) * dy) / len2;
    t = std::clamp(t, 0.0, 1.0);
  }
  const double cx = a.x + t * dx - p.x;
  const double cy = a.y + t * dy - p.y;
  return std::sqrt(cx * cx + cy * cy);
}

namespace {

// Liang-Barsky clip of [a, b] against a closed box; infinite bounds allowed.
bool segment_touches_box(const PixelSegment& s, double xl, double yl, double xh, double yh) {
  double t0 = 0.0;
  double t1 = 1.0;
  const double d[2] = {s.b.x - s.a.x, s.b.y - s.a.y};
  const double o[2] = {s.a.x, s.a.y};
  const double lo[2] = {xl, yl};
  const double hi[2] = {xh, yh};
  for (int k = 0; k < 2; ++k) {
    if (d[k] == 0.0) {
      if (o[k] < lo[k] || o[k] > hi[k]) {
        return false;
      }
      continue;
    }
    double ta = (lo[k] - o[k]) / d[k];
    double tb = (hi[k] - o[k]) / d[k];
    if (ta > tb) {
      std::swap(ta, tb);
    }
    t0 = std::max(t0, ta);
    t1 = std::min(t1, tb);
    if (t0 > t1) {
      return false;
    }
  }
  return true;
}

}  // namespace

SegmentIndex::SegmentIndex(std::vector<PixelSegment> segments, int width_px, int height_px, int cell_px)
    : segments_(std::move(segments)), width_px_(width_px), height_px_(height_px), cell_px_(cell_px) {
  if (width_px <= 0 || height_px <= 0 || cell_px <= 0) {
    throw Error(ErrorCode::InvalidInput, "index dimensions must be positive");
  }
  cols_ = (width_px + cell_px - 1) / cell_px;
  rows_ = (height_px + cell_px - 1) / cell_px;
  cells_.resize(static_cast<std::size_t>(cols_) * rows_);

  constexpr double inf = std::numeric_limits<double>::infinity();
  // Inflate cell boxes slightly so rounding never drops a touching segment.
  const double slack = 1e-9 * cell_px_;
  for (std::uint32_t id = 0; id < segments_.size(); ++id) {
    const PixelSegment& s = segments_[id];
    const int c0 = clamp_col(std::min(s.a.x, s.b.x));
    const int c1 = clamp_col(std::max(s.a.x, s.b.x));
    const int r0 = clamp_row(std::min(s.a.y, s.b.y));
    const int r1 = clamp_row(std::max(s.a.y, s.b.y));
    for (int r = r0; r <= r1; ++r) {
      const double yl = r == 0 ? -inf : r * cell_px_ - slack;
      const double yh = r == rows_ - 1 ? inf : (r + 1) * cell_px_ + slack;
      for (int c = c0; c <= c1; ++c) {
        const double xl = c == 0 ? -inf : c * cell_px_ - slack;
        const double xh = c == cols_ - 1 ? inf : (c + 1) * cell_px_ + slack;
        if (segment_touches_box(s, xl, yl, xh, yh)) {
          cells_[static_cast<std::size_t>(r) * cols_ + c].push_back(id);
        }
      }
    }
  }
}

int SegmentIndex::clamp_col(double x) const noexcept {
  const double c = std::floor(x / cell_px_);
  if (!(c > 0.0)) return 0;
  if (c >= cols_ - 1) return cols_ - 1;
  return static_cast<int>(c);
}

int SegmentIndex::clamp_row(double y) const noexcept {
  const double r = std::floor(y / cell_px_);
  if (!(r > 0.0)) return 0;
  if (r >= rows_ - 1) return rows_ - 1;
  return static_cast<int>(r);
}

double SegmentIndex::nearest_distance(const PixelPoint& p) const {
  if (segments_.empty()) {
    throw Error(ErrorCode::EmptyNetwork, "index has no segments");
  }
  if (!std::isfinite(p.x) || !std::isfinite(p.y)) {
    throw Error(ErrorCode::InvalidInput, "query point must be finite");
  }
  const int ci = clamp_col(p.x);
  const int cj = clamp_row(p.y);
  double best = std::numeric_limits<double>::infinity();
  auto scan = [&](int c, int r) {
    for (std::uint32_t id : cells_[static_cast<std::size_t>(r) * cols_ + c]) {
      best = std::min(best, point_segment_distance(p, segments_[id].a, segments_[id].b));
    }
  };

  // Expanding square rings of cells. After ring r, any segment not yet seen
  // lies wholly outside the scanned block, so it is at least as far as the
  // nearest interior face of that block.
  const int max_r = std::max(cols_, rows_);
  for (int r = 0; r <= max_r; ++r) {
    const int lc = ci - r, hc = ci + r, lr = cj - r, hr = cj + r;
    for (int c = std::max(lc, 0); c <= std::min(hc, cols_ - 1); ++c) {
      if (lr >= 0) scan(c, lr);
      if (r > 0 && hr < rows_) scan(c, hr);
    }
    for (int row = std::max(lr + 1, 0); row <= std::min(hr - 1, rows_ - 1); ++row) {
      if (lc >= 0) scan(lc, row);
      if (r > 0 && hc < cols_) scan(hc, row);
    }

    double bound = std::numeric_limits<double>::infinity();
    if (lc > 0) bound = std::min(bound, p.x - static_cast<double>(lc) * cell_px_);
    if (hc < cols_ - 1) bound = std::min(bound, static_cast<double>(hc + 1) * cell_px_ - p.x);
    if (lr > 0) bound = std::min(bound, p.y - static_cast<double>(lr) * cell_px_);
    if (hr < rows_ - 1) bound = std::min(bound, static_cast<double>(hr + 1) * cell_px_ - p.y);
    if (best <= bound) {
      return best;
    }
  }
  return best;
}

SegmentIndex build_index(const RoadNetwork& net, const Viewport& vp, int cell_px) {
  std::vector<PixelSegment> px;
  px.reserve(net.segments.size());
  for (const RoadSegment& s : net.segments) {
    px.push_back({vp.project(s.a), vp.project(s.b)});
  }
  return SegmentIndex(std::move(px), vp.width(), vp.height(), cell_px);
}

}  // namespace trajoracle
