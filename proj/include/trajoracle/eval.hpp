#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>

#include <json.hpp>

#include "trajoracle/geo.hpp"
#include "trajoracle/roadnet.hpp"

namespace trajoracle {

struct PredictionRecord {
  std::string traj_id;
  std::string city;
  std::optional<GeoPoint> predicted;
  GeoPoint truth;
  std::optional<PixelPoint> pixel_pred;
  PixelPoint pixel_truth;
  std::optional<double> nearest_road_px;
  double meters_per_pixel = 0.0;
  double half_diagonal_px = 0.0;  // canvas half-diagonal, the penalty for a missing prediction
};

/// Fills the pixel forms from `vp` and, when `idx` is given, the predicted
/// point's distance to the nearest road.
PredictionRecord make_prediction_record(std::string traj_id, std::string city, std::optional<GeoPoint> predicted,
                                        const GeoPoint& truth, const Viewport& vp,
                                        const SegmentIndex* idx = nullptr);

nlohmann::ordered_json prediction_to_json(const PredictionRecord& r);
PredictionRecord prediction_from_json(const nlohmann::json& j);

enum class MissingPolicy { Exclude, Penalize };

/// Per-record haversine errors in meters, in record order. Missing
/// predictions are dropped (Exclude) or cost the canvas half-diagonal.
std::vector<double> errors_m(std::span<const PredictionRecord> records, MissingPolicy policy = MissingPolicy::Exclude);

/// Pairwise (cascade) summation; the result depends only on the order of `xs`.
double pairwise_sum(std::span<const double> xs) noexcept;

/// Throw EmptyBatch when no record is usable.
double mae(std::span<const PredictionRecord> records, MissingPolicy policy = MissingPolicy::Exclude);
double rmse(std::span<const PredictionRecord> records, MissingPolicy policy = MissingPolicy::Exclude);

struct RoadMetrics {
  std::size_t n = 0;
  double mae_px = 0.0;
  double rmse_px = 0.0;
  double mae_m = 0.0;  // each record's pixel distance times its meters_per_pixel

  friend bool operator==(const RoadMetrics&, const RoadMetrics&) = default;
};

/// Over records carrying nearest_road_px. Throws EmptyBatch if none do.
RoadMetrics road_distance_metrics(std::span<const PredictionRecord> records);

struct CityMetrics {
  std::size_t n = 0;
  double mae_m = 0.0;
  double rmse_m = 0.0;

  friend bool operator==(const CityMetrics&, const CityMetrics&) = default;
};

struct MetricsReport {
  std::string label = "trajoracle";
  std::string missing_policy = "exclude";
  std::size_t n = 0;          // records scored
  std::size_t n_missing = 0;  // records without a prediction
  double mae_m = 0.0;
  double rmse_m = 0.0;
  std::optional<RoadMetrics> road;
  std::map<std::string, CityMetrics> per_city;

  friend bool operator==(const MetricsReport&, const MetricsReport&) = default;
};

/// Records with an empty city are grouped under "all". Throws EmptyBatch.
MetricsReport build_report(std::span<const PredictionRecord> records, MissingPolicy policy = MissingPolicy::Exclude,
                           std::string label = "trajoracle");

enum class ReportFormat { Table, Json };

std::string write_report(const MetricsReport& report, ReportFormat format);
MetricsReport report_from_json(std::string_view text);

}  // namespace trajoracle
