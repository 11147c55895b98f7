#include "trajoracle/eval.hpp"

#include <cmath>
#include <cstdio>

#include "trajoracle/error.hpp"

namespace trajoracle {
namespace {

using ojson = nlohmann::ordered_json;

double mean_of(std::span<const double> xs) { return pairwise_sum(xs) / static_cast<double>(xs.size()); }

double root_mean_square(std::span<const double> xs) {
  std::vector<double> sq(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) sq[i] = xs[i] * xs[i];
  return std::sqrt(mean_of(sq));
}

std::vector<double> checked_errors(std::span<const PredictionRecord> records, MissingPolicy policy) {
  auto e = errors_m(records, policy);
  if (e.empty()) throw Error(ErrorCode::EmptyBatch, "no scorable predictions");
  return e;
}

ojson point_json(const std::optional<GeoPoint>& p) {
  return p ? ojson::array({p->lat, p->lon}) : ojson(nullptr);
}

ojson pixel_json(const std::optional<PixelPoint>& p) { return p ? ojson::array({p->x, p->y}) : ojson(nullptr); }

std::string fmt3(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  return buf;
}

std::string pad(const std::string& s, std::size_t w) { return s.size() >= w ? s + " " : s + std::string(w - s.size(), ' '); }

}  // namespace

PredictionRecord make_prediction_record(std::string traj_id, std::string city, std::optional<GeoPoint> predicted,
                                        const GeoPoint& truth, const Viewport& vp, const SegmentIndex* idx) {
  PredictionRecord r;
  r.traj_id = std::move(traj_id);
  r.city = std::move(city);
  r.predicted = predicted;
  r.truth = truth;
  r.pixel_truth = vp.project(truth);
  r.meters_per_pixel = vp.meters_per_pixel();
  r.half_diagonal_px = vp.half_diagonal_px();
  if (predicted) {
    r.pixel_pred = vp.project(*predicted);
    if (idx) r.nearest_road_px = idx->nearest_distance(*r.pixel_pred);
  }
  return r;
}

ojson prediction_to_json(const PredictionRecord& r) {
  ojson j;
  j["traj_id"] = r.traj_id;
  j["city"] = r.city;
  j["predicted"] = point_json(r.predicted);
  j["truth"] = {r.truth.lat, r.truth.lon};
  j["pixel_pred"] = pixel_json(r.pixel_pred);
  j["pixel_truth"] = {r.pixel_truth.x, r.pixel_truth.y};
  j["nearest_road_px"] = r.nearest_road_px ? ojson(*r.nearest_road_px) : ojson(nullptr);
  j["meters_per_pixel"] = r.meters_per_pixel;
  j["half_diagonal_px"] = r.half_diagonal_px;
  return j;
}

PredictionRecord prediction_from_json(const nlohmann::json& j) {
  try {
    PredictionRecord r;
    r.traj_id = j.at("traj_id").get<std::string>();
    r.city = j.value("city", "");
    if (j.contains("predicted") && !j["predicted"].is_null()) {
      r.predicted = GeoPoint{j["predicted"].at(0).get<double>(), j["predicted"].at(1).get<double>()};
    }
    r.truth = {j.at("truth").at(0).get<double>(), j.at("truth").at(1).get<double>()};
    if (j.contains("pixel_pred") && !j["pixel_pred"].is_null()) {
      r.pixel_pred = PixelPoint{j["pixel_pred"].at(0).get<double>(), j["pixel_pred"].at(1).get<double>()};
    }
    if (j.contains("pixel_truth")) {
      r.pixel_truth = {j["pixel_truth"].at(0).get<double>(), j["pixel_truth"].at(1).get<double>()};
    }
    if (j.contains("nearest_road_px") && !j["nearest_road_px"].is_null()) {
      r.nearest_road_px = j["nearest_road_px"].get<double>();
    }
    r.meters_per_pixel = j.value("meters_per_pixel", 0.0);
    r.half_diagonal_px = j.value("half_diagonal_px", 0.0);
    if ((r.predicted && !is_valid(*r.predicted)) || !is_valid(r.truth)) {
      throw Error(ErrorCode::InvalidInput, "prediction record has invalid coordinates: " + r.traj_id);
    }
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("bad prediction record: ") + e.what());
  }
}

double pairwise_sum(std::span<const double> xs) noexcept {
  if (xs.size() <= 8) {
    double s = 0.0;
    for (double x : xs) s += x;
    return s;
  }
  const std::size_t half = xs.size() / 2;
  return pairwise_sum(xs.first(half)) + pairwise_sum(xs.subspan(half));
}

std::vector<double> errors_m(std::span<const PredictionRecord> records, MissingPolicy policy) {
  std::vector<double> out;
  out.reserve(records.size());
  for (const auto& r : records) {
    if (r.predicted) {
      out.push_back(haversine(*r.predicted, r.truth));
    } else if (policy == MissingPolicy::Penalize) {
      out.push_back(r.half_diagonal_px * r.meters_per_pixel);
    }
  }
  return out;
}

double mae(std::span<const PredictionRecord> records, MissingPolicy policy) {
  return mean_of(checked_errors(records, policy));
}

double rmse(std::span<const PredictionRecord> records, MissingPolicy policy) {
  return root_mean_square(checked_errors(records, policy));
}

RoadMetrics road_distance_metrics(std::span<const PredictionRecord> records) {
  std::vector<double> px;
  std::vector<double> m;
  for (const auto& r : records) {
    if (!r.nearest_road_px) continue;
    px.push_back(*r.nearest_road_px);
    m.push_back(*r.nearest_road_px * r.meters_per_pixel);
  }
  if (px.empty()) throw Error(ErrorCode::EmptyBatch, "no records with a road distance");
  RoadMetrics out;
  out.n = px.size();
  out.mae_px = mean_of(px);
  out.rmse_px = root_mean_square(px);
  out.mae_m = mean_of(m);
  return out;
}

MetricsReport build_report(std::span<const PredictionRecord> records, MissingPolicy policy, std::string label) {
  MetricsReport rep;
  rep.label = std::move(label);
  rep.missing_policy = policy == MissingPolicy::Exclude ? "exclude" : "penalize";
  const auto errs = checked_errors(records, policy);
  rep.n = errs.size();
  for (const auto& r : records) {
    if (!r.predicted) ++rep.n_missing;
  }
  rep.mae_m = mean_of(errs);
  rep.rmse_m = root_mean_square(errs);
  bool any_road = false;
  for (const auto& r : records) any_road = any_road || r.nearest_road_px.has_value();
  if (any_road) rep.road = road_distance_metrics(records);

  std::map<std::string, std::vector<PredictionRecord>> by_city;
  for (const auto& r : records) by_city[r.city.empty() ? "all" : r.city].push_back(r);
  for (const auto& [city, recs] : by_city) {
    const auto e = errors_m(recs, policy);
    if (e.empty()) continue;
    rep.per_city[city] = {e.size(), mean_of(e), root_mean_square(e)};
  }
  return rep;
}

std::string write_report(const MetricsReport& report, ReportFormat format) {
  if (format == ReportFormat::Json) {
    ojson j;
    j["label"] = report.label;
    j["missing_policy"] = report.missing_policy;
    j["n"] = report.n;
    j["n_missing"] = report.n_missing;
    j["mae_m"] = report.mae_m;
    j["rmse_m"] = report.rmse_m;
    if (report.road) {
      j["road"] = {{"n", report.road->n},
                   {"mae_px", report.road->mae_px},
                   {"rmse_px", report.road->rmse_px},
                   {"mae_m", report.road->mae_m}};
    } else {
      j["road"] = nullptr;
    }
    ojson cities = ojson::object();
    for (const auto& [city, c] : report.per_city) {
      cities[city] = {{"n", c.n}, {"mae_m", c.mae_m}, {"rmse_m", c.rmse_m}};
    }
    j["per_city"] = std::move(cities);
    return j.dump(2) + "\n";
  }

  std::string out = pad("Method", 14) + pad("City", 14) + pad("N", 8) + pad("MAE (m)", 12) + "RMSE (m)\n";
  if (report.per_city.empty()) return out;
  for (const auto& [city, c] : report.per_city) {
    out += pad(report.label, 14) + pad(city, 14) + pad(std::to_string(c.n), 8) + pad(fmt3(c.mae_m), 12) +
           fmt3(c.rmse_m) + "\n";
  }
  out += pad(report.label, 14) + pad("overall", 14) + pad(std::to_string(report.n), 8) + pad(fmt3(report.mae_m), 12) +
         fmt3(report.rmse_m) + "\n";
  if (report.n_missing > 0) {
    out += "missing predictions: " + std::to_string(report.n_missing) + " (" + report.missing_policy + ")\n";
  }
  if (report.road) {
    out += "road distance (px): MAE " + fmt3(report.road->mae_px) + ", RMSE " + fmt3(report.road->rmse_px) +
           " over " + std::to_string(report.road->n) + "\n";
  }
  return out;
}

MetricsReport report_from_json(std::string_view text) {
  auto j = nlohmann::json::parse(text, nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw Error(ErrorCode::ParseError, "report is not a JSON object");
  try {
    MetricsReport r;
    r.label = j.at("label").get<std::string>();
    r.missing_policy = j.at("missing_policy").get<std::string>();
    r.n = j.at("n").get<std::size_t>();
    r.n_missing = j.at("n_missing").get<std::size_t>();
    r.mae_m = j.at("mae_m").get<double>();
    r.rmse_m = j.at("rmse_m").get<double>();
    if (!j.at("road").is_null()) {
      const auto& rd = j["road"];
      r.road = RoadMetrics{rd.at("n").get<std::size_t>(), rd.at("mae_px").get<double>(),
                           rd.at("rmse_px").get<double>(), rd.at("mae_m").get<double>()};
    }
    for (const auto& [city, c] : j.at("per_city").items()) {
      r.per_city[city] = {c.at("n").get<std::size_t>(), c.at("mae_m").get<double>(), c.at("rmse_m").get<double>()};
    }
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("bad report: ") + e.what());
  }
}

}  // namespace trajoracle
