#pragma once

#include <optional>
#include <string>
#include <string_view>

#include "trajoracle/geo.hpp"
#include "trajoracle/roadnet.hpp"

namespace trajoracle {

/// Side of the square grid model answers are expressed on.
inline constexpr double kModelGrid = 1000.0;

inline constexpr double kDistanceRewardCutoffPx = 400.0;
inline constexpr double kRoadRewardCutoffPx = 40.0;
inline constexpr int kStepRewardTarget = 3;

struct ParsedResponse {
  std::optional<std::string> think_text;
  std::optional<std::string> answer_text;
  std::optional<PixelPoint> boxed_point;  // on the model grid
  bool has_think_tags = false;
  bool has_answer_tags = false;
  bool has_valid_tuple = false;
  int step_count = 0;

  friend bool operator==(const ParsedResponse&, const ParsedResponse&) = default;
};

/// Never throws. The think block is the first <think>...</think>; the answer
/// block is the first <answer>...</answer> after it (or anywhere when there
/// is no think block). A point is read from the answer block only: a box
/// "(x0,y0),(x1,y1)" yields its center, a lone "(x,y)" the point itself.
/// Coordinates must lie on [0, 1000].
ParsedResponse parse_response(std::string_view raw_text);

/// Canonical text form; parse_response(serialize_response(p)) == p.
std::string serialize_response(const ParsedResponse& p);

/// Distinct top-level enumerators ("1.", "2)", "Step 3") that start a line
/// of `think_text`, ignoring markdown emphasis and heading marks.
int count_steps(std::string_view think_text);

double distance_reward(const std::optional<PixelPoint>& pred, const PixelPoint& truth);
double road_reward(const std::optional<PixelPoint>& pred, const SegmentIndex& idx);
double format_reward(const ParsedResponse& p);
double step_reward(const ParsedResponse& p);

struct RewardWeights {
  double dis = 1.0;
  double road = 1.0;
  double format = 1.0;
  double step = 1.0;
};

struct RewardVector {
  double r_dis = 0.0;
  double r_road = 0.0;
  double r_format = 0.0;
  double r_step = 0.0;
  double total = 0.0;
};

/// Model-grid point to canvas pixels of the index's canvas.
PixelPoint grid_to_canvas(const PixelPoint& grid, int width_px, int height_px) noexcept;
PixelPoint canvas_to_grid(const PixelPoint& px, int width_px, int height_px) noexcept;

/// `truth` is in canvas pixels of `idx`; the parsed point is rescaled from
/// the model grid onto that canvas before either distance is taken.
RewardVector score_response(std::string_view raw_text, const PixelPoint& truth, const SegmentIndex& idx,
                            const RewardWeights& weights = {});

}  // namespace trajoracle
