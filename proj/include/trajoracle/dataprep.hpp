#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "trajoracle/geo.hpp"
#include "trajoracle/oracle.hpp"
#include "trajoracle/oracle_client.hpp"
#include "trajoracle/raster.hpp"
#include "trajoracle/roadnet.hpp"

namespace trajoracle {

struct DatasetSplit {
  std::vector<std::string> train;
  std::vector<std::string> val;
  std::vector<std::string> test;
  std::uint64_t seed = 0;
};

/// Seeded shuffle, then 70/10/20 (train and val sizes rounded, test takes
/// the rest). Throws TooFewTrajectories below 10 ids, InvalidInput on
/// duplicate ids.
DatasetSplit make_split(std::span<const std::string> ids, std::uint64_t seed);

nlohmann::ordered_json split_to_json(const DatasetSplit& s);
DatasetSplit split_from_json(const nlohmann::json& j);

enum class SftTask { Localization, Cot };

struct SftMeta {
  std::string traj_id;
  int point_index = 0;  // 1..12 for localization, 13 for CoT
  std::optional<double> confidence;
};

struct SftRecord {
  std::string image_path;
  std::string prompt_text;
  std::string target_text;
  SftTask task = SftTask::Localization;
  SftMeta meta;
};

nlohmann::ordered_json record_to_json(const SftRecord& r);
SftRecord record_from_json(const nlohmann::json& j);

struct GridCell {
  int x = 0;
  int y = 0;
};

/// The 1000-grid cell holding a canvas point: floor of the rescaled
/// coordinate, clamped to [0, 999].
GridCell grid_cell(const PixelPoint& canvas_px, int width_px, int height_px) noexcept;

/// "(x,y),(x+1,y+1)".
std::string box_text(const GridCell& c);

/// `<|object_ref_start|>the {i}th point<|object_ref_end|><|box_start|>...<|box_end|>`.
std::string localization_target(int index, const GridCell& c);

/// One record per prefix point 1..12, all sharing `image_path`.
std::vector<SftRecord> make_localization_records(const std::string& traj_id, std::span<const GeoPoint> prefix,
                                                 const Viewport& vp, const std::string& image_path,
                                                 const PromptLibrary& prompts);

struct CotCandidate {
  std::string traj_id;
  int vgls_rounds_passed = 0;
  std::string cot_text;
  double confidence = 0.0;
  bool accepted = false;
  std::string reject_reason;  // empty when accepted
};

nlohmann::ordered_json candidate_to_json(const CotCandidate& c);
CotCandidate candidate_from_json(const nlohmann::json& j);

/// Last JSON object in `text` whose "confidence" is a number in [0, 1].
std::optional<double> parse_confidence(std::string_view text);

/// Generator reply with the confidence object removed and whitespace trimmed.
std::string strip_confidence(std::string_view text);

struct CotInput {
  std::string traj_id;
  std::vector<GeoPoint> points;  // 13: prefix plus the true next point
};

struct CotOptions {
  std::size_t max_accepted = 300;
  int gate_rounds = 5;
  double confidence_threshold = 0.75;
  int parse_retries = 2;
  std::uint64_t seed = 0;
  ViewportOptions viewport;
  RenderStyle style;
  /// Content-addressed image store; images are not written when unset.
  std::optional<std::filesystem::path> image_dir;
  /// Prefix put in front of "{sha256}.png" in SftRecord::image_path.
  std::string image_path_prefix = "images/";
};

struct CotResult {
  std::vector<CotCandidate> candidates;  // input order, up to the cap
  std::vector<SftRecord> records;        // one per accepted candidate
  std::size_t failed = 0;                // per-candidate errors, skipped
};

/// Gate each candidate with a VGLS run on its 12-point image (the true 13th
/// point must lie in the chosen half after every round), then ask the
/// generator for a CoT on the 13-point image and keep it when its
/// confidence exceeds the threshold. Stops once `max_accepted` are kept.
/// AuthError propagates; other per-candidate errors are counted and skipped.
CotResult run_cot_pipeline(std::span<const CotInput> inputs, const RoadNetwork& net, Oracle& oracle,
                           Oracle& generator, const PromptLibrary& prompts, const CotOptions& options = {});

/// `<think>\n{cot}\n</think>\n<answer>\n{box}\n</answer>`.
std::string cot_target(const std::string& cot_text, const GridCell& truth);

/// Writes `png` under `dir` as "{sha256}.png" (skipped if present) and
/// returns the file name.
std::string store_image(const std::filesystem::path& dir, std::span<const std::uint8_t> png);

/// Renders the base map plus the given points.
Canvas render_trajectory_image(const Viewport& vp, const RoadNetwork& net, std::span<const GeoPoint> points,
                               const RenderStyle& style = {});

}  // namespace trajoracle
