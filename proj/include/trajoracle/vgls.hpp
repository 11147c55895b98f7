#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "trajoracle/geo.hpp"
#include "trajoracle/oracle.hpp"
#include "trajoracle/raster.hpp"
#include "trajoracle/roadnet.hpp"

namespace trajoracle {

enum class Choice { Blue, Yellow };

struct OracleAnswer {
  std::optional<Choice> choice;  // set only when parse_ok
  std::string raw_text;
  bool parse_ok = false;
};

/// Last JSON object in `raw_text` carrying "ANS" equal to 0 (blue) or 1
/// (yellow); digit strings are accepted.
OracleAnswer parse_vgls_answer(std::string_view raw_text);

/// Halves `r` across its longer side (ties split x) at the integer midpoint,
/// blue on the low half. Throws RegionTooSmall if a half would be < 2 px.
SplitSpec split_region(const PixelRect& r, int round);

/// The half a continuous point falls in; boundary points belong to Low.
Half half_containing(const SplitSpec& split, const PixelPoint& p) noexcept;

enum class UnparseablePolicy { Abort, CoinFlip };
enum class Resolution { Oracle, CoinFlip };

struct VglsRound {
  int round = 0;
  PixelRect before;
  SplitSpec split;
  std::vector<std::string> replies;  // one per attempt
  bool parse_ok = false;
  Choice choice = Choice::Blue;
  Resolution resolved_by = Resolution::Oracle;
  PixelRect after;
};

struct VglsTranscript {
  std::string traj_id;
  int planned_rounds = 0;
  std::vector<VglsRound> rounds;
  bool aborted = false;
  std::string abort_reason;
  PixelRect final_region;
  PixelPoint final_center_px;
  GeoPoint final_center_geo;
};

struct VglsOptions {
  int rounds = 10;
  int parse_retries = 2;
  UnparseablePolicy policy = UnparseablePolicy::CoinFlip;
  std::uint64_t seed = 0;
  RenderStyle style;
  std::string prompt_text;
  /// When set, each round's image is written as {traj_id}_round{k}.png.
  std::optional<std::string> image_dir;
};

/// Stepwise VGLS run; callers that gate on intermediate regions (the CoT
/// filter) drive it round by round, `run_vgls` drives it to completion.
class VglsSession {
 public:
  /// `render_base` yields the map with the trajectory drawn; it is invoked at
  /// most once and only if some round's image is actually needed.
  VglsSession(std::string traj_id, const Viewport& vp, std::function<Canvas()> render_base, Oracle& oracle,
              VglsOptions options);

  /// Runs one round; returns false once finished or aborted.
  bool step();
  bool done() const noexcept;

  const PixelRect& region() const noexcept { return region_; }
  /// Finalizes and returns the transcript.
  const VglsTranscript& transcript();

 private:
  const Canvas& base();
  std::vector<std::uint8_t> round_png(const PixelRect& region, const SplitSpec& split, int round);
  void finish();

  std::string traj_id_;
  Viewport vp_;
  std::function<Canvas()> render_base_;
  std::optional<Canvas> base_;
  Oracle& oracle_;
  VglsOptions options_;
  std::mt19937_64 rng_;
  PixelRect region_;
  VglsTranscript transcript_;
};

VglsTranscript run_vgls(const std::string& traj_id, std::span<const GeoPoint> prefix, const Viewport& vp,
                        const RoadNetwork& net, Oracle& oracle, const VglsOptions& options = {});

enum class MockKind { Perfect, Random, Noisy };

/// perfect: answers the half containing `truth`; random: fair coin;
/// noisy: correct with probability p. Deterministic given the seed.
std::unique_ptr<Oracle> make_mock_oracle(MockKind kind, PixelPoint truth, double p = 1.0, std::uint64_t seed = 0);

/// Replays the recorded replies of a transcript, attempt by attempt.
std::unique_ptr<Oracle> make_replay_oracle(const VglsTranscript& transcript);

std::string transcript_to_jsonl(const VglsTranscript& t);
VglsTranscript transcript_from_jsonl(std::string_view text);

std::uint64_t fnv1a64(std::string_view s) noexcept;

}  // namespace trajoracle
