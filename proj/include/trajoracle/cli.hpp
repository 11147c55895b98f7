#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "trajoracle/geo.hpp"

namespace trajoracle {

inline constexpr const char* kVersion = "0.1.0";

enum ExitCode : int { kExitOk = 0, kExitInput = 1, kExitEndpoint = 2, kExitPartial = 3 };

struct RawTrajectory {
  std::string traj_id;
  std::string city;
  std::vector<TimedPoint> points;  // file order
};

/// CSV with a header naming traj_id, t, lat, lon and optionally city, or
/// JSON-lines objects with the same keys, one observation per row. Rows are
/// grouped by traj_id in order of first appearance. Throws ParseError.
std::vector<RawTrajectory> parse_raw(std::string_view text);

struct StoredTrajectory {
  std::string traj_id;
  std::string city;
  Trajectory traj;
};

std::string trajectories_to_jsonl(const std::vector<StoredTrajectory>& trajs);
std::vector<StoredTrajectory> trajectories_from_jsonl(std::string_view text);

/// `key = value` lines; '#' starts a comment. Throws ParseError.
std::map<std::string, std::string> parse_config(std::string_view text);

std::string read_file(const std::filesystem::path& path);
/// Writes via a temporary file and rename.
void write_file(const std::filesystem::path& path, std::string_view bytes);

/// Entry point of the `trajoracle` executable; args exclude the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace trajoracle
