#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "trajoracle/raster.hpp"

namespace trajoracle {

/// Geometry of the VGLS round being asked about, for oracles that answer
/// from ground truth instead of from the image.
struct VglsQuestion {
  PixelRect region;
  SplitSpec split;
};

struct OracleRequest {
  std::string traj_id;
  std::string purpose;  // "vgls" or "cot"
  int round = 0;        // 1-based VGLS round, 0 otherwise
  int attempt = 0;
  std::string prompt_text;
  std::optional<VglsQuestion> vgls;
  /// Lazily produces the PNG the prompt refers to; mocks never call it.
  std::function<std::vector<std::uint8_t>()> image_png;

  /// Stable identity used by journals to detect already-answered requests.
  std::string key() const;
};

/// Anything that answers a prompt with raw text: a remote VLM or a mock.
/// Implementations used across threads must be safe for concurrent calls.
class Oracle {
 public:
  virtual ~Oracle() = default;
  virtual std::string ask(const OracleRequest& request) = 0;
};

}  // namespace trajoracle
